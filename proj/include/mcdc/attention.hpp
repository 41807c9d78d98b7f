#pragma once

// Self-attention with convolution-derived Query/Key/Value (the 1DCNN
// variant) and the conventional learned-matrix variant it is compared
// against. Inputs are oriented features x tokens: each column is a token.

#include <cstddef>

#include "mcdc/autodiff.hpp"
#include "mcdc/random.hpp"
#include "mcdc/tensor.hpp"

namespace mcdc::attention {

enum class Kind { Conv, Matrix };

// Zero padding that keeps the convolved length equal to the input length
// (stride 1). Even kernels put the extra tap on the right.
struct SamePadding {
  std::size_t left;
  std::size_t right;
};
constexpr SamePadding same_padding(std::size_t kernel_size) {
  const std::size_t total = kernel_size - 1;
  return {total / 2, total - total / 2};
}

/// One head of 1DCNN-attention: three independent 1 x k filters.
struct CnnAttentionHead {
  Tensor kernel_q, kernel_k, kernel_v;

  std::size_t kernel_size() const { return kernel_q.cols(); }
  std::size_t parameter_count() const { return 3 * kernel_size(); }
  static CnnAttentionHead init(std::size_t kernel_size, Rng& rng);
};

/// One head of matrix attention: Q = W_q X etc., each W is d x d.
struct MatrixAttentionHead {
  Tensor w_q, w_k, w_v;

  std::size_t feature_dim() const { return w_q.rows(); }
  std::size_t parameter_count() const { return 3 * w_q.size(); }
  static MatrixAttentionHead init(std::size_t feature_dim, Rng& rng);
};

// Head parameters once placed on a tape.
struct CnnHeadVars {
  ad::Var kernel_q, kernel_k, kernel_v;
};
struct MatrixHeadVars {
  ad::Var w_q, w_k, w_v;
};

struct Qkv {
  ad::Var q, k, v;
};

// Convolves each token's feature column with the three kernels (stride 1,
// same padding). Q, K, V have the input's shape.
Qkv cnn_qkv(ad::Tape& t, ad::Var input, const CnnHeadVars& head);
Qkv matrix_qkv(ad::Tape& t, ad::Var input, const MatrixHeadVars& head);

// softmax(K^T Q / sqrt(d)) normalised over keys, so each column sums to 1.
// d is the shared feature-axis length of Q and K.
ad::Var attention_map(ad::Tape& t, ad::Var q, ad::Var k);

// V * map: column j is the map[:, j]-weighted mix of V's token columns.
ad::Var attend(ad::Tape& t, ad::Var v, ad::Var map);

ad::Var cnn_attention(ad::Tape& t, ad::Var input, const CnnHeadVars& head);
ad::Var matrix_attention(ad::Tape& t, ad::Var input, const MatrixHeadVars& head);

// Value-only conveniences.
Tensor attention_map(const Tensor& q, const Tensor& k);
Tensor attend(const Tensor& v, const Tensor& map);
Tensor cnn_attention(const Tensor& input, const CnnAttentionHead& head);
Tensor matrix_attention(const Tensor& input, const MatrixAttentionHead& head);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng);

}  // namespace mcdc::attention
