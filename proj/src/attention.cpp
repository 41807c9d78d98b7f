#include "mcdc/attention.hpp"

#include <cmath>

#include "mcdc/error.hpp"

namespace mcdc::attention {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

CnnAttentionHead CnnAttentionHead::init(std::size_t kernel_size, Rng& rng) {
  if (kernel_size == 0) throw GeometryError("attention head: kernel size must be >= 1");
  CnnAttentionHead h;
  h.kernel_q = glorot_uniform(1, kernel_size, kernel_size, kernel_size, rng);
  h.kernel_k = glorot_uniform(1, kernel_size, kernel_size, kernel_size, rng);
  h.kernel_v = glorot_uniform(1, kernel_size, kernel_size, kernel_size, rng);
  return h;
}

MatrixAttentionHead MatrixAttentionHead::init(std::size_t feature_dim, Rng& rng) {
  MatrixAttentionHead h;
  h.w_q = glorot_uniform(feature_dim, feature_dim, feature_dim, feature_dim, rng);
  h.w_k = glorot_uniform(feature_dim, feature_dim, feature_dim, feature_dim, rng);
  h.w_v = glorot_uniform(feature_dim, feature_dim, feature_dim, feature_dim, rng);
  return h;
}

Qkv cnn_qkv(ad::Tape& t, ad::Var input, const CnnHeadVars& head) {
  // conv1d slides along rows, so put tokens on rows first.
  const ad::Var tokens_by_features = ad::transpose(t, input);
  auto project = [&](ad::Var kernel) {
    const SamePadding pad = same_padding(t.value(kernel).cols());
    return ad::transpose(t, ad::conv1d(t, tokens_by_features, kernel, 1, pad.left, pad.right));
  };
  return {project(head.kernel_q), project(head.kernel_k), project(head.kernel_v)};
}

Qkv matrix_qkv(ad::Tape& t, ad::Var input, const MatrixHeadVars& head) {
  return {ad::matmul(t, head.w_q, input), ad::matmul(t, head.w_k, input),
          ad::matmul(t, head.w_v, input)};
}

ad::Var attention_map(ad::Tape& t, ad::Var q, ad::Var k) {
  const Tensor& qv = t.value(q);
  const Tensor& kv = t.value(k);
  if (!qv.same_shape(kv)) {
    throw DimensionError("attention_map: Q " + qv.shape_string() + " and K " +
                         kv.shape_string() + " differ");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.rows()));
  const ad::Var scores = ad::scale(t, ad::matmul(t, ad::transpose(t, k), q), inv_sqrt_d);
  return ad::softmax(t, scores, ad::Axis::Col);
}

ad::Var attend(ad::Tape& t, ad::Var v, ad::Var map) {
  const Tensor& vv = t.value(v);
  const Tensor& mv = t.value(map);
  if (mv.rows() != mv.cols() || mv.rows() != vv.cols()) {
    throw DimensionError("attend: map " + mv.shape_string() + " does not fit V " +
                         vv.shape_string());
  }
  return ad::matmul(t, v, map);
}

ad::Var cnn_attention(ad::Tape& t, ad::Var input, const CnnHeadVars& head) {
  const Qkv qkv = cnn_qkv(t, input, head);
  return attend(t, qkv.v, attention_map(t, qkv.q, qkv.k));
}

ad::Var matrix_attention(ad::Tape& t, ad::Var input, const MatrixHeadVars& head) {
  const Tensor& w = t.value(head.w_q);
  const Tensor& x = t.value(input);
  if (w.cols() != x.rows()) {
    throw DimensionError("matrix_attention: W " + w.shape_string() + " cannot project input " +
                         x.shape_string());
  }
  const Qkv qkv = matrix_qkv(t, input, head);
  return attend(t, qkv.v, attention_map(t, qkv.q, qkv.k));
}

Tensor attention_map(const Tensor& q, const Tensor& k) {
  ad::Tape t;
  return t.value(attention_map(t, t.constant(q), t.constant(k)));
}

Tensor attend(const Tensor& v, const Tensor& map) {
  ad::Tape t;
  return t.value(attend(t, t.constant(v), t.constant(map)));
}

Tensor cnn_attention(const Tensor& input, const CnnAttentionHead& head) {
  ad::Tape t;
  const CnnHeadVars vars{t.constant(head.kernel_q), t.constant(head.kernel_k),
                         t.constant(head.kernel_v)};
  return t.value(cnn_attention(t, t.constant(input), vars));
}

Tensor matrix_attention(const Tensor& input, const MatrixAttentionHead& head) {
  ad::Tape t;
  const MatrixHeadVars vars{t.constant(head.w_q), t.constant(head.w_k), t.constant(head.w_v)};
  return t.value(matrix_attention(t, t.constant(input), vars));
}

}  // namespace mcdc::attention
