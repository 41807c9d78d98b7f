#pragma once

// Slow, loop-for-loop reference implementations. They share no code with the
// production paths and exist only to cross-check them.

#include <cstddef>
#include <span>

#include "mcdc/tensor.hpp"

namespace mcdc::oracle {

// Cross-correlation of every row with `kernel`, via an explicitly padded copy.
Tensor conv1d(const Tensor& signal, std::span<const double> kernel, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right);

Tensor matmul(const Tensor& a, const Tensor& b);

// softmax over each column of K^T Q / sqrt(rows).
Tensor attention_map(const Tensor& q, const Tensor& k);

// Two-sided rank-sum p-value by visiting every size-n1 subset of the pooled
// ranks. Midranks are computed by counting.
double rank_sum_p_enumerate(std::span<const double> a, std::span<const double> b);
double rank_sum_enumerate_statistic(std::span<const double> a, std::span<const double> b);

// P(score_pos > score_neg) + 0.5 P(tie) over every positive/negative pair.
double mann_whitney_auc(std::span<const double> scores, std::span<const char> positive);

}  // namespace mcdc::oracle
