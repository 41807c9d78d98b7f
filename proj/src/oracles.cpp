#include "mcdc/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcdc/error.hpp"

namespace mcdc::oracle {

Tensor conv1d(const Tensor& signal, std::span<const double> kernel, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right) {
  const std::size_t k = kernel.size();
  const std::size_t padded = signal.cols() + pad_left + pad_right;
  if (k == 0 || stride == 0 || padded < k) throw GeometryError("oracle conv1d: no output");
  const std::size_t out_len = (padded - k) / stride + 1;
  Tensor out(signal.rows(), out_len);
  for (std::size_t r = 0; r < signal.rows(); ++r) {
    std::vector<double> row(padded, 0.0);
    for (std::size_t c = 0; c < signal.cols(); ++c) row[pad_left + c] = signal(r, c);
    for (std::size_t o = 0; o < out_len; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += row[o * stride + j] * kernel[j];
      out(r, o) = acc;
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw DimensionError("oracle matmul: inner sizes differ");
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < a.cols(); ++l) acc += a(i, l) * b(l, j);
      out(i, j) = acc;
    }
  return out;
}

Tensor attention_map(const Tensor& q, const Tensor& k) {
  const std::size_t d = q.rows(), n = q.cols();
  Tensor s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < d; ++f) dot += k(f, i) * q(f, j);
      s(i, j) = dot / std::sqrt(static_cast<double>(d));
    }
  for (std::size_t j = 0; j < n; ++j) {
    double top = s(0, j);
    for (std::size_t i = 1; i < n; ++i) top = std::max(top, s(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(s(i, j) - top);
    for (std::size_t i = 0; i < n; ++i) s(i, j) = std::exp(s(i, j) - top) / z;
  }
  return s;
}

namespace {

std::vector<double> counted_midranks(const std::vector<double>& pooled) {
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double v : pooled) {
      if (v < pooled[i]) less += 1.0;
      if (v == pooled[i]) equal += 1.0;
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  return ranks;
}

}  // namespace

double rank_sum_enumerate_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = counted_midranks(pooled);
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w += ranks[i];
  return w;
}

double rank_sum_p_enumerate(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = counted_midranks(pooled);
  const std::size_t n = pooled.size(), n1 = a.size();
  const double centre = static_cast<double>(n1) * static_cast<double>(n + 1) / 2.0;
  double observed = 0.0;
  for (std::size_t i = 0; i < n1; ++i) observed += ranks[i];
  const double dev = std::abs(observed - centre);

  // mask[i] == 1 selects pooled[i]; prev_permutation walks every arrangement.
  std::vector<char> mask(n, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n1), 1);
  double total = 0.0, extreme = 0.0;
  do {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) w += ranks[i];
    total += 1.0;
    if (std::abs(w - centre) >= dev - 1e-9) extreme += 1.0;
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return extreme / total;
}

double mann_whitney_auc(std::span<const double> scores, std::span<const char> positive) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace mcdc::oracle
