#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "mcdc/attention.hpp"
#include "mcdc/error.hpp"
#include "mcdc/oracles.hpp"

using namespace mcdc;
using namespace mcdc::attention;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

Qkv run_cnn_qkv(ad::Tape& t, const Tensor& input, const CnnAttentionHead& h) {
  return cnn_qkv(t, t.constant(input),
                 {t.constant(h.kernel_q), t.constant(h.kernel_k), t.constant(h.kernel_v)});
}

void check_column_stochastic(const Tensor& map, double tol) {
  for (std::size_t c = 0; c < map.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < map.rows(); ++r) {
      CHECK(map(r, c) >= 0.0);
      CHECK(map(r, c) <= 1.0);
      s += map(r, c);
    }
    CHECK(std::abs(s - 1.0) <= tol);
  }
}

}  // namespace

TEST_CASE("same padding keeps the length") {
  for (std::size_t k = 1; k <= 9; ++k) {
    const auto p = same_padding(k);
    CHECK(p.left + p.right == k - 1);
    CHECK(p.right >= p.left);
  }
  CHECK(same_padding(6).left == 2);
  CHECK(same_padding(6).right == 3);
}

TEST_CASE("cnn_qkv shapes on both routes") {
  Rng rng(1);
  const Tensor x = random_tensor(5, 8, rng);
  {
    ad::Tape t;
    const auto qkv = run_cnn_qkv(t, x, CnnAttentionHead::init(5, rng));
    CHECK(t.value(qkv.q).shape_string() == "5x8");
    CHECK(t.value(qkv.k).shape_string() == "5x8");
    CHECK(t.value(qkv.v).shape_string() == "5x8");
  }
  {
    // Channel route: tokens are the 5 gases, features are the 8 days.
    ad::Tape t;
    const auto qkv = run_cnn_qkv(t, x.transposed(), CnnAttentionHead::init(6, rng));
    CHECK(t.value(qkv.q).shape_string() == "8x5");
    CHECK(t.value(attention_map(t, qkv.q, qkv.k)).shape_string() == "5x5");
  }
}

TEST_CASE("identity query kernel reproduces the input") {
  Rng rng(2);
  const Tensor x = random_tensor(5, 8, rng);
  CnnAttentionHead h{Tensor(1, 1, 1.0), Tensor(1, 1, 0.0), Tensor(1, 1, 0.0)};
  ad::Tape t;
  const auto qkv = run_cnn_qkv(t, x, h);
  CHECK(t.value(qkv.q) == x);
  CHECK(t.value(qkv.k) == Tensor(5, 8));
  CHECK(t.value(qkv.v) == Tensor(5, 8));
}

TEST_CASE("convolution slides along the feature axis of each token") {
  const Tensor x = Tensor::from_rows({{1, 10}, {2, 20}, {3, 30}});
  CnnAttentionHead h{Tensor::from_rows({{1, 0, -1}}), Tensor(1, 3), Tensor(1, 3)};
  ad::Tape t;
  const Tensor q = t.value(run_cnn_qkv(t, x, h).q);
  // Column 0 is token [1,2,3]; cross-correlation with [1,0,-1] and zero padding.
  CHECK(q(0, 0) == -2);
  CHECK(q(1, 0) == -2);
  CHECK(q(2, 0) == 2);
  CHECK(q(0, 1) == -20);
}

TEST_CASE("attention map examples") {
  const Tensor same(3, 4, 0.7);
  const Tensor uni = attention_map(same, same);
  for (double v : uni.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor single = attention_map(Tensor(3, 1, 2.0), Tensor(3, 1, -1.0));
  CHECK(single == Tensor(1, 1, 1.0));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng);
    const Tensor fast = attention_map(q, k), slow = oracle::attention_map(q, k);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast[i] - slow[i]) <= 1e-12);
  }
  CHECK_THROWS_AS(attention_map(Tensor(3, 4), Tensor(3, 5)), DimensionError);
  CHECK_THROWS_AS(attention_map(Tensor(3, 4), Tensor(2, 4)), DimensionError);
}

TEST_CASE("attention map columns are stochastic for extreme inputs") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = trial % 2 == 0 ? 50.0 : 1.0;
    const Tensor q = random_tensor(5, 6, rng, scale), k = random_tensor(5, 6, rng, scale);
    check_column_stochastic(attention_map(q, k), 1e-9);
  }
}

TEST_CASE("attention map is invariant to a constant score shift") {
  // Appending a feature row of ones to Q and c to K adds c/sqrt(d') to every
  // score; compare against the same scaling without the shift.
  Rng rng(5);
  const Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng);
  Tensor q2(4, 4), k2(4, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      q2(r, c) = q(r, c);
      k2(r, c) = k(r, c);
    }
  Tensor k3 = k2;
  for (std::size_t c = 0; c < 4; ++c) {
    q2(3, c) = 1.0;
    k3(3, c) = 2.5;
  }
  const Tensor a = attention_map(q2, k2), b = attention_map(q2, k3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("attend examples") {
  Rng rng(6);
  const Tensor v = random_tensor(3, 4, rng);
  CHECK(attend(v, Tensor::identity(4)) == v);

  const Tensor out = attend(v, Tensor(4, 4, 0.25));
  for (std::size_t r = 0; r < 3; ++r) {
    const double mean = (v(r, 0) + v(r, 1) + v(r, 2) + v(r, 3)) / 4.0;
    for (std::size_t c = 0; c < 4; ++c) CHECK(out(r, c) == doctest::Approx(mean).epsilon(1e-14));
  }

  for (int trial = 0; trial < 50; ++trial) {
    const Tensor vv = random_tensor(3, 5, rng);
    const Tensor map = attention_map(random_tensor(2, 5, rng), random_tensor(2, 5, rng));
    const Tensor o = attend(vv, map);
    for (std::size_t r = 0; r < 3; ++r) {
      double lo = vv(r, 0), hi = vv(r, 0);
      for (std::size_t c = 1; c < 5; ++c) {
        lo = std::min(lo, vv(r, c));
        hi = std::max(hi, vv(r, c));
      }
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(o(r, c) >= lo - 1e-12);
        CHECK(o(r, c) <= hi + 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(attend(v, Tensor(3, 3)), DimensionError);
}

TEST_CASE("cnn and matrix attention are shape-compatible drop-ins") {
  Rng rng(7);
  const Tensor x = random_tensor(5, 8, rng);
  const auto conv = CnnAttentionHead::init(5, rng);
  const auto mat = MatrixAttentionHead::init(5, rng);
  CHECK(cnn_attention(x, conv).shape_string() == "5x8");
  CHECK(matrix_attention(x, mat).shape_string() == "5x8");
  const Tensor xt = x.transposed();
  CHECK(cnn_attention(xt, CnnAttentionHead::init(6, rng)).shape_string() ==
        matrix_attention(xt, MatrixAttentionHead::init(8, rng)).shape_string());

  const MatrixAttentionHead ident{Tensor::identity(5), Tensor::identity(5), Tensor::identity(5)};
  const Tensor raw = attend(x, attention_map(x, x));
  CHECK(matrix_attention(x, ident) == raw);

  CHECK_THROWS_AS(matrix_attention(x, MatrixAttentionHead::init(4, rng)), DimensionError);
}

TEST_CASE("zero kernels give zero output") {
  Rng rng(8);
  const CnnAttentionHead zero{Tensor(1, 3), Tensor(1, 3), Tensor(1, 3)};
  CHECK(cnn_attention(random_tensor(5, 8, rng), zero) == Tensor(5, 8));
}

TEST_CASE("parameter counts") {
  Rng rng(9);
  CHECK(CnnAttentionHead::init(5, rng).parameter_count() == 15);
  CHECK(MatrixAttentionHead::init(5, rng).parameter_count() == 75);
  for (std::size_t d = 2; d <= 12; ++d)
    for (std::size_t k = 1; k <= d; ++k)
      CHECK(CnnAttentionHead::init(k, rng).parameter_count() <
            MatrixAttentionHead::init(d, rng).parameter_count());
}

TEST_CASE("initialisation bounds and determinism") {
  Rng a(10), b(10);
  const auto h1 = CnnAttentionHead::init(5, a);
  const auto h2 = CnnAttentionHead::init(5, b);
  CHECK(h1.kernel_q == h2.kernel_q);
  CHECK_FALSE(h1.kernel_q == h1.kernel_k);
  Rng rng(11);
  const Tensor g = glorot_uniform(20, 30, 20, 30, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : g.values()) CHECK(std::abs(v) <= bound);
  Rng c(12), d(12);
  CHECK(cnn_attention(random_tensor(5, 8, c), CnnAttentionHead::init(3, c)) ==
        cnn_attention(random_tensor(5, 8, d), CnnAttentionHead::init(3, d)));
}
