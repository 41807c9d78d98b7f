#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mcdc/baselines.hpp"
#include "mcdc/error.hpp"
#include "mcdc/evaluation.hpp"
#include "mcdc/oracles.hpp"
#include "mcdc/random.hpp"

using namespace mcdc;
using namespace mcdc::eval;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n, std::size_t levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.index(levels));
  return v;
}

ConfusionMatrix random_cm(Rng& rng, std::size_t classes) {
  ConfusionMatrix cm(classes);
  for (std::size_t t = 0; t < classes; ++t)
    for (std::size_t p = 0; p < classes; ++p) cm.at(t, p) = rng.index(6);
  cm.at(0, 0) += 1;
  return cm;
}

}  // namespace

TEST_CASE("confusion: counts and errors") {
  const std::vector<std::size_t> truth = {0, 1, 2, 3, 4, 5, 6};
  const auto diag = confusion(truth, truth);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) CHECK(diag.at(i, j) == (i == j ? 1u : 0u));
  CHECK(diag.diagonal_dominant());

  const std::vector<std::size_t> t1 = {2}, p1 = {5};
  const auto one = confusion(t1, p1);
  CHECK(one.at(2, 5) == 1);
  CHECK(one.total() == 1);

  const std::vector<std::size_t> t = {0, 0, 1, 2, 2, 2}, p = {0, 1, 1, 2, 0, 2};
  const auto cm = confusion(t, p, 3);
  CHECK(cm.row_sum(0) == 2);
  CHECK(cm.row_sum(2) == 3);
  CHECK(cm.col_sum(0) == 2);
  CHECK(cm.trace() == 4);
  CHECK_FALSE(cm.diagonal_dominant());

  const std::vector<std::size_t> shorter = {0};
  CHECK_THROWS_AS(confusion(t, shorter, 3), DimensionError);
  const std::vector<std::size_t> bad = {7};
  CHECK_THROWS_AS(confusion(bad, bad), IndexError);
}

TEST_CASE("metrics: binary substitution") {
  ConfusionMatrix cm(2);
  cm.at(1, 1) = 3;  // TP
  cm.at(0, 0) = 5;  // TN
  cm.at(0, 1) = 1;  // FP
  cm.at(1, 0) = 1;  // FN
  const auto m = metrics(cm);
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.per_class[1].tp == 3);
  CHECK(m.per_class[1].tn == 5);
  CHECK(m.per_class[1].precision == doctest::Approx(0.75));
  CHECK(m.per_class[1].recall == doctest::Approx(0.75));
  CHECK(m.per_class[1].f1 == doctest::Approx(0.75));
}

TEST_CASE("metrics: diagonal, absent classes and the empty matrix") {
  const std::vector<std::size_t> truth = {0, 1, 2, 3, 4, 5, 6, 6};
  const auto m = metrics(confusion(truth, truth));
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
  CHECK(m.macro_f1 == 1.0);

  const std::vector<std::size_t> partial = {0, 1, 1};
  const auto q = metrics(confusion(partial, partial));
  CHECK(q.per_class[4].precision == 0.0);
  CHECK(q.per_class[4].recall == 0.0);
  CHECK(q.per_class[4].f1 == 0.0);
  CHECK(q.macro_f1 == doctest::Approx(2.0 / 7.0));

  CHECK_THROWS_AS(metrics(ConfusionMatrix(7)), DataError);
}

TEST_CASE("metrics: bounds, recall identity and permutation invariance") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cm = random_cm(rng, 7);
    const auto m = metrics(cm);
    CHECK(m.macro_f1 <= 1.0);
    CHECK(m.macro_f1 >= 0.0);
    CHECK(m.accuracy == doctest::Approx(double(cm.trace()) / double(cm.total())));
    for (std::size_t c = 0; c < 7; ++c) {
      const double rowsum = static_cast<double>(cm.row_sum(c));
      CHECK(m.per_class[c].recall == (rowsum > 0 ? double(cm.at(c, c)) / rowsum : 0.0));
    }
  }
  std::vector<std::size_t> t(60), p(60);
  for (std::size_t i = 0; i < 60; ++i) {
    t[i] = rng.index(7);
    p[i] = rng.index(7);
  }
  const auto before = metrics(confusion(t, p));
  std::vector<std::size_t> order(60);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> t2(60), p2(60);
  for (std::size_t i = 0; i < 60; ++i) {
    t2[i] = t[order[i]];
    p2[i] = p[order[i]];
  }
  const auto after = metrics(confusion(t2, p2));
  CHECK(after.accuracy == before.accuracy);
  CHECK(after.macro_f1 == before.macro_f1);
  CHECK(after.macro_precision == before.macro_precision);
}

TEST_CASE("roc: separating and constant scores") {
  const std::vector<double> s = {0.9, 0.8, 0.3, 0.1};
  const std::vector<char> pos = {1, 1, 0, 0};
  const auto c = roc_curve(s, pos, "x");
  CHECK(*c.auc == 1.0);
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(std::isinf(c.points.front().threshold));
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);

  const std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
  CHECK(*roc_curve(flat, pos).auc == 0.5);
  const std::vector<char> none = {0, 0, 0, 0};
  CHECK_FALSE(roc_curve(s, none).auc.has_value());
}

TEST_CASE("roc: trapezoid area equals the rank statistic") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.index(40);
    const bool ties = trial % 2 == 0;
    std::vector<double> s(n);
    std::vector<char> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ties ? static_cast<double>(rng.index(5)) / 4.0 : rng.uniform();
      pos[i] = rng.uniform() < 0.4;
    }
    pos[0] = 1;
    pos[1] = 0;
    const auto c = roc_curve(s, pos);
    CHECK(std::abs(*c.auc - oracle::mann_whitney_auc(s, pos)) < 1e-9);
  }
}

TEST_CASE("roc: per-class, macro and micro reports") {
  Rng rng(5);
  const std::size_t n = 50;
  std::vector<std::size_t> truth(n);
  Tensor probs(n, 7);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = rng.index(6);  // class 6 never occurs
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) sum += probs(i, c) = rng.uniform() + (c == truth[i]);
    for (std::size_t c = 0; c < 7; ++c) probs(i, c) /= sum;
  }
  const auto r = roc_auc(truth, probs);
  REQUIRE(r.per_class.size() == 7);
  CHECK(r.per_class[0].label == "NC");
  CHECK_FALSE(r.per_class[6].auc.has_value());
  double mean = 0.0;
  for (std::size_t c = 0; c < 6; ++c) {
    std::vector<double> s(n);
    std::vector<char> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs(i, c);
      pos[i] = truth[i] == c;
    }
    CHECK(*r.per_class[c].auc == doctest::Approx(oracle::mann_whitney_auc(s, pos)));
    mean += *r.per_class[c].auc;
  }
  CHECK(*r.macro_auc == doctest::Approx(mean / 6.0));

  std::vector<double> pooled;
  std::vector<char> pooled_pos;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 7; ++c) {
      pooled.push_back(probs(i, c));
      pooled_pos.push_back(truth[i] == c);
    }
  CHECK(*r.micro.auc == doctest::Approx(oracle::mann_whitney_auc(pooled, pooled_pos)));

  Tensor bad = probs;
  bad(0, 0) += 0.5;
  CHECK_THROWS_AS(roc_auc(truth, bad), ContractError);
}

TEST_CASE("wilcoxon: known values") {
  const std::vector<double> a = {1, 2}, b = {3, 4};
  const auto r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.rank_sum == 3.0);
  CHECK(r.p_value == doctest::Approx(1.0 / 3.0));

  const std::vector<double> fives = {5, 5};
  CHECK(wilcoxon_rank_sum(fives, fives).p_value == doctest::Approx(1.0));

  const std::vector<double> empty;
  CHECK_THROWS(wilcoxon_rank_sum(empty, a));
}

TEST_CASE("wilcoxon: exact branch matches enumeration for n1, n2 <= 8") {
  Rng rng(11);
  for (std::size_t n1 = 1; n1 <= 8; ++n1) {
    for (std::size_t n2 = 1; n2 <= 8; ++n2) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto a = draw(rng, n1, trial == 0 ? 1000 : 4);
        const auto b = draw(rng, n2, trial == 0 ? 1000 : 4);
        const auto r = wilcoxon_exact(a, b);
        INFO("n1=", n1, " n2=", n2, " trial=", trial);
        CHECK(r.rank_sum == doctest::Approx(oracle::rank_sum_enumerate_statistic(a, b)));
        CHECK(std::abs(r.p_value - oracle::rank_sum_p_enumerate(a, b)) < 1e-12);
      }
    }
  }
}

TEST_CASE("wilcoxon: normal branch agrees with the exact one at n = 10 + 10") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(10), b(10);
    const double shift = 0.1 * static_cast<double>(trial % 10);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal() + shift;
    const auto e = wilcoxon_exact(a, b);
    const auto n = wilcoxon_normal(a, b);
    CHECK_FALSE(n.exact);
    CHECK(e.rank_sum == n.rank_sum);
    CHECK(std::abs(e.p_value - n.p_value) < 0.02);
  }
  std::vector<double> big_a(15, 1.0), big_b(15, 2.0);
  CHECK_FALSE(wilcoxon_rank_sum(big_a, big_b).exact);
  CHECK(wilcoxon_rank_sum(big_a, big_b).p_value < 1e-5);
}

TEST_CASE("repetition statistics") {
  const std::vector<double> v = {0.9, 0.8, 1.0, 0.7};
  const auto s = repetition_stats(v);
  CHECK(s.mean == doctest::Approx(0.85));
  CHECK(s.stddev == doctest::Approx(std::sqrt(0.0125)));
  CHECK(s.max_mean_error == doctest::Approx(0.15));
}

TEST_CASE("report json and roc csv") {
  const std::vector<std::size_t> truth = {0, 1, 1, 2};
  Tensor probs(4, 7, 0.0);
  probs(0, 0) = 1.0;
  probs(1, 1) = 0.6;
  probs(1, 2) = 0.4;
  probs(2, 2) = 1.0;
  probs(3, 2) = 1.0;
  const auto rep = make_report(truth, probs, "mcdc");
  CHECK(rep.samples == 4);
  CHECK(rep.core.accuracy == doctest::Approx(0.75));
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j.at("format") == "mcdc-report");
  CHECK(j.at("model_kind") == "mcdc");
  CHECK(j.at("table").at("Ac").get<double>() == doctest::Approx(0.75));
  CHECK(j.at("per_class").size() == 7);
  CHECK(j.at("confusion").size() == 7);

  const std::string csv = roc_csv(rep.roc);
  CHECK(csv.rfind("class,fpr,tpr,threshold\n", 0) == 0);
  CHECK(csv.find("NC,0,0,inf") != std::string::npos);
  CHECK(csv.find("micro,") != std::string::npos);
}

TEST_CASE("compare: identical models give identical accuracies and p = 1") {
  Rng rng(2);
  std::vector<data::CdgdWindow> windows(60);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto& w = windows[i];
    w.transformer_id = "T" + std::to_string(i % 12);
    w.label = static_cast<Condition>(i % 3);
    w.x = Tensor(kNumGases, 6);
    for (std::size_t g = 0; g < kNumGases; ++g)
      for (std::size_t t = 0; t < 6; ++t)
        w.x(g, t) = 10.0 + rng.normal() + (g == i % 3 ? 3.0 : 0.0);
  }
  AnnHyper h{6, 6, 6, kNumConditions, AnnInput::Window};
  const auto make = [h](std::uint64_t s) { return std::make_unique<AnnModel>(h, s); };
  const std::vector<ModelFactory> models = {{"a", make}, {"b", make}};
  CompareConfig cfg;
  cfg.repetitions = 3;
  cfg.seed = 4;
  cfg.single_fold = true;
  cfg.train.epochs = 5;
  cfg.train.batch_size = 16;
  cfg.train.threads = 1;
  const auto r = compare(models, windows, cfg);
  REQUIRE(r.models.size() == 2);
  CHECK(r.models[0].accuracies.size() == 3);
  CHECK(r.models[0].accuracies == r.models[1].accuracies);
  REQUIRE(r.p_values.size() == 1);
  CHECK(r.p_values[0].p_value == doctest::Approx(1.0));
  const auto& acc = r.models[0].accuracies;
  CHECK(r.models[0].mean_accuracy == doctest::Approx((acc[0] + acc[1] + acc[2]) / 3.0));
  CHECK(r.models[0].parameters == AnnModel(h, 0).params().scalar_count());

  const auto table = compare_table(r);
  CHECK(table.find("Macro-F1") != std::string::npos);
  CHECK(table.find("p(a, b)") != std::string::npos);
  const auto j = nlohmann::json::parse(compare_to_json(r));
  CHECK(j.at("models").size() == 2);

  cfg.repetitions = 1;
  const std::vector<ModelFactory> single = {{"a", make}};
  const auto one = compare(single, windows, cfg);
  CHECK(one.models[0].stddev == 0.0);
  CHECK(one.p_values.empty());
}
