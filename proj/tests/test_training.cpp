#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mcdc/baselines.hpp"
#include "mcdc/error.hpp"
#include "mcdc/random.hpp"
#include "mcdc/training.hpp"

using namespace mcdc;
using namespace mcdc::training;
using data::CdgdWindow;

namespace {

McdcHyper tiny_hyper(std::size_t classes = 2) {
  McdcHyper h;
  h.temporal = 8;
  h.heads = 2;
  h.temporal_kernel = 3;
  h.channel_kernel = 4;
  h.ffn_hidden = 8;
  h.classes = classes;
  return h;
}

// Class 1 lifts the first two gases; every entry carries unit noise.
std::vector<CdgdWindow> separable(std::size_t n, std::uint64_t seed, bool flip = false) {
  Rng rng(seed);
  std::vector<CdgdWindow> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool one = i % 2 == 1;
    out[i].transformer_id = "T" + std::to_string(i);
    out[i].label = (one != flip) ? Condition::LT : Condition::NC;
    out[i].x = Tensor(kNumGases, 8);
    for (std::size_t g = 0; g < kNumGases; ++g)
      for (std::size_t t = 0; t < 8; ++t)
        out[i].x(g, t) = 0.3 * rng.normal() + ((one && g < 2) ? 1.5 : -0.5);
  }
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 3;
  c.threads = 1;
  c.patience = kNoEarlyStop;
  return c;
}

bool same_history(const TrainHistory& a, const TrainHistory& b) {
  if (a.fold != b.fold || a.best_epoch != b.best_epoch || a.stopped_early != b.stopped_early ||
      a.epochs.size() != b.epochs.size())
    return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    if (x.epoch != y.epoch || x.train_loss != y.train_loss || x.val_loss != y.val_loss ||
        x.val_accuracy != y.val_accuracy || x.lr != y.lr)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lr schedule: piecewise constant with inclusive decay epochs") {
  const TrainConfig c;
  CHECK(lr_schedule(0, c) == 0.01);
  CHECK(lr_schedule(499, c) == 0.01);
  CHECK(lr_schedule(500, c) == 0.001);
  CHECK(lr_schedule(749, c) == 0.001);
  CHECK(lr_schedule(750, c) == 0.0002);
  CHECK(lr_schedule(999, c) == 0.0002);
  for (std::size_t e = 1; e < 1200; ++e) CHECK(lr_schedule(e, c) <= lr_schedule(e - 1, c));
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.decay = {{10, 0.1}, {5, 0.01}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adam: first steps match the hand recurrence") {
  const TrainConfig c;
  std::vector<Tensor> p = {Tensor(1, 1, 0.0)};
  std::vector<Tensor> g = {Tensor(1, 1, 1.0)};
  auto s = AdamState::zeros_like(p);
  adam_step(p, g, s, 0.01, c);
  CHECK(p[0][0] == doctest::Approx(-0.01).epsilon(1e-9));
  adam_step(p, g, s, 0.01, c);
  CHECK(p[0][0] == doctest::Approx(-0.02).epsilon(1e-9));

  // Zero gradient on a fresh state leaves the parameters alone.
  std::vector<Tensor> q = {Tensor(2, 3, 0.7)};
  std::vector<Tensor> z = {Tensor(2, 3, 0.0)};
  auto sz = AdamState::zeros_like(q);
  adam_step(q, z, sz, 0.01, c);
  CHECK(q[0] == Tensor(2, 3, 0.7));

  // Random gradient stream against a scalar re-derivation.
  Rng rng(4);
  std::vector<Tensor> r = {Tensor(1, 1, 0.2)};
  auto sr = AdamState::zeros_like(r);
  double theta = 0.2, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double grad = rng.normal();
    adam_step(r, std::vector<Tensor>{Tensor(1, 1, grad)}, sr, 0.003, c);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    theta -= 0.003 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(r[0][0] == doctest::Approx(theta).epsilon(1e-12));
  }

  std::vector<Tensor> bad = {Tensor(1, 2)};
  CHECK_THROWS_AS(adam_step(p, bad, s, 0.01, c), DimensionError);
}

TEST_CASE("fresh seven-class model starts near ln 7") {
  McdcHyper h = tiny_hyper(kNumConditions);
  const McdcModel m(h, 5);
  auto windows = separable(40, 1);
  for (std::size_t i = 0; i < windows.size(); ++i) windows[i].label = static_cast<Condition>(i % 7);
  CHECK(evaluate(m, windows).loss == doctest::Approx(std::log(7.0)).epsilon(0.1));
  CHECK(evaluate(McdcModel::zeros(h), windows).loss == doctest::Approx(std::log(7.0)));
}

TEST_CASE("separable toy set is learned") {
  const auto train = separable(20, 1);
  const auto val = separable(20, 2);
  const McdcModel init(tiny_hyper(), 7);
  const auto r = train_fold(init, train, val, quick(200));
  CHECK(r.history.epochs.size() <= 200);
  CHECK(r.best_val_accuracy == 1.0);
  CHECK(evaluate(*r.model, val).accuracy == 1.0);
  double best_train = 1e9;
  for (const auto& e : r.history.epochs) best_train = std::min(best_train, e.train_loss);
  CHECK(best_train < 0.1);
  CHECK(r.history.epochs.front().lr == 0.01);
  CHECK_THROWS_AS(train_fold(init, {}, val, quick(2)), DataError);
}

TEST_CASE("early stopping restores the best observed validation loss") {
  const auto train = separable(20, 1);
  const auto val = separable(20, 2, /*flip=*/true);
  const McdcModel init(tiny_hyper(), 7);
  TrainConfig c = quick(300);
  c.patience = 5;
  const auto r = train_fold(init, train, val, c);
  CHECK(r.history.stopped_early);
  CHECK(r.history.epochs.size() == r.history.best_epoch + c.patience + 1);
  double lowest = 1e9;
  for (const auto& e : r.history.epochs) lowest = std::min(lowest, e.val_loss);
  CHECK(r.best_val_loss == lowest);
  CHECK(r.history.epochs[r.history.best_epoch].val_loss == lowest);
  CHECK(evaluate(*r.model, val).loss == doctest::Approx(lowest).epsilon(1e-12));
}

TEST_CASE("empty validation set runs every epoch and keeps the final parameters") {
  const auto train = separable(10, 1);
  const AnnModel init(AnnHyper{8, 4, 4, 2, AnnInput::LastDay}, 2);
  const auto r = train_fold(init, train, {}, quick(7));
  CHECK(r.history.epochs.size() == 7);
  CHECK(std::isnan(r.best_val_accuracy));
  CHECK_FALSE(r.model->params() == init.params());
}

TEST_CASE("training is deterministic and independent of worker count") {
  const auto train = separable(30, 1);
  const auto val = separable(10, 2);
  const McdcModel init(tiny_hyper(), 9);
  TrainConfig c = quick(6);
  const auto a = train_fold(init, train, val, c);
  const auto b = train_fold(init, train, val, c);
  c.threads = 3;
  const auto d = train_fold(init, train, val, c);
  CHECK(a.model->params() == b.model->params());
  CHECK(a.model->params() == d.model->params());
  CHECK(same_history(a.history, b.history));
  CHECK(same_history(a.history, d.history));
  c.seed = 4;
  CHECK_FALSE(train_fold(init, train, val, c).model->params() == a.model->params());
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  const auto w = separable(5, 3);
  const McdcModel m(tiny_hyper(), 1);
  const std::vector<std::size_t> batch = {4, 0, 2};
  const auto lg = batch_gradient(m, w, batch, 2);
  double loss = 0.0;
  std::vector<Tensor> sum;
  for (auto i : batch) {
    const auto s = loss_and_grad(m, w[i].x, condition_code(w[i].label));
    loss += s.loss;
    if (sum.empty()) sum = s.grads;
    else
      for (std::size_t p = 0; p < sum.size(); ++p)
        for (std::size_t k = 0; k < sum[p].size(); ++k) sum[p][k] += s.grads[p][k];
  }
  CHECK(lg.loss == doctest::Approx(loss / 3.0));
  for (std::size_t p = 0; p < sum.size(); ++p)
    for (std::size_t k = 0; k < sum[p].size(); ++k)
      CHECK(lg.grads[p][k] == doctest::Approx(sum[p][k] / 3.0));
}

TEST_CASE("cross validation: four folds, disjoint validation, mean curve") {
  auto windows = separable(48, 5);
  const auto plan = data::split(windows, data::SplitMode::SampleWise, 0.25, 2, 4);
  const McdcModel init(tiny_hyper(), 3);
  TrainConfig c = quick(12);
  c.patience = 3;
  const auto cv = cross_validate(init, windows, plan, c);
  REQUIRE(cv.folds.size() == 4);

  std::set<std::size_t> seen;
  for (const auto& f : plan.folds)
    for (auto i : f) CHECK(seen.insert(i).second);
  CHECK(seen.size() == plan.train.size());

  for (std::size_t f = 0; f < 4; ++f) {
    CHECK(cv.folds[f].history.fold == f);
    CHECK(cv.folds[f].best_val_accuracy <= cv.folds[cv.best_fold].best_val_accuracy);
  }
  for (std::size_t f = 0; f < cv.best_fold; ++f)
    CHECK(cv.folds[f].best_val_accuracy < cv.folds[cv.best_fold].best_val_accuracy);

  std::size_t longest = 0;
  for (const auto& f : cv.folds) longest = std::max(longest, f.history.epochs.size());
  REQUIRE(cv.mean_curve.size() == longest);
  for (std::size_t e = 0; e < longest; ++e) {
    double loss = 0.0, acc = 0.0;
    std::size_t n = 0;
    for (const auto& f : cv.folds) {
      if (e >= f.history.epochs.size()) continue;
      loss += f.history.epochs[e].train_loss;
      acc += f.history.epochs[e].val_accuracy;
      ++n;
    }
    CHECK(cv.mean_curve[e].folds == n);
    CHECK(cv.mean_curve[e].loss == doctest::Approx(loss / n));
    CHECK(cv.mean_curve[e].val_accuracy == doctest::Approx(acc / n));
  }

  const std::string csv = history_csv(cv);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,fold,loss,val_accuracy,lr");
  std::size_t rows = 0, mean_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find(",mean,") != std::string::npos) ++mean_rows;
  }
  std::size_t fold_rows = 0;
  for (const auto& f : cv.folds) fold_rows += f.history.epochs.size();
  CHECK(mean_rows == longest);
  CHECK(rows == fold_rows + longest);
}
