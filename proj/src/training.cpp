#include "mcdc/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mcdc/error.hpp"
#include "mcdc/random.hpp"

namespace mcdc::training {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("train: lr0 must be > 0");
  for (std::size_t i = 0; i < decay.size(); ++i) {
    if (i > 0 && decay[i].first <= decay[i - 1].first)
      throw ConfigError("train: decay epochs must be strictly increasing");
    if (!(decay[i].second > 0)) throw ConfigError("train: decayed rates must be > 0");
  }
  if (patience == 0) throw ConfigError("train: patience must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
    throw ConfigError("train: invalid Adam constants");
  if (folds < 2) throw ConfigError("train: folds must be >= 2");
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  double lr = config.lr0;
  for (const auto& [at, rate] : config.decay)
    if (epoch >= at) lr = rate;
  return lr;
}

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const TrainConfig& c) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = params[p];
    const Tensor& g = grads[p];
    if (!theta.same_shape(g) || !theta.same_shape(state.m[p])) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(p) + " (" +
                           theta.shape_string() + " vs " + g.shape_string() + ")");
    }
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

Evaluation evaluate(const Classifier& model, std::span<const data::CdgdWindow> windows,
                    std::size_t threads) {
  Evaluation ev;
  if (windows.empty()) return ev;
  std::vector<double> losses(windows.size());
  std::vector<char> correct(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const Tensor probs = forward(model, windows[i].x);
    const std::size_t label = condition_code(windows[i].label);
    losses[i] = ad::cross_entropy(probs.values(), label);
    correct[i] = argmax(probs.values()) == label;
  });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    total += losses[i];
    hits += correct[i] ? 1 : 0;
  }
  ev.loss = total / static_cast<double>(windows.size());
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(windows.size());
  return ev;
}

LossAndGrad batch_gradient(const Classifier& model, std::span<const data::CdgdWindow> windows,
                           std::span<const std::size_t> batch, std::size_t threads) {
  std::vector<LossAndGrad> per_sample(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto& w = windows[batch[i]];
    per_sample[i] = loss_and_grad(model, w.x, condition_code(w.label));
    per_sample[i].probs = Tensor();
  });
  LossAndGrad out;
  const ParamSet& ps = model.params();
  for (std::size_t p = 0; p < ps.size(); ++p) out.grads.emplace_back(ps[p].rows(), ps[p].cols());
  for (const auto& s : per_sample) {
    out.loss += s.loss;
    for (std::size_t p = 0; p < ps.size(); ++p)
      for (std::size_t i = 0; i < s.grads[p].size(); ++i) out.grads[p][i] += s.grads[p][i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (auto& g : out.grads)
    for (auto& v : g.values()) v *= inv;
  return out;
}

FoldResult train_fold(const Classifier& init, std::span<const data::CdgdWindow> train,
                      std::span<const data::CdgdWindow> val, const TrainConfig& config,
                      std::size_t fold) {
  config.validate();
  if (train.empty()) throw DataError("train_fold: empty training set");
  std::unique_ptr<Classifier> model = init.clone();
  std::unique_ptr<Classifier> best = init.clone();
  AdamState adam = AdamState::zeros_like(model->params().tensors());

  FoldResult result;
  result.history.fold = fold;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_acc = 0.0;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, config);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const LossAndGrad lg = batch_gradient(*model, train, batch, config.threads);
      loss_sum += lg.loss * static_cast<double>(batch.size());
      adam_step(model->params().tensors(), lg.grads, adam, lr, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    const Evaluation ev = evaluate(*model, val, config.threads);
    rec.val_loss = ev.loss;
    rec.val_accuracy = ev.accuracy;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);

    if (val.empty()) continue;
    if (ev.loss < best_loss) {
      best_loss = ev.loss;
      best_acc = ev.accuracy;
      best->params() = model->params();
      result.history.best_epoch = epoch;
    } else if (config.patience != kNoEarlyStop &&
               epoch - result.history.best_epoch >= config.patience) {
      result.history.stopped_early = true;
      break;
    }
  }

  if (val.empty()) {
    result.model = std::move(model);
    result.history.best_epoch = config.epochs - 1;
    result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
    result.best_val_accuracy = std::numeric_limits<double>::quiet_NaN();
  } else {
    result.model = std::move(best);
    result.best_val_loss = best_loss;
    result.best_val_accuracy = best_acc;
  }
  return result;
}

std::vector<CurvePoint> mean_curve(std::span<const TrainHistory> histories) {
  std::size_t longest = 0;
  for (const auto& h : histories) longest = std::max(longest, h.epochs.size());
  std::vector<CurvePoint> out(longest);
  for (std::size_t e = 0; e < longest; ++e) {
    CurvePoint& pt = out[e];
    pt.epoch = e;
    for (const auto& h : histories) {
      if (e >= h.epochs.size()) continue;
      pt.loss += h.epochs[e].train_loss;
      pt.val_accuracy += h.epochs[e].val_accuracy;
      pt.lr = h.epochs[e].lr;
      pt.folds += 1;
    }
    pt.loss /= static_cast<double>(pt.folds);
    pt.val_accuracy /= static_cast<double>(pt.folds);
  }
  return out;
}

CvResult cross_validate(const Classifier& init, std::span<const data::CdgdWindow> windows,
                        const data::SplitPlan& plan, const TrainConfig& config) {
  if (plan.folds.size() < 2) throw ConfigError("cross_validate: plan needs at least 2 folds");
  CvResult cv;
  std::vector<TrainHistory> histories;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    std::vector<data::CdgdWindow> train, val;
    for (std::size_t g = 0; g < plan.folds.size(); ++g) {
      for (std::size_t idx : plan.folds[g]) {
        if (idx >= windows.size()) throw IndexError("cross_validate: plan index out of range");
        (g == f ? val : train).push_back(windows[idx]);
      }
    }
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, 1000 + f);
    cv.folds.push_back(train_fold(init, train, val, fold_config, f));
    histories.push_back(cv.folds.back().history);
  }
  for (std::size_t f = 1; f < cv.folds.size(); ++f)
    if (cv.folds[f].best_val_accuracy > cv.folds[cv.best_fold].best_val_accuracy) cv.best_fold = f;
  cv.mean_curve = mean_curve(histories);
  return cv;
}

std::string history_csv(const CvResult& cv) {
  std::ostringstream out;
  out << "epoch,fold,loss,val_accuracy,lr\n";
  char buf[160];
  for (const auto& f : cv.folds) {
    for (const auto& e : f.history.epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", e.epoch, f.history.fold,
                    e.train_loss, e.val_accuracy, e.lr);
      out << buf;
    }
  }
  for (const auto& p : cv.mean_curve) {
    std::snprintf(buf, sizeof buf, "%zu,mean,%.17g,%.17g,%.17g\n", p.epoch, p.loss,
                  p.val_accuracy, p.lr);
    out << buf;
  }
  return out.str();
}

}  // namespace mcdc::training
