#include "mcdc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mcdc/error.hpp"
#include "mcdc/parallel.hpp"
#include "mcdc/random.hpp"

namespace mcdc::eval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Confusion matrix and core metrics

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += at(t, pred);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
  return s;
}

bool ConfusionMatrix::diagonal_dominant() const {
  for (std::size_t c = 0; c < classes_; ++c) {
    const std::size_t row = row_sum(c);
    if (row == 0) continue;
    if (at(c, c) <= row - at(c, c)) return false;
  }
  return true;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                          std::size_t classes) {
  if (truth.size() != pred.size()) {
    throw DimensionError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || pred[i] >= classes) {
      throw IndexError("confusion: label out of range at sample " + std::to_string(i));
    }
    cm.at(truth[i], pred[i]) += 1;
  }
  return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw DataError("metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = ratio(cm.trace(), total);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    ClassMetrics k;
    k.tp = cm.at(c, c);
    k.fp = cm.col_sum(c) - k.tp;
    k.fn = cm.row_sum(c) - k.tp;
    k.tn = total - k.tp - k.fp - k.fn;
    k.precision = ratio(k.tp, k.tp + k.fp);
    k.recall = ratio(k.tp, k.tp + k.fn);
    const double pr = k.precision + k.recall;
    k.f1 = pr == 0.0 ? 0.0 : 2.0 * k.precision * k.recall / pr;
    m.macro_precision += k.precision;
    m.macro_recall += k.recall;
    m.macro_f1 += k.f1;
    m.per_class.push_back(k);
  }
  const double v = static_cast<double>(cm.classes());
  m.macro_precision /= v;
  m.macro_recall /= v;
  m.macro_f1 /= v;
  return m;
}

// ---------------------------------------------------------------------------
// ROC

RocCurve roc_curve(std::span<const double> scores, std::span<const char> positive,
                   std::string label) {
  if (scores.size() != positive.size()) throw DimensionError("roc_curve: length mismatch");
  RocCurve curve;
  curve.label = std::move(label);
  std::size_t pos = 0;
  for (char p : positive) pos += p ? 1 : 0;
  const std::size_t neg = positive.size() - pos;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({ratio(fp, neg), ratio(tp, pos), s});
  }
  if (pos == 0 || neg == 0) return curve;
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = area;
  return curve;
}

RocReport roc_auc(std::span<const std::size_t> truth, const Tensor& probs) {
  if (probs.rows() != truth.size()) {
    throw DimensionError("roc_auc: " + std::to_string(truth.size()) + " labels vs probs " +
                         probs.shape_string());
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) s += probs(i, c);
    if (std::abs(s - 1.0) > 1e-6)
      throw ContractError("roc_auc: probability row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
  const std::size_t n = truth.size(), v = probs.cols();
  RocReport rep;
  std::vector<double> pooled_scores;
  std::vector<char> pooled_pos;
  pooled_scores.reserve(n * v);
  pooled_pos.reserve(n * v);
  double auc_sum = 0.0;
  std::size_t auc_count = 0;
  for (std::size_t c = 0; c < v; ++c) {
    std::vector<double> s(n);
    std::vector<char> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs(i, c);
      p[i] = truth[i] == c;
    }
    const std::string name = c < kNumConditions ? std::string(kConditionNames[c]) : std::to_string(c);
    rep.per_class.push_back(roc_curve(s, p, name));
    if (rep.per_class.back().auc) {
      auc_sum += *rep.per_class.back().auc;
      ++auc_count;
    }
  }
  // Sample-major pooling keeps the micro curve independent of class order ties.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < v; ++c) {
      pooled_scores.push_back(probs(i, c));
      pooled_pos.push_back(truth[i] == c);
    }
  rep.micro = roc_curve(pooled_scores, pooled_pos, "micro");
  if (auc_count > 0) rep.macro_auc = auc_sum / static_cast<double>(auc_count);
  return rep;
}

// ---------------------------------------------------------------------------
// Wilcoxon rank-sum

namespace {

struct Ranked {
  std::vector<double> midranks;  // pooled, a first then b
  std::vector<std::size_t> tie_sizes;
};

Ranked midranks(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  Ranked r;
  r.midranks.resize(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && pooled[order[j]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) r.midranks[order[k]] = mid;
    r.tie_sizes.push_back(j - i);
    i = j;
  }
  return r;
}

void require_nonempty(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("wilcoxon_rank_sum: both samples must be nonempty");
}

}  // namespace

RankSumResult wilcoxon_exact(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b);
  const Ranked r = midranks(a, b);
  const std::size_t n1 = a.size(), n = r.midranks.size();
  // Doubled midranks are integers.
  std::vector<std::size_t> twice(n);
  for (std::size_t i = 0; i < n; ++i) twice[i] = static_cast<std::size_t>(std::llround(2.0 * r.midranks[i]));
  const std::size_t max_sum = std::accumulate(twice.begin(), twice.end(), std::size_t{0});
  // ways[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(max_sum + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = std::min(i + 1, n1); k >= 1; --k) {
      const auto& prev = ways[k - 1];
      auto& cur = ways[k];
      for (std::size_t s = max_sum; s + 1 > twice[i]; --s) cur[s] += prev[s - twice[i]];
    }
  }
  std::size_t observed = 0;
  for (std::size_t i = 0; i < n1; ++i) observed += twice[i];
  const auto centre = static_cast<long long>(n1 * (n + 1));  // doubled null mean
  const long long dev_obs = std::llabs(static_cast<long long>(observed) - centre);
  double extreme = 0.0, total = 0.0;
  for (std::size_t s = 0; s <= max_sum; ++s) {
    const double w = ways[n1][s];
    if (w == 0.0) continue;
    total += w;
    if (std::llabs(static_cast<long long>(s) - centre) >= dev_obs) extreme += w;
  }
  return {0.5 * static_cast<double>(observed), std::min(1.0, extreme / total), true};
}

RankSumResult wilcoxon_normal(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b);
  const Ranked r = midranks(a, b);
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double n = n1 + n2;
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w += r.midranks[i];
  double ties = 0.0;
  for (std::size_t t : r.tie_sizes) {
    const double td = static_cast<double>(t);
    ties += td * td * td - td;
  }
  const double mean = n1 * (n + 1.0) / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - (n > 1 ? ties / (n * (n - 1.0)) : 0.0));
  RankSumResult res{w, 1.0, false};
  if (var <= 0.0) return res;
  const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.size() + b.size() <= kExactRankSumLimit) return wilcoxon_exact(a, b);
  return wilcoxon_normal(a, b);
}

// ---------------------------------------------------------------------------
// Reports

EvalReport make_report(std::span<const std::size_t> truth, const Tensor& probs,
                       std::string model_kind) {
  EvalReport rep;
  rep.model_kind = std::move(model_kind);
  rep.samples = truth.size();
  std::vector<std::size_t> pred(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    pred[i] = argmax(std::span<const double>(&probs(i, 0), probs.cols()));
  rep.cm = confusion(truth, pred, probs.cols());
  rep.core = metrics(rep.cm);
  rep.roc = roc_auc(truth, probs);
  return rep;
}

EvalReport evaluate_report(const Classifier& model, std::span<const data::CdgdWindow> windows,
                           std::size_t threads) {
  if (windows.empty()) throw DataError("evaluate: no windows");
  const std::size_t v = model.classes();
  Tensor probs(windows.size(), v);
  std::vector<std::size_t> truth(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const Tensor p = forward(model, windows[i].x);
    for (std::size_t c = 0; c < v; ++c) probs(i, c) = p[c];
    truth[i] = condition_code(windows[i].label);
  });
  return make_report(truth, probs, model.kind());
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string report_to_json(const EvalReport& rep) {
  json j;
  j["format"] = "mcdc-report";
  j["version"] = 1;
  j["model_kind"] = rep.model_kind;
  j["samples"] = rep.samples;
  j["table"] = {{"Ac", rep.core.accuracy},
                {"Macro-Pr", rep.core.macro_precision},
                {"Macro-Re", rep.core.macro_recall},
                {"Macro-F1", rep.core.macro_f1}};
  j["per_class"] = json::array();
  for (std::size_t c = 0; c < rep.core.per_class.size(); ++c) {
    const auto& k = rep.core.per_class[c];
    j["per_class"].push_back({{"class", rep.roc.per_class.at(c).label},
                              {"tp", k.tp},
                              {"fp", k.fp},
                              {"fn", k.fn},
                              {"tn", k.tn},
                              {"precision", k.precision},
                              {"recall", k.recall},
                              {"f1", k.f1},
                              {"auc", optional_number(rep.roc.per_class[c].auc)}});
  }
  j["macro_auc"] = optional_number(rep.roc.macro_auc);
  j["micro_auc"] = optional_number(rep.roc.micro.auc);
  json cm = json::array();
  for (std::size_t t = 0; t < rep.cm.classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < rep.cm.classes(); ++p) row.push_back(rep.cm.at(t, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  return j.dump(2);
}

std::string roc_csv(const RocReport& roc) {
  std::ostringstream out;
  out << "class,fpr,tpr,threshold\n";
  char buf[128];
  auto emit = [&](const RocCurve& c) {
    for (const auto& p : c.points) {
      if (std::isinf(p.threshold)) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,inf\n", c.label.c_str(), p.fpr, p.tpr);
      } else {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", c.label.c_str(), p.fpr, p.tpr,
                      p.threshold);
      }
      out << buf;
    }
  };
  for (const auto& c : roc.per_class) emit(c);
  emit(roc.micro);
  return out.str();
}

// ---------------------------------------------------------------------------
// Repeated comparison

RepetitionStats repetition_stats(std::span<const double> values) {
  RepetitionStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    ss += (v - s.mean) * (v - s.mean);
    s.max_mean_error = std::max(s.max_mean_error, std::abs(v - s.mean));
  }
  s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

CompareResult compare(std::span<const ModelFactory> models,
                      std::span<const data::CdgdWindow> windows, const CompareConfig& config) {
  if (models.empty()) throw ConfigError("compare: no models");
  if (config.repetitions == 0) throw ConfigError("compare: repetitions must be >= 1");
  CompareResult res;
  res.mode = config.mode;
  res.models.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) res.models[m].name = models[m].name;

  // reports[r][m]; repetitions are independent and run on the worker pool.
  std::vector<std::vector<Metrics>> reports(config.repetitions,
                                            std::vector<Metrics>(models.size()));
  std::vector<std::size_t> parameters(models.size());
  const std::size_t outer = std::min(config.train.threads, config.repetitions);
  parallel_for(config.repetitions, outer, [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(config.seed, r);
    const data::SplitPlan plan =
        data::split(windows, config.mode, config.test_ratio, seed, config.train.folds);
    std::vector<data::CdgdWindow> train_raw;
    for (std::size_t i : plan.train) train_raw.push_back(windows[i]);
    const data::NormStats stats = data::fit_normalizer(train_raw);
    const std::vector<data::CdgdWindow> normed = data::normalize(windows, stats);
    std::vector<data::CdgdWindow> test;
    for (std::size_t i : plan.test) test.push_back(normed[i]);

    training::TrainConfig tc = config.train;
    tc.seed = seed;
    tc.threads = std::max<std::size_t>(1, config.train.threads / std::max<std::size_t>(outer, 1));
    for (std::size_t m = 0; m < models.size(); ++m) {
      const std::unique_ptr<Classifier> init = models[m].make(seed);
      if (r == 0) parameters[m] = init->params().scalar_count();
      std::unique_ptr<Classifier> trained;
      if (config.single_fold) {
        std::vector<data::CdgdWindow> tr, va;
        for (std::size_t g = 0; g < plan.folds.size(); ++g)
          for (std::size_t i : plan.folds[g]) (g == 0 ? va : tr).push_back(normed[i]);
        trained = std::move(training::train_fold(*init, tr, va, tc).model);
      } else {
        training::CvResult cv = training::cross_validate(*init, normed, plan, tc);
        trained = std::move(cv.folds[cv.best_fold].model);
      }
      reports[r][m] = evaluate_report(*trained, test, tc.threads).core;
    }
  });

  const double reps = static_cast<double>(config.repetitions);
  for (std::size_t m = 0; m < models.size(); ++m) {
    ModelSummary& s = res.models[m];
    s.parameters = parameters[m];
    for (std::size_t r = 0; r < config.repetitions; ++r) {
      s.accuracies.push_back(reports[r][m].accuracy);
      s.macro_precision += reports[r][m].macro_precision / reps;
      s.macro_recall += reports[r][m].macro_recall / reps;
      s.macro_f1 += reports[r][m].macro_f1 / reps;
    }
    const RepetitionStats st = repetition_stats(s.accuracies);
    s.mean_accuracy = st.mean;
    s.stddev = st.stddev;
    s.max_mean_error = st.max_mean_error;
  }
  for (std::size_t a = 0; a < res.models.size(); ++a)
    for (std::size_t b = a + 1; b < res.models.size(); ++b)
      res.p_values.push_back(
          {a, b, wilcoxon_rank_sum(res.models[a].accuracies, res.models[b].accuracies).p_value});
  return res;
}

std::string compare_to_json(const CompareResult& res) {
  json j;
  j["mode"] = data::split_mode_name(res.mode);
  j["models"] = json::array();
  for (const auto& s : res.models) {
    j["models"].push_back({{"name", s.name},
                           {"accuracies", s.accuracies},
                           {"Ac", s.mean_accuracy},
                           {"Macro-Pr", s.macro_precision},
                           {"Macro-Re", s.macro_recall},
                           {"Macro-F1", s.macro_f1},
                           {"stddev", s.stddev},
                           {"max_mean_error", s.max_mean_error},
                           {"parameters", s.parameters}});
  }
  j["p_values"] = json::array();
  for (const auto& p : res.p_values)
    j["p_values"].push_back(
        {{"a", res.models[p.a].name}, {"b", res.models[p.b].name}, {"p", p.p_value}});
  return j.dump(2);
}

std::string compare_table(const CompareResult& res) {
  std::ostringstream out;
  char buf[256];
  out << "[" << data::split_mode_name(res.mode) << "]\n";
  std::snprintf(buf, sizeof buf, "%-14s %7s %9s %9s %9s %8s %9s %8s\n", "Algorithm", "Ac",
                "Macro-Pr", "Macro-Re", "Macro-F1", "Std", "MaxMeanE", "Params");
  out << buf;
  for (const auto& s : res.models) {
    std::snprintf(buf, sizeof buf, "%-14s %7.4f %9.4f %9.4f %9.4f %8.4f %9.4f %8zu\n",
                  s.name.c_str(), s.mean_accuracy, s.macro_precision, s.macro_recall, s.macro_f1,
                  s.stddev, s.max_mean_error, s.parameters);
    out << buf;
  }
  for (const auto& p : res.p_values) {
    std::snprintf(buf, sizeof buf, "p(%s, %s) = %.3E\n", res.models[p.a].name.c_str(),
                  res.models[p.b].name.c_str(), p.p_value);
    out << buf;
  }
  return out.str();
}

}  // namespace mcdc::eval
