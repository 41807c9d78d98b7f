#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdc/data.hpp"
#include "mcdc/model.hpp"
#include "mcdc/training.hpp"

namespace mcdc::eval {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kNumConditions)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * classes_ + pred];
  }
  std::size_t total() const;
  std::size_t row_sum(std::size_t truth) const;
  std::size_t col_sum(std::size_t pred) const;
  std::size_t trace() const;
  // Each row with samples has a diagonal count exceeding the rest of the row.
  bool diagonal_dominant() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                          std::size_t classes = kNumConditions);

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;  // trace / total
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

// One-vs-rest counts per class, ratios with 0/0 defined as 0, unweighted
// macro means.
Metrics metrics(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) origin
};

struct RocCurve {
  std::string label;
  std::vector<RocPoint> points;
  std::optional<double> auc;  // empty when a side has no samples
};

struct RocReport {
  std::vector<RocCurve> per_class;
  RocCurve micro;
  std::optional<double> macro_auc;
};

// Curve over every distinct score, highest first; trapezoidal area.
RocCurve roc_curve(std::span<const double> scores, std::span<const char> positive,
                   std::string label = {});
// `probs` is N x V. Classes absent from the truth get no AUC and are left
// out of the macro mean. Micro pools all N*V one-vs-rest decisions.
RocReport roc_auc(std::span<const std::size_t> truth, const Tensor& probs);

struct RankSumResult {
  double rank_sum = 0.0;  // midrank sum of sample a
  double p_value = 1.0;   // two-sided
  bool exact = false;
};

inline constexpr std::size_t kExactRankSumLimit = 20;

// Exact when n1 + n2 <= 20, otherwise the normal approximation.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);
// Exact null distribution of the midrank sum (counts subsets by dynamic
// programming over doubled midranks).
RankSumResult wilcoxon_exact(std::span<const double> a, std::span<const double> b);
// Normal approximation with tie and continuity corrections.
RankSumResult wilcoxon_normal(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------

struct EvalReport {
  std::string model_kind;
  std::size_t samples = 0;
  ConfusionMatrix cm;
  Metrics core;
  RocReport roc;
};

EvalReport evaluate_report(const Classifier& model, std::span<const data::CdgdWindow> windows,
                           std::size_t threads = 1);
EvalReport make_report(std::span<const std::size_t> truth, const Tensor& probs,
                       std::string model_kind = {});

std::string report_to_json(const EvalReport& report);
// `class,fpr,tpr,threshold`; per-class curves then the pooled micro curve.
std::string roc_csv(const RocReport& roc);

// ---------------------------------------------------------------------------

struct ModelFactory {
  std::string name;
  std::function<std::unique_ptr<Classifier>(std::uint64_t seed)> make;
};

struct CompareConfig {
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  data::SplitMode mode = data::SplitMode::SampleWise;
  double test_ratio = 0.2;
  training::TrainConfig train;
  // Train only the fold-0 model per repetition instead of all k.
  bool single_fold = false;
};

struct ModelSummary {
  std::string name;
  std::vector<double> accuracies;  // one per repetition
  double mean_accuracy = 0.0;
  double stddev = 0.0;          // population std over repetitions
  double max_mean_error = 0.0;  // max |accuracy_r - mean|
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t parameters = 0;
};

struct PairwiseP {
  std::size_t a = 0, b = 0;
  double p_value = 1.0;
};

struct CompareResult {
  data::SplitMode mode = data::SplitMode::SampleWise;
  std::vector<ModelSummary> models;
  std::vector<PairwiseP> p_values;
};

struct RepetitionStats {
  double mean = 0.0, stddev = 0.0, max_mean_error = 0.0;
};
RepetitionStats repetition_stats(std::span<const double> values);

// Per repetition: split with a derived seed, fit normalisation on the train
// side, cross-validate every model on that same split and score the best
// fold model on the test side. `windows` are raw (unnormalised).
CompareResult compare(std::span<const ModelFactory> models,
                      std::span<const data::CdgdWindow> windows, const CompareConfig& config);

std::string compare_to_json(const CompareResult& result);
// Table-shaped plain text: Ac, Macro-Pr, Macro-Re, Macro-F1, std, max mean error.
std::string compare_table(const CompareResult& result);

}  // namespace mcdc::eval
