#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcdc/data.hpp"
#include "mcdc/model.hpp"
#include "mcdc/parallel.hpp"

namespace mcdc::training {

inline constexpr std::size_t kNoEarlyStop = std::numeric_limits<std::size_t>::max();

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 200;
  double lr0 = 0.01;
  // (epoch, rate) pairs; the rate applies from that epoch on.
  std::vector<std::pair<std::size_t, double>> decay = {{500, 0.001}, {750, 0.0002}};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Epochs without a validation-loss improvement before stopping.
  std::size_t patience = 50;
  std::size_t folds = 4;
  std::uint64_t seed = 0;
  std::size_t threads = default_threads();

  void validate() const;
};

// Piecewise-constant rate; a decay epoch already uses the decayed rate.
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;

  static AdamState zeros_like(std::span<const Tensor> params);
};

// One bias-corrected Adam update in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
  double seconds = 0.0;  // wall clock, excluded from equality
};

struct TrainHistory {
  std::size_t fold = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct FoldResult {
  std::unique_ptr<Classifier> model;  // parameters from the best-validation epoch
  TrainHistory history;
  double best_val_loss = 0.0;
  double best_val_accuracy = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean loss and accuracy over `windows`.
Evaluation evaluate(const Classifier& model, std::span<const data::CdgdWindow> windows,
                    std::size_t threads = 1);

// Mean loss and mean gradient over the selected windows. Per-sample
// gradients are reduced in index order.
LossAndGrad batch_gradient(const Classifier& model, std::span<const data::CdgdWindow> windows,
                           std::span<const std::size_t> batch, std::size_t threads);

// Trains a copy of `init`. With an empty validation set every epoch runs and
// the final parameters are returned.
FoldResult train_fold(const Classifier& init, std::span<const data::CdgdWindow> train,
                      std::span<const data::CdgdWindow> val, const TrainConfig& config,
                      std::size_t fold = 0);

struct CurvePoint {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
  std::size_t folds = 0;  // how many fold histories reach this epoch
};

struct CvResult {
  std::vector<FoldResult> folds;
  std::size_t best_fold = 0;  // highest best-val accuracy, ties to lowest index
  std::vector<CurvePoint> mean_curve;

  const Classifier& best_model() const { return *folds[best_fold].model; }
};

// One model per fold of `plan`, each validated on its held-out fold.
// `windows` must already be normalised; indices in `plan` refer to it.
CvResult cross_validate(const Classifier& init, std::span<const data::CdgdWindow> windows,
                        const data::SplitPlan& plan, const TrainConfig& config);

// Per-epoch arithmetic mean over the folds that reached each epoch.
std::vector<CurvePoint> mean_curve(std::span<const TrainHistory> histories);

// `epoch,fold,loss,val_accuracy,lr`; per-fold rows then rows with fold=mean.
std::string history_csv(const CvResult& cv);

}  // namespace mcdc::training
