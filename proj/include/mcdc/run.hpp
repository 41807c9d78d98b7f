#pragma once

// Run configuration and the end-to-end pipelines behind the command-line
// tool: train, eval, compare and sweep.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcdc/baselines.hpp"
#include "mcdc/checkpoint.hpp"
#include "mcdc/data.hpp"
#include "mcdc/evaluation.hpp"
#include "mcdc/model.hpp"
#include "mcdc/training.hpp"

namespace mcdc::run {

// Fixed names inside an output directory.
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kSplitFile = "split.json";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kRocFile = "roc.csv";

struct DataSpec {
  std::string csv;                 // dataset path; empty means synthetic
  std::string recipe = "default";  // "default", "facility" or a recipe JSON path
  std::uint64_t seed = 0;          // synthetic generator seed
};

struct ModelSpec {
  std::string kind = "mcdc";  // mcdc | mcdc-matrix | ann
  McdcHyper mcdc;
  AnnHyper ann;

  std::unique_ptr<Classifier> make(std::uint64_t seed) const;
  std::size_t temporal() const { return kind == "ann" ? ann.temporal : mcdc.temporal; }
};

struct CompareSpec {
  std::vector<std::string> models = {"mcdc", "mcdc-matrix", "ann"};
  std::vector<data::SplitMode> modes = {data::SplitMode::SampleWise,
                                        data::SplitMode::FacilityWise};
  std::size_t repetitions = 10;
  bool single_fold = false;
};

struct SweepSpec {
  std::vector<std::size_t> temporal_kernel;
  std::vector<std::size_t> channel_kernel;
  std::vector<std::size_t> heads;
  std::vector<std::size_t> temporal;
  bool single_fold = true;

  std::size_t cell_count() const {
    return temporal_kernel.size() * channel_kernel.size() * heads.size() * temporal.size();
  }
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output = "runs/mcdc";
  DataSpec data;
  ModelSpec model;
  training::TrainConfig train;
  data::SplitMode mode = data::SplitMode::SampleWise;
  double test_ratio = 0.2;
  CompareSpec compare;
  SweepSpec sweep;

  // Seed present, model kind known, referenced files exist, train settings valid.
  void validate() const;
  std::uint64_t seed_value() const;
};

// The shipped config/default_run.json.
RunConfig default_run_config();
// Keys in `text` override the defaults; unknown keys are rejected. The seed
// is not inherited: it must appear in `text` or be set by the caller.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

std::vector<data::GasSeries> load_dataset(const DataSpec& spec);
// interpolate_gaps + overlapping_sample, each failure tagged with its stage.
std::vector<data::CdgdWindow> prepare_windows(std::span<const data::GasSeries> series,
                                              std::size_t temporal);

struct TrainOutcome {
  data::SplitPlan plan;
  data::NormStats stats;
  training::CvResult cv;
};

// load -> interpolate -> window -> split -> normalise -> cross-validate.
TrainOutcome train_pipeline(const RunConfig& config);
// train_pipeline, then checkpoint/history/split files in config.output.
TrainOutcome cmd_train(const RunConfig& config);

struct EvalOptions {
  bool train_side = false;        // score the training side instead of test
  bool allow_train_side = false;  // required for train_side
  std::size_t threads = default_threads();
};

// Scores the plan's test side with the checkpoint's stored normalisation.
eval::EvalReport evaluate_checkpoint(const Checkpoint& ckpt,
                                     std::span<const data::GasSeries> series,
                                     const data::SplitPlan& plan, const EvalOptions& options);
// File-level wrapper; writes report.json and roc.csv into out_dir.
eval::EvalReport cmd_eval(const std::filesystem::path& checkpoint, const DataSpec& data,
                          const std::filesystem::path& split_plan,
                          const std::filesystem::path& out_dir, const EvalOptions& options);

struct CompareOutput {
  std::vector<eval::CompareResult> blocks;  // one per split mode
  std::string json;
  std::string table;
};
CompareOutput cmd_compare(const RunConfig& config);

struct SweepRow {
  std::size_t temporal_kernel = 0, channel_kernel = 0, heads = 0, temporal = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t parameters = 0;
};
// One seeded train + test evaluation per grid cell. Every cell uses the
// config seed, so any cell rerun alone reproduces its row.
std::vector<SweepRow> cmd_sweep(const RunConfig& config);
std::string sweep_csv(std::span<const SweepRow> rows);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mcdc::run
