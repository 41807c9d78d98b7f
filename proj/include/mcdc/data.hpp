#pragma once

// Consecutive dissolved-gas data: CSV ingestion, gap filling, overlapping
// windows, normalisation, train/test splits and a synthetic generator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mcdc/labels.hpp"
#include "mcdc/tensor.hpp"

namespace mcdc::data {

inline constexpr std::string_view kCsvHeader =
    "transformer_id,voltage_kv,condition,day,h2,ch4,c2h6,c2h4,c2h2";
inline constexpr std::array<int, 4> kVoltageLevels = {35, 110, 220, 500};

/// Daily gas readings of one transformer. `readings` is 5 x L in ppm with
/// rows in kGasNames order; `days` is strictly increasing.
struct GasSeries {
  std::string transformer_id;
  int voltage_kv = 110;
  Condition condition = Condition::NC;
  std::vector<long> days;
  Tensor readings;

  std::size_t length() const { return days.size(); }
  friend bool operator==(const GasSeries&, const GasSeries&) = default;
};

/// One training sample: a contiguous 5 x T slice of a series.
struct CdgdWindow {
  std::string transformer_id;
  long start_day = 0;
  Tensor x;
  Condition label = Condition::NC;
};

std::vector<GasSeries> load_series(const std::filesystem::path& path);
std::vector<GasSeries> parse_series(std::istream& in, const std::string& source = "<stream>");
void write_series_csv(std::ostream& out, std::span<const GasSeries> series);
void save_series(const std::filesystem::path& path, std::span<const GasSeries> series);

// Fills missing interior days by per-channel linear interpolation between the
// nearest observed neighbours. Requires at least two observations.
GasSeries interpolate_gaps(const GasSeries& series);
bool is_contiguous(const GasSeries& series);

// Stride-1 sliding windows of length T: exactly L - T + 1 of them, or none
// when L < T. The series must be contiguous.
std::vector<CdgdWindow> overlapping_sample(const GasSeries& series, std::size_t window_len,
                                           std::size_t stride = 1);

// interpolate_gaps + overlapping_sample over every series, in order.
std::vector<CdgdWindow> build_windows(std::span<const GasSeries> series, std::size_t window_len);

// ---------------------------------------------------------------------------

struct NormStats {
  std::array<double, kNumGases> mean{};
  std::array<double, kNumGases> stddev{};
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kStdFloor = 1e-6;

// Per-channel mean and population std over every entry of `train`.
NormStats fit_normalizer(std::span<const CdgdWindow> train);
Tensor normalize(const Tensor& x, const NormStats& stats);
Tensor denormalize(const Tensor& z, const NormStats& stats);
std::vector<CdgdWindow> normalize(std::span<const CdgdWindow> windows, const NormStats& stats);

// ---------------------------------------------------------------------------

enum class SplitMode { SampleWise, FacilityWise };
std::string_view split_mode_name(SplitMode m);
SplitMode parse_split_mode(std::string_view s);

/// Window indices for each side of a split plus k-fold assignments over the
/// training side. Fold entries are window indices, not positions.
struct SplitPlan {
  SplitMode mode = SplitMode::SampleWise;
  std::uint64_t seed = 0;
  double test_ratio = 0.2;
  std::size_t window_count = 0;
  std::size_t temporal = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> train_ids;  // facility-wise only
  std::vector<std::string> test_ids;
  std::vector<std::vector<std::size_t>> folds;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Sample-wise: shuffles windows and holds out round(ratio * n).
// Facility-wise: per condition, shuffles transformers and holds out
// ceil(ratio * n_c) of them, so both sides cover every condition present.
SplitPlan split(std::span<const CdgdWindow> windows, SplitMode mode, double test_ratio,
                std::uint64_t seed, std::size_t k = 4);

// Near-equal partition (sizes differ by at most one) of `items` into k folds.
std::vector<std::vector<std::size_t>> kfold(std::span<const std::size_t> items, std::size_t k,
                                            std::uint64_t seed);

std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Synthetic data

/// Signature of one condition: per-gas base level (ppm), linear drift
/// (ppm/day) and sinusoid amplitude (ppm) with a shared period (days).
struct ClassRecipe {
  Condition condition = Condition::NC;
  std::size_t transformers = 1;
  std::array<double, kNumGases> base{};
  std::array<double, kNumGases> slope{};
  std::array<double, kNumGases> amplitude{};
  double period = 10.0;
};

struct SynthRecipe {
  std::vector<ClassRecipe> classes;
  std::size_t min_length = 30;
  std::size_t max_length = 60;
  // Gaussian noise std as a fraction of each gas's base level.
  double noise = 0.05;
  // Per-transformer additive level shift, std as a fraction of base.
  double level_offset = 0.0;
  // Chance that an interior day is missing from the output.
  double gap_probability = 0.0;
};

SynthRecipe parse_recipe_json(const std::string& text);
std::string recipe_to_json(const SynthRecipe& recipe);
SynthRecipe load_recipe(const std::filesystem::path& path);
// The recipe shipped in config/default_recipe.json (compiled in).
SynthRecipe default_recipe();
// config/facility_recipe.json: default recipe plus per-transformer offsets.
SynthRecipe facility_recipe();

std::vector<GasSeries> synth_generate(const SynthRecipe& recipe, std::uint64_t seed);

}  // namespace mcdc::data
