#pragma once

// JSON checkpoints: model kind, hyperparameters, normalisation statistics and
// every parameter tensor. Doubles are written in shortest round-trip form so
// save -> load reproduces parameters bit for bit.

#include <filesystem>
#include <memory>
#include <string>

#include "mcdc/baselines.hpp"
#include "mcdc/data.hpp"
#include "mcdc/model.hpp"

namespace mcdc {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Classifier> model;
  data::NormStats stats;
};

std::string checkpoint_to_json(const Classifier& model, const data::NormStats& stats);
Checkpoint checkpoint_from_json(const std::string& text, const std::string& source = "<string>");

void save_checkpoint(const std::filesystem::path& path, const Classifier& model,
                     const data::NormStats& stats);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fresh model of a given kind ("mcdc", "mcdc-matrix" or "ann").
std::unique_ptr<Classifier> make_model(const std::string& kind, const McdcHyper& mcdc,
                                       const AnnHyper& ann, std::uint64_t seed);

}  // namespace mcdc
