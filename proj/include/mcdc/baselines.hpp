#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "mcdc/model.hpp"

namespace mcdc {

// What the ANN sees of a 5 x T window.
enum class AnnInput {
  LastDay,  // the 5 gas readings of the final day (discrete DGA)
  Window,   // the whole window flattened to 5*T
};

struct AnnHyper {
  std::size_t temporal = 12;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  std::size_t classes = kNumConditions;
  AnnInput input = AnnInput::LastDay;

  friend bool operator==(const AnnHyper&, const AnnHyper&) = default;
};

/// Three sigmoid feed-forward layers (two hidden + output) into softmax.
class AnnModel final : public Classifier {
 public:
  AnnModel(const AnnHyper& hyper, std::uint64_t seed);
  static AnnModel zeros(const AnnHyper& hyper);

  const AnnHyper& hyper() const { return hyper_; }
  std::size_t input_width() const;

  std::string kind() const override { return "ann"; }
  std::size_t temporal() const override { return hyper_.temporal; }
  std::size_t classes() const override { return hyper_.classes; }
  ad::Var logits(ad::Tape& t, std::span<const ad::Var> params,
                 const Tensor& window) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<AnnModel>(*this); }

 private:
  AnnHyper hyper_;
};

// MCDC with matrix-attention heads in both interactions; otherwise the same
// architecture and training interface as the convolutional model.
McdcModel mcdc_matrix_variant(McdcHyper hyper, std::uint64_t seed);

}  // namespace mcdc
