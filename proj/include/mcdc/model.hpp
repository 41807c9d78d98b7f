#pragma once

// MCDC: embedding -> temporal interaction -> channel interaction ->
// projection, with residual sums between the stages.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcdc/attention.hpp"
#include "mcdc/autodiff.hpp"
#include "mcdc/labels.hpp"
#include "mcdc/params.hpp"
#include "mcdc/tensor.hpp"

namespace mcdc {

// Anything the training and evaluation harness can drive: a parameter set
// plus a differentiable map from a 5 x T window to V logits.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t temporal() const = 0;
  virtual std::size_t classes() const = 0;
  // Logits as a 1 x V row. `params` are the tape vars of params(), in order.
  virtual ad::Var logits(ad::Tape& t, std::span<const ad::Var> params,
                         const Tensor& window) const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 protected:
  ParamSet params_;
};

// Probability row (1 x V).
Tensor forward(const Classifier& model, const Tensor& window);
// Argmax of forward(); ties go to the lowest class code.
std::size_t predict(const Classifier& model, const Tensor& window);
std::size_t argmax(std::span<const double> values);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
  Tensor probs;
};
LossAndGrad loss_and_grad(const Classifier& model, const Tensor& window, std::size_t label);
double loss(const Classifier& model, const Tensor& window, std::size_t label);

// ---------------------------------------------------------------------------

struct McdcHyper {
  std::size_t temporal_kernel = 5;
  std::size_t channel_kernel = 6;
  std::size_t heads = 4;
  std::size_t temporal = 12;
  std::size_t classes = kNumConditions;
  std::size_t ffn_hidden = 64;
  attention::Kind attention = attention::Kind::Conv;

  friend bool operator==(const McdcHyper&, const McdcHyper&) = default;
};

// Sinusoidal position map, d_channel x length. Row 2i holds
// sin(t / 10000^(2i/d)), row 2i+1 the matching cos; an odd d leaves the
// last sin row unpaired.
Tensor positional_encoding(std::size_t d_channel, std::size_t length);

class McdcModel final : public Classifier {
 public:
  // Glorot-uniform kernels and matrices, zero biases.
  McdcModel(const McdcHyper& hyper, std::uint64_t seed);
  static McdcModel zeros(const McdcHyper& hyper);

  const McdcHyper& hyper() const { return hyper_; }
  std::string kind() const override;
  std::size_t temporal() const override { return hyper_.temporal; }
  std::size_t classes() const override { return hyper_.classes; }
  ad::Var logits(ad::Tape& t, std::span<const ad::Var> params,
                 const Tensor& window) const override;
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<McdcModel>(*this);
  }

  // Parameter layout. Each head owns three consecutive tensors (q, k, v).
  std::size_t temporal_head_index(std::size_t h) const { return 3 * h; }
  std::size_t channel_head_index(std::size_t h) const { return 3 * (hyper_.heads + h); }
  std::size_t mixer_t_index() const { return 6 * hyper_.heads; }
  std::size_t mixer_c_index() const { return mixer_t_index() + 1; }
  std::size_t ffn_index() const { return mixer_t_index() + 2; }  // w1, b1, w2, b2

  // Parameter count of one temporal / channel head.
  std::size_t temporal_head_parameters() const;
  std::size_t channel_head_parameters() const;

  // Stage-level building blocks; `p` are the tape vars of params().
  ad::Var embed(ad::Tape& t, ad::Var x) const;
  ad::Var temporal_interaction(ad::Tape& t, std::span<const ad::Var> p, ad::Var x_e) const;
  ad::Var channel_interaction(ad::Tape& t, std::span<const ad::Var> p, ad::Var x) const;
  ad::Var project_logits(ad::Tape& t, std::span<const ad::Var> p, ad::Var x) const;

  struct Stages {
    ad::Var x_e, x_t, x_te, x_c, x_ct, logits, probs;
  };
  Stages run(ad::Tape& t, std::span<const ad::Var> p, ad::Var x) const;

  const Tensor& pe() const { return pe_; }

 private:
  explicit McdcModel(const McdcHyper& hyper);
  void validate() const;
  ad::Var head_output(ad::Tape& t, std::span<const ad::Var> p, std::size_t first,
                      ad::Var input) const;

  McdcHyper hyper_;
  Tensor pe_;
};

// Value-level stage wrappers.
Tensor embed(const McdcModel& model, const Tensor& x);
Tensor temporal_interaction(const McdcModel& model, const Tensor& x_e);
Tensor channel_interaction(const McdcModel& model, const Tensor& x);
// Softmax over the FFN logits of a 5 x T map.
Tensor project(const McdcModel& model, const Tensor& x);

// Copies of every stage output: X_E, X_T, X_T+X_E, X_C, X_C+X_T, logits.
std::map<std::string, Tensor> export_activations(const McdcModel& model, const Tensor& x);

}  // namespace mcdc
