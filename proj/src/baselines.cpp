#include "mcdc/baselines.hpp"

#include "mcdc/error.hpp"

namespace mcdc {

AnnModel::AnnModel(const AnnHyper& hyper, std::uint64_t seed) : hyper_(hyper) {
  if (hyper_.temporal == 0 || hyper_.hidden1 == 0 || hyper_.hidden2 == 0 || hyper_.classes < 2)
    throw ConfigError("ann: layer sizes must be positive and classes >= 2");
  Rng rng(seed);
  const std::size_t in = input_width();
  using attention::glorot_uniform;
  params_.add("ann_w1", glorot_uniform(in, hyper_.hidden1, in, hyper_.hidden1, rng));
  params_.add("ann_b1", Tensor(1, hyper_.hidden1));
  params_.add("ann_w2", glorot_uniform(hyper_.hidden1, hyper_.hidden2, hyper_.hidden1,
                                       hyper_.hidden2, rng));
  params_.add("ann_b2", Tensor(1, hyper_.hidden2));
  params_.add("ann_w3", glorot_uniform(hyper_.hidden2, hyper_.classes, hyper_.hidden2,
                                       hyper_.classes, rng));
  params_.add("ann_b3", Tensor(1, hyper_.classes));
}

AnnModel AnnModel::zeros(const AnnHyper& hyper) {
  AnnModel m(hyper, 0);
  for (auto& p : m.params_.tensors()) p.fill(0.0);
  return m;
}

std::size_t AnnModel::input_width() const {
  return hyper_.input == AnnInput::LastDay ? kNumGases : kNumGases * hyper_.temporal;
}

ad::Var AnnModel::logits(ad::Tape& t, std::span<const ad::Var> p, const Tensor& window) const {
  if (window.rows() != kNumGases || window.cols() != hyper_.temporal) {
    throw DimensionError("ann: window " + window.shape_string() + " expected 5x" +
                         std::to_string(hyper_.temporal));
  }
  if (p.size() != params_.size()) throw ContractError("ann: expected 6 parameter vars");
  Tensor x;
  if (hyper_.input == AnnInput::LastDay) {
    x = Tensor(1, kNumGases);
    for (std::size_t g = 0; g < kNumGases; ++g) x[g] = window(g, window.cols() - 1);
  } else {
    x = Tensor(1, window.size(), window.storage());
  }
  ad::Var h = t.constant(std::move(x));
  h = ad::sigmoid(t, ad::add_row_bias(t, ad::matmul(t, h, p[0]), p[1]));
  h = ad::sigmoid(t, ad::add_row_bias(t, ad::matmul(t, h, p[2]), p[3]));
  return ad::add_row_bias(t, ad::matmul(t, h, p[4]), p[5]);
}

McdcModel mcdc_matrix_variant(McdcHyper hyper, std::uint64_t seed) {
  hyper.attention = attention::Kind::Matrix;
  return McdcModel(hyper, seed);
}

}  // namespace mcdc
