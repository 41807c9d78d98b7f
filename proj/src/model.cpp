#include "mcdc/model.hpp"

#include <cmath>

#include "mcdc/error.hpp"

namespace mcdc {

// ---------------------------------------------------------------------------
// Classifier helpers

namespace {

std::vector<ad::Var> bind_constants(ad::Tape& t, const ParamSet& ps) {
  std::vector<ad::Var> vars;
  vars.reserve(ps.size());
  for (const auto& p : ps.tensors()) vars.push_back(t.constant(p));
  return vars;
}

}  // namespace

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Tensor forward(const Classifier& model, const Tensor& window) {
  ad::Tape t;
  const auto vars = bind_constants(t, model.params());
  return t.value(ad::softmax(t, model.logits(t, vars, window), ad::Axis::Row));
}

std::size_t predict(const Classifier& model, const Tensor& window) {
  return argmax(forward(model, window).values());
}

LossAndGrad loss_and_grad(const Classifier& model, const Tensor& window, std::size_t label) {
  ad::Tape t;
  const ParamSet& ps = model.params();
  std::vector<ad::Var> vars;
  vars.reserve(ps.size());
  for (const auto& p : ps.tensors()) vars.push_back(t.leaf(p));
  const ad::Var probs = ad::softmax(t, model.logits(t, vars, window), ad::Axis::Row);
  const ad::Var l = ad::cross_entropy(t, probs, label);
  t.backward(l);
  LossAndGrad out;
  out.loss = t.value(l)[0];
  out.probs = t.value(probs);
  out.grads.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& g = t.grad(vars[i]);
    out.grads.push_back(g.empty() ? Tensor(ps[i].rows(), ps[i].cols()) : g);
  }
  return out;
}

double loss(const Classifier& model, const Tensor& window, std::size_t label) {
  return ad::cross_entropy(forward(model, window).values(), label);
}

// ---------------------------------------------------------------------------
// MCDC

Tensor positional_encoding(std::size_t d_channel, std::size_t length) {
  Tensor pe(d_channel, length);
  const double d = static_cast<double>(d_channel);
  for (std::size_t row = 0; row < d_channel; ++row) {
    const std::size_t two_i = row - row % 2;
    const double denom = std::pow(10000.0, static_cast<double>(two_i) / d);
    for (std::size_t t = 0; t < length; ++t) {
      const double arg = static_cast<double>(t) / denom;
      pe(row, t) = row % 2 == 0 ? std::sin(arg) : std::cos(arg);
    }
  }
  return pe;
}

McdcModel::McdcModel(const McdcHyper& hyper) : hyper_(hyper) {
  validate();
  pe_ = positional_encoding(kNumGases, hyper_.temporal);
}

void McdcModel::validate() const {
  if (hyper_.heads == 0) throw ConfigError("mcdc: heads must be >= 1");
  if (hyper_.temporal == 0) throw ConfigError("mcdc: temporal length must be >= 1");
  if (hyper_.temporal_kernel == 0 || hyper_.channel_kernel == 0)
    throw ConfigError("mcdc: kernel sizes must be >= 1");
  if (hyper_.classes < 2) throw ConfigError("mcdc: need at least 2 classes");
  if (hyper_.ffn_hidden == 0) throw ConfigError("mcdc: ffn_hidden must be >= 1");
}

McdcModel::McdcModel(const McdcHyper& hyper, std::uint64_t seed) : McdcModel(hyper) {
  Rng rng(seed);
  const std::size_t n = kNumGases, len = hyper_.temporal, heads = hyper_.heads;
  const bool conv = hyper_.attention == attention::Kind::Conv;
  auto add_heads = [&](const std::string& prefix, std::size_t kernel, std::size_t feature_dim) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string base = prefix + "_head_" + std::to_string(h);
      if (conv) {
        auto head = attention::CnnAttentionHead::init(kernel, rng);
        params_.add(base + "_kq", std::move(head.kernel_q));
        params_.add(base + "_kk", std::move(head.kernel_k));
        params_.add(base + "_kv", std::move(head.kernel_v));
      } else {
        auto head = attention::MatrixAttentionHead::init(feature_dim, rng);
        params_.add(base + "_wq", std::move(head.w_q));
        params_.add(base + "_wk", std::move(head.w_k));
        params_.add(base + "_wv", std::move(head.w_v));
      }
    }
  };
  add_heads("temporal", hyper_.temporal_kernel, n);
  add_heads("channel", hyper_.channel_kernel, len);
  params_.add("m_t", attention::glorot_uniform(n, heads * n, heads * n, n, rng));
  params_.add("m_c", attention::glorot_uniform(heads * len, len, heads * len, len, rng));
  const std::size_t flat = n * len;
  params_.add("ffn_w1", attention::glorot_uniform(flat, hyper_.ffn_hidden, flat,
                                                  hyper_.ffn_hidden, rng));
  params_.add("ffn_b1", Tensor(1, hyper_.ffn_hidden));
  params_.add("ffn_w2", attention::glorot_uniform(hyper_.ffn_hidden, hyper_.classes,
                                                  hyper_.ffn_hidden, hyper_.classes, rng));
  params_.add("ffn_b2", Tensor(1, hyper_.classes));
}

McdcModel McdcModel::zeros(const McdcHyper& hyper) {
  McdcModel m(hyper, 0);
  for (auto& p : m.params_.tensors()) p.fill(0.0);
  return m;
}

std::string McdcModel::kind() const {
  return hyper_.attention == attention::Kind::Conv ? "mcdc" : "mcdc-matrix";
}

std::size_t McdcModel::temporal_head_parameters() const {
  return hyper_.attention == attention::Kind::Conv ? 3 * hyper_.temporal_kernel
                                                   : 3 * kNumGases * kNumGases;
}

std::size_t McdcModel::channel_head_parameters() const {
  return hyper_.attention == attention::Kind::Conv ? 3 * hyper_.channel_kernel
                                                   : 3 * hyper_.temporal * hyper_.temporal;
}

ad::Var McdcModel::head_output(ad::Tape& t, std::span<const ad::Var> p, std::size_t first,
                               ad::Var input) const {
  if (hyper_.attention == attention::Kind::Conv) {
    return attention::cnn_attention(t, input, {p[first], p[first + 1], p[first + 2]});
  }
  return attention::matrix_attention(t, input, {p[first], p[first + 1], p[first + 2]});
}

ad::Var McdcModel::embed(ad::Tape& t, ad::Var x) const {
  const Tensor& xv = t.value(x);
  if (!xv.same_shape(pe_)) {
    throw DimensionError("embed: input " + xv.shape_string() + " does not match model window " +
                         pe_.shape_string());
  }
  return ad::add(t, x, t.constant(pe_));
}

// Tokens are time steps; each head convolves across the 5 channels of one
// day and yields a T x T attention map. Heads stack to (H*5) x T and M_T
// mixes them back to 5 x T.
ad::Var McdcModel::temporal_interaction(ad::Tape& t, std::span<const ad::Var> p,
                                        ad::Var x_e) const {
  std::vector<ad::Var> heads;
  heads.reserve(hyper_.heads);
  for (std::size_t h = 0; h < hyper_.heads; ++h)
    heads.push_back(head_output(t, p, temporal_head_index(h), x_e));
  return ad::matmul(t, p[mixer_t_index()], ad::concat_rows(t, heads));
}

// Tokens are the 5 gases; each head convolves along one gas's time series
// and yields a 5 x 5 map. Head outputs (5 x T each) sit side by side and
// M_C maps 5 x (H*T) back to 5 x T.
ad::Var McdcModel::channel_interaction(ad::Tape& t, std::span<const ad::Var> p,
                                       ad::Var x) const {
  const ad::Var time_by_gas = ad::transpose(t, x);
  std::vector<ad::Var> heads;
  heads.reserve(hyper_.heads);
  for (std::size_t h = 0; h < hyper_.heads; ++h)
    heads.push_back(ad::transpose(t, head_output(t, p, channel_head_index(h), time_by_gas)));
  return ad::matmul(t, ad::concat_cols(t, heads), p[mixer_c_index()]);
}

ad::Var McdcModel::project_logits(ad::Tape& t, std::span<const ad::Var> p, ad::Var x) const {
  const std::size_t f = ffn_index();
  const ad::Var hidden =
      ad::sigmoid(t, ad::add_row_bias(t, ad::matmul(t, ad::flatten(t, x), p[f]), p[f + 1]));
  return ad::add_row_bias(t, ad::matmul(t, hidden, p[f + 2]), p[f + 3]);
}

McdcModel::Stages McdcModel::run(ad::Tape& t, std::span<const ad::Var> p, ad::Var x) const {
  if (p.size() != params_.size()) {
    throw ContractError("mcdc: expected " + std::to_string(params_.size()) + " parameter vars");
  }
  Stages s;
  s.x_e = embed(t, x);
  s.x_t = temporal_interaction(t, p, s.x_e);
  s.x_te = ad::add(t, s.x_t, s.x_e);
  s.x_c = channel_interaction(t, p, s.x_te);
  s.x_ct = ad::add(t, s.x_c, s.x_t);
  s.logits = project_logits(t, p, s.x_ct);
  s.probs = ad::softmax(t, s.logits, ad::Axis::Row);
  return s;
}

ad::Var McdcModel::logits(ad::Tape& t, std::span<const ad::Var> params,
                          const Tensor& window) const {
  return run(t, params, t.constant(window)).logits;
}

// ---------------------------------------------------------------------------
// Value-level wrappers

Tensor embed(const McdcModel& model, const Tensor& x) {
  ad::Tape t;
  return t.value(model.embed(t, t.constant(x)));
}

Tensor temporal_interaction(const McdcModel& model, const Tensor& x_e) {
  ad::Tape t;
  const auto vars = bind_constants(t, model.params());
  return t.value(model.temporal_interaction(t, vars, t.constant(x_e)));
}

Tensor channel_interaction(const McdcModel& model, const Tensor& x) {
  ad::Tape t;
  const auto vars = bind_constants(t, model.params());
  return t.value(model.channel_interaction(t, vars, t.constant(x)));
}

Tensor project(const McdcModel& model, const Tensor& x) {
  ad::Tape t;
  const auto vars = bind_constants(t, model.params());
  return t.value(ad::softmax(t, model.project_logits(t, vars, t.constant(x)), ad::Axis::Row));
}

std::map<std::string, Tensor> export_activations(const McdcModel& model, const Tensor& x) {
  ad::Tape t;
  const auto vars = bind_constants(t, model.params());
  const auto s = model.run(t, vars, t.constant(x));
  return {{"X_E", t.value(s.x_e)},   {"X_T", t.value(s.x_t)},     {"X_T+X_E", t.value(s.x_te)},
          {"X_C", t.value(s.x_c)},   {"X_C+X_T", t.value(s.x_ct)}, {"logits", t.value(s.logits)}};
}

}  // namespace mcdc
