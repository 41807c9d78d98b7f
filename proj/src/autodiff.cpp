#include "mcdc/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mcdc/error.hpp"

namespace mcdc::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// c += a * b
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = &c(i, 0);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a(i, t);
      if (av == 0.0) continue;
      const double* brow = &b(t, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a^T * b
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t t = 0; t < k; ++t) {
    const double* brow = &b(t, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a(t, i);
      if (av == 0.0) continue;
      double* crow = &c(i, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * b^T
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a(i, 0);
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b(j, 0);
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      c(i, j) += acc;
    }
  }
}

std::size_t conv_out_len(std::size_t len, std::size_t k, std::size_t stride, std::size_t pl,
                         std::size_t pr) {
  if (k == 0) throw GeometryError("conv1d: kernel length must be >= 1");
  if (stride == 0) throw GeometryError("conv1d: stride must be >= 1");
  if (len + pl + pr < k) {
    throw GeometryError("conv1d: padded length " + std::to_string(len + pl + pr) +
                        " shorter than kernel " + std::to_string(k));
  }
  return (len + pl + pr - k) / stride + 1;
}

void softmax_slice(const double* in, double* out, std::size_t n, std::size_t step) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i * step]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i * step] = std::exp(in[i * step] - mx);
    z += out[i * step];
  }
  for (std::size_t i = 0; i < n; ++i) out[i * step] /= z;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  const bool needs =
      std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  Node n{std::move(value), {}, std::move(inputs), {}, needs};
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor* Tape::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::backward(Var loss) {
  const Tensor& lv = nodes_.at(loss.id).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: seed node must be 1x1, got " + lv.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor(1, 1, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + av.shape_string() + " * " +
                         bv.shape_string() + ")");
  }
  Tensor out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
    if (Tensor* ga = tp.grad_sink(ia)) gemm_nt_acc(g, tp.value_at(ib), *ga);
    if (Tensor* gb = tp.grad_sink(ib)) gemm_tn_acc(tp.value_at(ia), g, *gb);
  });
}

Var transpose(Tape& t, Var a) {
  return t.record(t.value(a).transposed(), {a.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0))) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(c, r) += g(r, c);
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* gi = tp.grad_sink(tp.input(self, k)))
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
    }
  });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row_bias: bias " + bv.shape_string() + " does not fit " +
                         av.shape_string());
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return t.record(std::move(out), {a.id, bias.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0)))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tp.grad_sink(tp.input(self, 1)))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
    if (Tensor* ga = tp.grad_sink(ia)) {
      const Tensor& bv = tp.value_at(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_sink(ib)) {
      const Tensor& av = tp.value_at(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  for (auto& v : out.values()) v *= s;
  return t.record(std::move(out), {a.id}, [s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0)))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var sigmoid(Tape& t, Var a) {
  return t.record(sigmoid(t.value(a)), {a.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0)))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(Tape& t, Var a, Axis axis) {
  return t.record(softmax(t.value(a), axis), {a.id}, [axis](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    Tensor* ga = tp.grad_sink(tp.input(self, 0));
    if (!ga) return;
    const bool per_col = axis == Axis::Col;
    const std::size_t slices = per_col ? y.cols() : y.rows();
    const std::size_t len = per_col ? y.rows() : y.cols();
    for (std::size_t s = 0; s < slices; ++s) {
      auto at = [&](std::size_t i) { return per_col ? i * y.cols() + s : s * y.cols() + i; };
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += y[at(i)] * g[at(i)];
      for (std::size_t i = 0; i < len; ++i) (*ga)[at(i)] += y[at(i)] * (g[at(i)] - dot);
    }
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.record(Tensor(1, 1, s), {a.id}, [](Tape& tp, std::size_t self) {
    const double g = tp.grad_at(self)[0];
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0)))
      for (auto& v : ga->values()) v += g;
  });
}

Var flatten(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  Tensor out(1, av.size(), av.storage());
  return t.record(std::move(out), {a.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_sink(tp.input(self, 0)))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = t.value(parts[0]).cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.cols() != cols) {
      throw DimensionError("concat_rows: column count " + v.shape_string() + " vs " +
                           std::to_string(cols));
    }
    rows += v.rows();
    ids.push_back(p.id);
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + off);
    off += v.size();
  }
  return t.record(std::move(out), std::move(ids), [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < tp.input_count(self); ++k) {
      const std::size_t id = tp.input(self, k);
      const std::size_t n = tp.value_at(id).size();
      if (Tensor* gi = tp.grad_sink(id))
        for (std::size_t i = 0; i < n; ++i) (*gi)[i] += g[off + i];
      off += n;
    }
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.rows() != rows) {
      throw DimensionError("concat_cols: row count " + v.shape_string() + " vs " +
                           std::to_string(rows));
    }
    cols += v.cols();
    ids.push_back(p.id);
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    off += v.cols();
  }
  return t.record(std::move(out), std::move(ids), [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < tp.input_count(self); ++k) {
      const std::size_t id = tp.input(self, k);
      const std::size_t w = tp.value_at(id).cols();
      if (Tensor* gi = tp.grad_sink(id))
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) (*gi)(r, c) += g(r, off + c);
      off += w;
    }
  });
}

Var conv1d(Tape& t, Var signal, Var kernel, std::size_t stride, std::size_t pad_left,
           std::size_t pad_right) {
  const Tensor& kv = t.value(kernel);
  if (kv.rows() != 1) throw DimensionError("conv1d: kernel must be 1xk, got " + kv.shape_string());
  Tensor out = conv1d(t.value(signal), kv.values(), stride, pad_left, pad_right);
  return t.record(std::move(out), {signal.id, kernel.id},
                  [stride, pad_left](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_at(self);
                    const std::size_t is = tp.input(self, 0), ik = tp.input(self, 1);
                    const Tensor& x = tp.value_at(is);
                    const Tensor& k = tp.value_at(ik);
                    Tensor* gx = tp.grad_sink(is);
                    Tensor* gk = tp.grad_sink(ik);
                    const auto len = static_cast<std::ptrdiff_t>(x.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      for (std::size_t j = 0; j < g.cols(); ++j) {
                        const double go = g(r, j);
                        const auto base = static_cast<std::ptrdiff_t>(j * stride) -
                                          static_cast<std::ptrdiff_t>(pad_left);
                        for (std::size_t q = 0; q < k.cols(); ++q) {
                          const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(q);
                          if (src < 0 || src >= len) continue;
                          if (gx) (*gx)(r, static_cast<std::size_t>(src)) += k[q] * go;
                          if (gk) (*gk)[q] += x(r, static_cast<std::size_t>(src)) * go;
                        }
                      }
                    }
                  });
}

Var cross_entropy(Tape& t, Var probs, std::size_t label) {
  const Tensor& p = t.value(probs);
  const double loss = cross_entropy(p.values(), label);
  return t.record(Tensor(1, 1, loss), {probs.id}, [label](Tape& tp, std::size_t self) {
    const double g = tp.grad_at(self)[0];
    const std::size_t ip = tp.input(self, 0);
    const double pl = tp.value_at(ip)[label];
    if (Tensor* gp = tp.grad_sink(ip)) {
      // Below the floor the loss is constant in p.
      if (pl > kLogFloor) (*gp)[label] += -g / pl;
    }
  });
}

// ---------------------------------------------------------------------------
// Plain tensor helpers

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + a.shape_string() + " * " +
                         b.shape_string() + ")");
  }
  Tensor out(a.rows(), b.cols());
  gemm_acc(a, b, out);
  return out;
}

Tensor softmax(const Tensor& a, Axis axis) {
  Tensor out(a.rows(), a.cols());
  if (a.empty()) return out;
  if (axis == Axis::Col) {
    for (std::size_t c = 0; c < a.cols(); ++c)
      softmax_slice(&a(0, c), &out(0, c), a.rows(), a.cols());
  } else {
    for (std::size_t r = 0; r < a.rows(); ++r) softmax_slice(&a(r, 0), &out(r, 0), a.cols(), 1);
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    // Branches keep exp() from overflowing for large |x|.
    if (x >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor conv1d(const Tensor& signal, std::span<const double> kernel, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right) {
  const std::size_t k = kernel.size();
  const std::size_t out_len = conv_out_len(signal.cols(), k, stride, pad_left, pad_right);
  const auto len = static_cast<std::ptrdiff_t>(signal.cols());
  Tensor out(signal.rows(), out_len);
  for (std::size_t r = 0; r < signal.rows(); ++r) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const auto base =
          static_cast<std::ptrdiff_t>(j * stride) - static_cast<std::ptrdiff_t>(pad_left);
      double acc = 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(q);
        if (src >= 0 && src < len) acc += kernel[q] * signal(r, static_cast<std::size_t>(src));
      }
      out(r, j) = acc;
    }
  }
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("cross_entropy: probabilities sum to " + std::to_string(total));
  }
  return -std::log(std::max(probs[label], kLogFloor));
}

// ---------------------------------------------------------------------------
// Gradient checking

std::vector<Tensor> gradients(const ScalarFn& f, std::span<const Tensor> params,
                              double* value_out) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p));
  Var out = f(tape, vars);
  tape.backward(out);
  if (value_out) *value_out = tape.value(out)[0];
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = tape.grad(vars[i]);
    grads.push_back(g.empty() ? Tensor(params[i].rows(), params[i].cols()) : g);
  }
  return grads;
}

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p));
  return tape.value(f(tape, vars))[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params, double step,
                           const std::function<void(std::vector<Tensor>&)>& perturb_analytic) {
  std::vector<Tensor> analytic = gradients(f, params);
  if (perturb_analytic) perturb_analytic(analytic);
  std::vector<Tensor> work(params.begin(), params.end());
  GradCheckResult res;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + step;
      const double up = evaluate(f, work);
      work[p][i] = orig - step;
      const double down = evaluate(f, work);
      work[p][i] = orig;
      const double cd = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double err = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
      if (err > res.max_rel_error) res = {err, p, i};
    }
  }
  return res;
}

}  // namespace mcdc::ad
