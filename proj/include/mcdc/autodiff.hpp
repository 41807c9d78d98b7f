#pragma once

// Define-by-run reverse-mode differentiation over 2-D tensors.
//
// A Tape is rebuilt for every forward pass. Ops append nodes in execution
// order, so node ids are already a topological order and backward() is a
// single reverse sweep.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "mcdc/tensor.hpp"

namespace mcdc::ad {

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Empty tensor when the node took no part in the last backward pass.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps every node once in reverse order.
  // Gradients from a previous call are discarded first.
  void backward(Var loss);

  // --- op-author interface -------------------------------------------------
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_at(std::size_t id) const { return nodes_[id].grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  std::size_t input_count(std::size_t id) const { return nodes_[id].inputs.size(); }
  // Zero-initialised gradient slot for `id`, or nullptr if it needs none.
  Tensor* grad_sink(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class Axis {
  Row,  // each row is a slice
  Col,  // each column is a slice
};

Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
// a (r x c) plus bias (1 x c) broadcast over rows.
Var add_row_bias(Tape& t, Var a, Var bias);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var sigmoid(Tape& t, Var a);
Var softmax(Tape& t, Var a, Axis axis);
Var sum(Tape& t, Var a);
Var flatten(Tape& t, Var a);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, std::span<const Var> parts);

// Cross-correlates every row of `signal` with the same 1 x k `kernel`.
// Out-of-range taps read zero. Output length is
// floor((L + pad_left + pad_right - k) / stride) + 1.
Var conv1d(Tape& t, Var signal, Var kernel, std::size_t stride, std::size_t pad_left,
           std::size_t pad_right);
inline Var conv1d(Tape& t, Var signal, Var kernel, std::size_t stride, std::size_t padding) {
  return conv1d(t, signal, kernel, stride, padding, padding);
}

inline constexpr double kLogFloor = 1e-12;

// -ln(max(probs[label], 1e-12)) for a single row or column probability vector.
Var cross_entropy(Tape& t, Var probs, std::size_t label);

// ---------------------------------------------------------------------------
// Plain-tensor forward helpers (no tape) for callers that only need values.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, Axis axis);
Tensor sigmoid(const Tensor& a);
Tensor conv1d(const Tensor& signal, std::span<const double> kernel, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right);
double cross_entropy(std::span<const double> probs, std::size_t label);

// ---------------------------------------------------------------------------
// Finite-difference check of a scalar function built on a tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

// Max over every parameter entry of
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
// `perturb_analytic`, if set, is applied to the analytic gradients before the
// comparison (fault injection for self-tests).
GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params, double step,
                           const std::function<void(std::vector<Tensor>&)>& perturb_analytic = {});

// Analytic gradients of f at params, one tensor per parameter.
std::vector<Tensor> gradients(const ScalarFn& f, std::span<const Tensor> params,
                              double* value_out = nullptr);

}  // namespace mcdc::ad
