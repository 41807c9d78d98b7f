#pragma once

// Self-contained invariant checks shared by `mcdc verify` and the acceptance
// suite. Every check is seeded and returns a pass/fail line instead of
// throwing.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcdc/parallel.hpp"

namespace mcdc::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 7;
  // Corrupts one convolution-kernel gradient before the gradient check.
  bool inject_kernel_fault = false;
  std::size_t threads = default_threads();
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradStep = 1e-5;

// Every parameter of tiny MCDC (T=8, H=2), the matrix variant and the ANN.
CheckResult check_gradients(const VerifyOptions& options);
// Columns of every attention map (both routes, both head kinds) sum to 1.
CheckResult check_attention_stochastic(const VerifyOptions& options, std::size_t inputs = 1000);
// 5x8 and 5x12 windows give 7 probabilities; zero parameters give uniform.
CheckResult check_forward_contract(const VerifyOptions& options);
CheckResult check_conv_oracle(const VerifyOptions& options, std::size_t geometries = 100);
CheckResult check_wilcoxon_oracle(const VerifyOptions& options, std::size_t max_n = 8);
CheckResult check_auc_oracle(const VerifyOptions& options, std::size_t sets = 100);
// Window counts, facility disjointness, interpolation idempotence and the
// normalisation round trip.
CheckResult check_pipeline_laws(const VerifyOptions& options);
// Same seed gives bit-identical parameters, independent of worker count.
CheckResult check_determinism(const VerifyOptions& options);
CheckResult check_lr_schedule(const VerifyOptions& options);

std::vector<CheckResult> run_all(const VerifyOptions& options);
std::string format_results(std::span<const CheckResult> results);
bool all_passed(std::span<const CheckResult> results);

}  // namespace mcdc::verify
