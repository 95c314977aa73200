#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tbn/tensor.hpp"

namespace tbn {

// Central-difference verification of reverse-mode gradients, double precision.
// `forward` recomputes the op from the current input values; the harness
// attaches a fixed random linear readout so the compared quantity is a scalar.
struct FdSpec {
  std::vector<Tensor<double>*> inputs;  // leaves, requires_grad set by harness
  std::function<Tensor<double>()> forward;
  int max_coords_per_input = 64;  // FD probes per tensor (seed-chosen subset)
  double h = 1e-5;
};

// Worst relative disagreement |analytic - numeric| / max(|a|, |n|, 1e-6)
// over the probed coordinates.
double fd_worst_rel(const FdSpec& spec, uint64_t seed);

struct CheckResult {
  std::string op;
  double worst_rel = 0;
  double tol = 0;
  bool pass = false;
};

std::vector<std::string> available_checks();
CheckResult run_check(const std::string& name, uint64_t seed);
std::vector<CheckResult> run_all_checks(uint64_t seed);

// Dual-route equivalence: GEMM/im2col production kernels against plain
// nested-loop references, the factorized bilinear unit against its expanded
// dense form, and the separable spatio-temporal factorization identity.
// For these, worst_rel holds the worst absolute element difference.
std::vector<CheckResult> run_oracle_suite(uint64_t seed);

}  // namespace tbn
