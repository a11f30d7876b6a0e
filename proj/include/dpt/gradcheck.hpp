#pragma once

#include <string>
#include <vector>

namespace dpt {

// Outcome of one component's central finite-difference sweep (64-bit,
// h = 1e-5, rel err = |a-n| / max(1e-6, |a|+|n|)).
struct FDReport {
  std::string component;
  int64_t probes = 0;
  double max_rel = 0;
  double tol = 0;
  bool pass = false;
  std::string worst;  // coordinate, analytic and numeric value at max_rel
};

// Names: matmul, softmax, tanh, relu, gelu, layernorm, linear,
// vanilla_embed, bilinear, depatch, attention, block, model.
std::vector<std::string> gradcheck_components();

// Runs one component (or all when `component` is empty).  `corrupt` names a
// component whose analytic gradient is deliberately damaged — the negative
// control for the harness itself.
std::vector<FDReport> run_gradcheck(uint64_t seed, const std::string& component = "",
                                    const std::string& corrupt = "");

}  // namespace dpt
