#pragma once

// Finite-difference verification of every differentiable op, one AdaFormer
// block and the end-to-end loss of both heads.

#include <string>
#include <vector>

namespace cutrack {

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-4;
/// Absolute bound for components whose exact gradient is zero.
inline constexpr double kNullGradientTolerance = 1e-8;

struct SuiteCase {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::string worst;

  bool pass() const { return checked > 0 && max_rel_error < tolerance; }
};

std::vector<SuiteCase> primitive_gradchecks();
/// n = 8 points, k = 4, dim = 4; parameters and input features.
std::vector<SuiteCase> block_gradchecks();
/// Loss of each head on 32-point toys with respect to every parameter.
std::vector<SuiteCase> head_gradchecks();

std::vector<SuiteCase> full_gradcheck_suite();

}  // namespace cutrack
