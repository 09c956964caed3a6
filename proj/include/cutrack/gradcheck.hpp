#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "cutrack/nn.hpp"
#include "cutrack/tensor.hpp"

namespace cutrack {

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst;  ///< "<name>[<flat index>]" of the worst component
  std::size_t checked = 0;
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares the tape gradient of a scalar function of x against central
/// finite differences, component by component.
GradcheckReport gradcheck(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step = 1e-5);

/// Same check with respect to every parameter in the store. When
/// max_per_param > 0, that many components per parameter are drawn at random
/// (seeded) instead of all of them. When select is set, only parameters it
/// accepts are checked.
using ParamFilter = std::function<bool(const Parameter&)>;
GradcheckReport gradcheck_params(const std::function<Var(Tape&)>& f, ParameterStore& store, double step = 1e-5,
                                 std::size_t max_per_param = 0, std::uint64_t seed = 0, const ParamFilter& select = {});

/// For parameters whose true gradient is identically zero: max over selected
/// components of max(|analytic|, |finite difference|), reported in max_rel_error.
GradcheckReport null_gradient_check(const std::function<Var(Tape&)>& f, ParameterStore& store,
                                    const ParamFilter& select, double step = 1e-5);

}  // namespace cutrack
