#include "cutrack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cutrack {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void note(GradcheckReport& r, double err, const std::string& name, std::size_t i) {
  ++r.checked;
  if (r.worst.empty() || err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst = name + "[" + std::to_string(i) + "]";
  }
}

}  // namespace

GradcheckReport gradcheck(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step) {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.leaf(x);
    Var y = f(tape, xv);
    tape.backward(y);
    analytic = tape.grad_of(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    return f(tape, tape.leaf(at)).value().item();
  };
  GradcheckReport r;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = eval(probe);
    probe[i] = x[i] - step;
    const double fm = eval(probe);
    probe[i] = x[i];
    note(r, relative_error(analytic[i], (fp - fm) / (2.0 * step)), "x", i);
  }
  return r;
}

GradcheckReport gradcheck_params(const std::function<Var(Tape&)>& f, ParameterStore& store, double step,
                                 std::size_t max_per_param, std::uint64_t seed, const ParamFilter& select) {
  store.zero_grad();
  {
    Tape tape;
    Var y = f(tape);
    tape.backward(y);
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).value().item();
  };
  Rng rng(seed);
  GradcheckReport r;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Parameter& param = store[p];
    if (select && !select(param)) continue;
    std::vector<std::size_t> comps(param.value.size());
    std::iota(comps.begin(), comps.end(), std::size_t{0});
    if (max_per_param > 0 && comps.size() > max_per_param) {
      for (std::size_t i = 0; i < max_per_param; ++i) {
        std::swap(comps[i], comps[i + rng.index(comps.size() - i)]);
      }
      comps.resize(max_per_param);
    }
    for (std::size_t i : comps) {
      const double orig = param.value[i];
      param.value[i] = orig + step;
      const double fp = eval();
      param.value[i] = orig - step;
      const double fm = eval();
      param.value[i] = orig;
      note(r, relative_error(param.grad[i], (fp - fm) / (2.0 * step)), param.name, i);
    }
  }
  return r;
}

GradcheckReport null_gradient_check(const std::function<Var(Tape&)>& f, ParameterStore& store,
                                    const ParamFilter& select, double step) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  GradcheckReport r;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Parameter& param = store[p];
    if (!select(param)) continue;
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double orig = param.value[i];
      param.value[i] = orig + step;
      double fp = 0.0;
      {
        Tape tape;
        fp = f(tape).value().item();
      }
      param.value[i] = orig - step;
      double fm = 0.0;
      {
        Tape tape;
        fm = f(tape).value().item();
      }
      param.value[i] = orig;
      note(r, std::max(std::abs(param.grad[i]), std::abs((fp - fm) / (2.0 * step))), param.name, i);
    }
  }
  return r;
}

}  // namespace cutrack
