#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "harmnet/error.hpp"
#include "harmnet/tape.hpp"
#include "harmnet/tensor.hpp"

namespace harmnet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central-difference check of reverse-mode gradients. `f` builds the scalar
// objective on the given tape, binding each parameter in `params` as a leaf
// under its name and reading the current values (storage is shared, so
// in-place perturbations are visible to `f`). `f` must be deterministic:
// dropout off or seed-fixed.
inline GradCheckResult finite_diff_check(
    const std::function<Tensor(Tape&)>& f,
    const std::vector<std::pair<std::string, Tensor>>& params,
    double epsilon) {
  auto eval = [&f]() {
    Tape tape;
    Tensor loss = f(tape);
    if (!loss.is_scalar())
      throw ContractError("autodiff: finite_diff_check objective is not scalar");
    return loss.at(0);
  };

  const double v1 = eval();
  const double v2 = eval();
  if (v1 != v2)
    throw ContractError(
        "autodiff: finite_diff_check objective is non-deterministic (" +
        std::to_string(v1) + " vs " + std::to_string(v2) + ")");

  Tape tape;
  Tensor loss = f(tape);
  GradientMap analytic = tape.backward(loss);

  GradCheckResult res;
  for (const auto& [name, param] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end())
      throw ContractError("autodiff: parameter '" + name +
                          "' not bound by the objective");
    const auto& grad = it->second.values();
    auto& vals = const_cast<Tensor&>(param).values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + epsilon;
      const double fp = eval();
      vals[i] = orig - epsilon;
      const double fm = eval();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = grad[i];
      const double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = static_cast<std::int64_t>(i);
        res.analytic_at_worst = a;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace harmnet
