#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glocal/autodiff.hpp"

namespace glocal {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Builds a scalar on `tape` from variables bound to the parameter tensors.
using TapeFunction = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-5;
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor). Entries whose
  /// gradients are both below the floor are judged on absolute error.
  double floor = 1e-6;
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every entry of every tensor in `params`.
/// `params` is perturbed in place and restored. DomainError for eps outside
/// [1e-6, 1e-4]; NumericError when f evaluates to a non-finite value.
GradCheckReport check_gradients(const TapeFunction& f, std::vector<Tensor>& params,
                                const GradCheckOptions& options = {});

/// Variant for functions that read their parameters from elsewhere: `value`
/// evaluates f at the current parameter values; `analytic` returns the
/// reverse-mode gradients aligned with `params`.
GradCheckReport check_gradients(const std::function<double()>& value,
                                const std::vector<Tensor>& analytic,
                                std::span<Tensor* const> params, const GradCheckOptions& options = {});

}  // namespace glocal
