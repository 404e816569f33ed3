#include "glocal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "glocal/errors.hpp"
#include "glocal/model.hpp"

namespace glocal {

namespace {

void validate(const GradCheckOptions& options) {
  if (!(options.eps >= 1e-6 && options.eps <= 1e-4)) {
    throw DomainError("check_gradients: eps must lie in [1e-6, 1e-4], got " + std::to_string(options.eps));
  }
  if (!(options.tol > 0.0)) throw DomainError("check_gradients: tol must be positive");
}

double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw NumericError("check_gradients: function evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport check_gradients(const std::function<double()>& value, const std::vector<Tensor>& analytic,
                                std::span<Tensor* const> params, const GradCheckOptions& options) {
  validate(options);
  if (analytic.size() != params.size()) throw DimensionError("check_gradients: gradient/parameter count mismatch");
  finite_or_throw(value());

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    if (analytic[p].size() != param.size()) throw DimensionError("check_gradients: gradient shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + options.eps;
      const double plus = finite_or_throw(value());
      param[i] = saved - options.eps;
      const double minus = finite_or_throw(value());
      param[i] = saved;

      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = rel;
        report.worst_tensor = p;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

GradCheckReport check_gradients(const TapeFunction& f, std::vector<Tensor>& params,
                                const GradCheckOptions& options) {
  validate(options);
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.variable(p));
    Var out = f(tape, vars);
    finite_or_throw(out.value()[0]);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.gradient(v));
  }
  auto value = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.constant(p));
    return f(tape, vars).value()[0];
  };
  std::vector<Tensor*> ptrs;
  for (Tensor& p : params) ptrs.push_back(&p);
  return check_gradients(value, analytic, ptrs, options);
}

}  // namespace glocal

namespace glocal {

std::vector<GroupGradCheck> check_model_gradients(GlocalModel& model, std::span<const Example* const> batch,
                                                  const GradCheckOptions& options) {
  const auto params = model.parameters();
  const auto analytic = loss_and_gradients(model, batch, LossTerms::both, Execution::serial);
  std::vector<GroupGradCheck> out;
  for (std::size_t g = 0; g < kNumParamGroups; ++g) {
    std::vector<Tensor*> tensors;
    std::vector<Tensor> grads;
    for (const ParamRef& p : params) {
      if (static_cast<std::size_t>(p.group) != g) continue;
      tensors.push_back(p.tensor);
      grads.push_back(analytic.grads[p.index]);
    }
    if (tensors.empty()) continue;
    auto value = [&] { return loss(model, batch, Execution::serial).total; };
    out.push_back({static_cast<ParamGroup>(g), check_gradients(value, grads, tensors, options)});
  }
  return out;
}

}  // namespace glocal
