#include <cmath>

#include "glocal/errors.hpp"
#include "glocal/train.hpp"

namespace glocal {

void AdamConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad clip must be positive");
}

OptimizerState OptimizerState::for_model(const GlocalModel& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) {
    s.m.push_back(Tensor::zeros(p.tensor->shape()));
    s.v.push_back(Tensor::zeros(p.tensor->shape()));
  }
  return s;
}

void adam_step(ParamGroups& groups, OptimizerState& state, const AdamConfig& config, std::vector<Tensor>& grads) {
  double sq_norm = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) {
      if (!std::isfinite(v)) throw NumericError("adam_step: non-finite gradient, step aborted");
      sq_norm += v * v;
    }
  }
  double clip_scale = 1.0;
  if (config.grad_clip) {
    const double norm = std::sqrt(sq_norm);
    if (norm > *config.grad_clip) clip_scale = *config.grad_clip / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (ParamGroupEntry& group : groups.groups) {
    for (ParamRef& p : group.params) {
      if (p.index >= grads.size() || p.index >= state.m.size()) {
        throw DimensionError("adam_step: state does not cover parameter " + p.name);
      }
      auto theta = p.tensor->data();
      const auto g = grads[p.index].data();
      auto m = state.m[p.index].data();
      auto v = state.v[p.index].data();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g[i] * clip_scale;
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        theta[i] -= group.lr * (m_hat / (std::sqrt(v_hat) + config.eps) + config.weight_decay * theta[i]);
      }
    }
  }
  for (Tensor& g : grads)
    for (double& v : g.data()) v = 0.0;
}

}  // namespace glocal
