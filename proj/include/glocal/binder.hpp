#pragma once

#include <optional>
#include <unordered_map>

#include "glocal/autodiff.hpp"
#include "glocal/rng.hpp"

namespace glocal {

/// Puts parameter tensors on a tape on first use. Trainable binders create
/// gradient-carrying leaves; inference binders create constants, so no
/// backward closures are kept.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var operator()(const Tensor& param) {
    const auto it = bound_.find(&param);
    if (it != bound_.end()) return it->second;
    Var v = trainable_ ? tape_.variable(param) : tape_.constant(param);
    bound_.emplace(&param, v);
    return v;
  }

  std::optional<Var> find(const Tensor& param) const {
    const auto it = bound_.find(&param);
    if (it == bound_.end()) return std::nullopt;
    return it->second;
  }

  Tape& tape() { return tape_; }
  bool trainable() const { return trainable_; }

 private:
  Tape& tape_;
  bool trainable_;
  std::unordered_map<const Tensor*, Var> bound_;
};

/// Inverted dropout: kept activations are scaled by 1 / (1 - rate).
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
};

Var apply_dropout(Var x, const Dropout& dropout);

}  // namespace glocal
