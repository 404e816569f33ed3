#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "glocal/tensor.hpp"

namespace glocal {

class Tape;

/// Per-position keep flags; nonzero = real token.
using Mask = std::vector<std::uint8_t>;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended as ops execute, so the
/// node list is already in topological order; backward walks it once in
/// reverse. A tape belongs to one thread; data-parallel training uses one tape
/// per document.
class Tape {
 public:
  /// Propagates the gradient of node `self` into the gradients of its inputs.
  using Backward = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Records an op result. The node requires a gradient iff any input does;
  /// `backward` is dropped otherwise.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient buffer for `id`, zero-allocated on first use.
  std::span<double> grad_buffer(std::size_t id);
  /// Read-only gradient; empty when nothing flowed into the node.
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient shaped like the node value (zeros when nothing flowed in).
  Tensor gradient(Var v) const;

  /// Seeds d(root)/d(root) = 1 and runs every recorded backward once in
  /// reverse order. `root` must hold a single element.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  /// Number of backward functions run by the last backward() call.
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

// --- differentiable primitives -------------------------------------------
// All inputs must live on the same tape. Shape violations raise
// DimensionError naming both shapes.

/// a[m x k] * b[k x n]
Var matmul(Var a, Var b);
/// a[m x k] * b[n x k]^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// x[m x n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var reshape(Var a, Shape shape);
/// Row r of a matrix as [1 x cols].
Var row(Var a, std::size_t r);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);

Var relu(Var a);
/// Exact GELU, x * Phi(x).
Var gelu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);

/// Per-row normalisation over the last axis followed by gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Row-wise softmax of scores / tau over the columns with mask[c] != 0.
/// Masked columns come out exactly 0.
/// DomainError when tau <= 0, DegenerateInputError when every column is masked.
Var softmax_rows(Var scores, const Mask& mask, double tau);

/// Gathers rows of table[V x d] for each id -> [ids x d]. RangeError on bad ids.
Var embedding(Var table, std::span<const int> ids);

/// Mean over the L entries of softplus(z) - y*z, the stable form of binary
/// cross entropy on sigmoid(z). Targets must be 0 or 1.
Var bce_with_logits(Var logits, const Tensor& targets);

// --- plain (non-recorded) helpers ------------------------------------------

double sigmoid_scalar(double z);
double softplus_scalar(double z);

}  // namespace glocal
