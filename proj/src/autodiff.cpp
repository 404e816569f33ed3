#include "glocal/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glocal/errors.hpp"
#include "glocal/kernels.hpp"

namespace glocal {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error("op inputs recorded on different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw Error("backward root belongs to another tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw DimensionError("backward root must be a scalar, got " + shape_string(root.shape()));
  }
  grad_buffer(root.id())[0] += 1.0;
  backward_visits_ = 0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
    ++backward_visits_;
  }
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <class F, class D>
Var unary(Var a, F f, D deriv) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t in = a.id();
  return a.tape().record(std::move(out), {a}, [in, deriv](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const Tensor& xv = t.value(in);
    const Tensor& yv = t.value(self);
    auto gx = t.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

double sigmoid_scalar(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus_scalar(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    if (t.requires_grad(ia)) kernels::gemm_nt(g, t.value(ib).data(), t.grad_buffer(ia), m, n, k);
    if (t.requires_grad(ib)) kernels::gemm_tn(t.value(ia).data(), g, t.grad_buffer(ib), k, m, n);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul_nt", av);
  require_matrix("matmul_nt", bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()) + "^T");
  }
  Tensor out = Tensor::zeros({m, n});
  kernels::gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    // out = A B^T: dA = G B, dB = G^T A
    if (t.requires_grad(ia)) kernels::gemm_nn(g, t.value(ib).data(), t.grad_buffer(ia), m, n, k);
    if (t.requires_grad(ib)) kernels::gemm_tn(g, t.value(ia).data(), t.grad_buffer(ib), n, m, k);
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      auto gi = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() == 0 || bv.size() != xv.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match rows of " +
                         shape_string(xv.shape()));
  }
  const std::size_t n = bv.size();
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    if (t.requires_grad(ix)) {
      auto gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto ga = t.grad_buffer(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(ia)) v += g;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var row(Var a, std::size_t r) {
  Tensor out = a.value().row(r);
  const std::size_t ia = a.id();
  const std::size_t c = out.size();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += g[j];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  require_matrix("slice_cols", av);
  const std::size_t m = av.rows(), n = av.cols();
  if (start + count > n) {
    throw RangeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_string(av.shape()));
  }
  Tensor out = Tensor::zeros({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = av.at(i, start + j);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, m, n, start, count](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out = Tensor::zeros({m, total});
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& pv = parts[pi].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[pi]; ++j) out.at(i, offset + j) = pv.at(i, j);
    offset += widths[pi];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(std::move(out), parts, [ids, widths, m, total](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      if (t.requires_grad(ids[pi])) {
        auto gp = t.grad_buffer(ids[pi]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[pi]; ++j) gp[i * widths[pi] + j] += g[i * total + off + j];
      }
      off += widths[pi];
    }
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + x * pdf;
      });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match last axis of " + shape_string(xv.shape()));
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out = Tensor::zeros(xv.shape());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mean) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          auto gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (t.requires_grad(ix)) {
          auto gx = t.grad_buffer(ix);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              sum_dh += dh;
              sum_dh_xh += dh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              gx[r * d + j] += rstd[r] * (dh - inv_d * sum_dh - xhat[r * d + j] * inv_d * sum_dh_xh);
            }
          }
        }
      });
}

Var softmax_rows(Var scores, const Mask& mask, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax_rows: temperature must be positive, got " + std::to_string(tau));
  const Tensor& sv = scores.value();
  require_matrix("softmax_rows", sv);
  const std::size_t r = sv.rows(), c = sv.cols();
  if (mask.size() != c) {
    throw DimensionError("softmax_rows: mask has " + std::to_string(mask.size()) + " entries for " +
                         shape_string(sv.shape()));
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateInputError("softmax_rows: every column is masked");
  }
  Tensor out = Tensor::zeros({r, c});
  kernels::softmax_rows(sv.data(), mask, tau, out.data(), r, c);
  const std::size_t is = scores.id();
  return scores.tape().record(std::move(out), {scores}, [is, r, c, tau, mask](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto gs = t.grad_buffer(is);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        if (mask[j]) gs[i * c + j] += y[i * c + j] * (g[i * c + j] - dot) / tau;
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_matrix("embedding", tv);
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor out = Tensor::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw RangeError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab));
    }
    std::copy_n(tv.data().begin() + ids[i] * d, d, out.data().begin() + i * d);
  }
  const std::size_t it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [it, d, idv = std::move(idv)](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto gt = t.grad_buffer(it);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += g[i * d + j];
  });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.size() != targets.size()) {
    throw DimensionError("bce_with_logits: logits " + shape_string(z.shape()) + " vs targets " +
                         shape_string(targets.shape()));
  }
  if (z.size() == 0) throw DimensionError("bce_with_logits: empty label space");
  for (double y : targets.data()) {
    if (y != 0.0 && y != 1.0) throw DomainError("bce_with_logits: targets must be 0 or 1");
  }
  const double inv_l = 1.0 / static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(z[i], 0.0) - targets[i] * z[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const std::size_t iz = logits.id();
  return logits.tape().record(Tensor::scalar(total * inv_l), {logits},
                              [iz, targets, inv_l](Tape& t, std::size_t self) {
                                const double g = t.grad(self)[0];
                                const Tensor& zv = t.value(iz);
                                auto gz = t.grad_buffer(iz);
                                for (std::size_t i = 0; i < zv.size(); ++i)
                                  gz[i] += g * (sigmoid_scalar(zv[i]) - targets[i]) * inv_l;
                              });
}

}  // namespace glocal
