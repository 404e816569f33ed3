#pragma once

#include <functional>
#include <string>

#include "glocal/autodiff.hpp"
#include "glocal/binder.hpp"

namespace glocal {

struct HeadConfig {
  std::size_t num_labels = 0;
  std::size_t model_dim = 64;
  bool pooler = false;
  std::size_t pooler_dim = 0;  // d' of the global head; 0 = model_dim
  std::size_t attn_dim = 0;    // d_a; 0 = model_dim
  std::size_t value_dim = 0;   // d_v; 0 = model_dim
  std::size_t mlp_hidden = 0;  // d_h; 0 = model_dim
  double tau = 1.0;
  std::size_t local_layer = 1;

  std::size_t global_dim() const { return pooler && pooler_dim ? pooler_dim : model_dim; }
  std::size_t key_dim() const { return attn_dim ? attn_dim : model_dim; }
  std::size_t val_dim() const { return value_dim ? value_dim : model_dim; }
  std::size_t hidden_dim() const { return mlp_hidden ? mlp_hidden : model_dim; }

  void validate(std::size_t num_encoder_layers) const;  // ValidationError
  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Scores a document's final-layer [CLS] embedding against one embedding per
/// label: z_l = <pool(h_cls), e_l>, with pool = tanh(affine) or identity.
struct GlobalHead {
  Tensor label_embedding;  // [L x d']
  bool has_pooler = false;
  Tensor pooler_weight;  // [d x d'] when has_pooler
  Tensor pooler_bias;    // [d']

  static GlobalHead init(const HeadConfig& config, Rng& rng);
};

/// Label-word attention. Each label embedding queries key projections of the
/// token states of one encoder layer; the attention-weighted value projection
/// goes through a two-layer ReLU MLP to a single logit per label.
struct LocalHead {
  Tensor key_weight, key_bias;      // psi_K: [d x d_a], [d_a]
  Tensor value_weight, value_bias;  // psi_V: [d x d_v], [d_v]
  Tensor label_embedding;           // [L x d_a]
  Tensor mlp_w1, mlp_b1;            // [d_v x d_h], [d_h]
  Tensor mlp_w2, mlp_b2;            // [d_h x 1], [1]
  double tau = 1.0;
  std::size_t local_layer = 1;

  static LocalHead init(const HeadConfig& config, Rng& rng);
};

/// [B x d] -> [B x L]. DimensionError when the widths disagree.
Var global_logits(ParamBinder& bind, const GlobalHead& head, Var h_cls);

/// Attention map alpha [L x (T+1)] of one document: softmax over unmasked
/// positions (the [CLS] position included) of <psi_K(h_i), e_j> / tau.
/// DegenerateInputError when every position is masked.
Var label_attention(ParamBinder& bind, const LocalHead& head, Var h_local, const Mask& mask);

struct LocalOutput {
  Var logits;     // [1 x L]
  Var attention;  // [L x (T+1)]
};

LocalOutput local_logits(ParamBinder& bind, const LocalHead& head, Var h_local, const Mask& mask);

void for_each_param(GlobalHead& head, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(LocalHead& head, const std::function<void(const std::string&, Tensor&)>& fn);

}  // namespace glocal
