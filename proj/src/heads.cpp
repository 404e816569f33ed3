#include "glocal/heads.hpp"

#include <cmath>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"

namespace glocal {

void HeadConfig::validate(std::size_t num_encoder_layers) const {
  if (num_labels < 1) throw ValidationError("heads: need at least one label");
  if (model_dim == 0) throw ValidationError("heads: model_dim must be positive");
  if (!(tau > 0.0)) throw ValidationError("heads: temperature must be positive");
  if (local_layer > num_encoder_layers) {
    throw ValidationError("heads: local layer " + std::to_string(local_layer) + " exceeds encoder depth " +
                          std::to_string(num_encoder_layers));
  }
}

GlobalHead GlobalHead::init(const HeadConfig& c, Rng& rng) {
  GlobalHead h;
  const std::size_t d = c.model_dim, dp = c.global_dim();
  h.has_pooler = c.pooler;
  if (c.pooler) {
    h.pooler_weight = Tensor::normal({d, dp}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    h.pooler_bias = Tensor::zeros({dp});
  }
  h.label_embedding = Tensor::normal({c.num_labels, dp}, rng, 1.0 / std::sqrt(static_cast<double>(dp)));
  return h;
}

LocalHead LocalHead::init(const HeadConfig& c, Rng& rng) {
  LocalHead h;
  const std::size_t d = c.model_dim, da = c.key_dim(), dv = c.val_dim(), dh = c.hidden_dim();
  auto scaled = [&](std::size_t rows, std::size_t cols) {
    return Tensor::normal({rows, cols}, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
  };
  h.key_weight = scaled(d, da);
  h.key_bias = Tensor::zeros({da});
  h.value_weight = scaled(d, dv);
  h.value_bias = Tensor::zeros({dv});
  h.label_embedding = Tensor::normal({c.num_labels, da}, rng, 1.0 / std::sqrt(static_cast<double>(da)));
  h.mlp_w1 = scaled(dv, dh);
  h.mlp_b1 = Tensor::zeros({dh});
  h.mlp_w2 = scaled(dh, 1);
  h.mlp_b2 = Tensor::zeros({1});
  h.tau = c.tau;
  h.local_layer = c.local_layer;
  return h;
}

Var global_logits(ParamBinder& bind, const GlobalHead& head, Var h_cls) {
  const Tensor& hv = h_cls.value();
  if (hv.rank() != 2) throw DimensionError("global_logits: expected [batch x d], got " + shape_string(hv.shape()));
  Var feature = h_cls;
  if (head.has_pooler) {
    if (hv.cols() != head.pooler_weight.rows()) {
      throw DimensionError("global_logits: [CLS] width " + std::to_string(hv.cols()) + " vs pooler " +
                           shape_string(head.pooler_weight.shape()));
    }
    feature = tanh(add_bias(matmul(h_cls, bind(head.pooler_weight)), bind(head.pooler_bias)));
  }
  if (feature.value().cols() != head.label_embedding.cols()) {
    throw DimensionError("global_logits: feature width " + std::to_string(feature.value().cols()) +
                         " vs label embeddings " + shape_string(head.label_embedding.shape()));
  }
  return matmul_nt(feature, bind(head.label_embedding));
}

Var label_attention(ParamBinder& bind, const LocalHead& head, Var h_local, const Mask& mask) {
  const Tensor& hv = h_local.value();
  if (hv.rank() != 2 || hv.cols() != head.key_weight.rows()) {
    throw DimensionError("label_attention: token states " + shape_string(hv.shape()) + " vs key projection " +
                         shape_string(head.key_weight.shape()));
  }
  Var keys = add_bias(matmul(h_local, bind(head.key_weight)), bind(head.key_bias));
  Var scores = matmul_nt(bind(head.label_embedding), keys);  // [L x (T+1)]
  return softmax_rows(scores, mask, head.tau);
}

LocalOutput local_logits(ParamBinder& bind, const LocalHead& head, Var h_local, const Mask& mask) {
  Var alpha = label_attention(bind, head, h_local, mask);
  Var values = add_bias(matmul(h_local, bind(head.value_weight)), bind(head.value_bias));
  Var pooled = matmul(alpha, values);  // v_j, [L x d_v]
  Var hidden = relu(add_bias(matmul(pooled, bind(head.mlp_w1)), bind(head.mlp_b1)));
  Var out = add_bias(matmul(hidden, bind(head.mlp_w2)), bind(head.mlp_b2));  // [L x 1]
  return {reshape(out, {1, out.value().rows()}), alpha};
}

void for_each_param(GlobalHead& head, const std::function<void(const std::string&, Tensor&)>& fn) {
  if (head.has_pooler) {
    fn("global.pooler_weight", head.pooler_weight);
    fn("global.pooler_bias", head.pooler_bias);
  }
  fn("global.label_embedding", head.label_embedding);
}

void for_each_param(LocalHead& head, const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("local.key_weight", head.key_weight);
  fn("local.key_bias", head.key_bias);
  fn("local.value_weight", head.value_weight);
  fn("local.value_bias", head.value_bias);
  fn("local.label_embedding", head.label_embedding);
  fn("local.mlp_w1", head.mlp_w1);
  fn("local.mlp_b1", head.mlp_b1);
  fn("local.mlp_w2", head.mlp_w2);
  fn("local.mlp_b2", head.mlp_b2);
}

}  // namespace glocal
