#include "glocal/encoder.hpp"

#include <cmath>
#include <numeric>

#include "glocal/errors.hpp"

namespace glocal {

void EncoderConfig::validate() const {
  if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
    throw ValidationError("encoder: model_dim must be a positive multiple of num_heads");
  }
  if (ffn_dim == 0) throw ValidationError("encoder: ffn_dim must be positive");
  if (max_positions < 2) throw ValidationError("encoder: max_positions must be >= 2");
  if (vocab_size < 3) throw ValidationError("encoder: vocab_size must cover the reserved ids");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("encoder: dropout must be in [0,1)");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& c) {
  EncoderParams p;
  const std::size_t d = c.model_dim;
  p.token_embedding = Tensor::zeros({c.vocab_size, d});
  p.position_embedding = Tensor::zeros({c.max_positions, d});
  for (std::size_t n = 0; n < c.num_layers; ++n) {
    EncoderLayerParams l;
    l.ln1_gain = Tensor::filled({d}, 1.0);
    l.ln1_bias = Tensor::zeros({d});
    l.wq = Tensor::zeros({d, d});
    l.bq = Tensor::zeros({d});
    l.wk = Tensor::zeros({d, d});
    l.bk = Tensor::zeros({d});
    l.wv = Tensor::zeros({d, d});
    l.bv = Tensor::zeros({d});
    l.wo = Tensor::zeros({d, d});
    l.bo = Tensor::zeros({d});
    l.ln2_gain = Tensor::filled({d}, 1.0);
    l.ln2_bias = Tensor::zeros({d});
    l.ffn_w1 = Tensor::zeros({d, c.ffn_dim});
    l.ffn_b1 = Tensor::zeros({c.ffn_dim});
    l.ffn_w2 = Tensor::zeros({c.ffn_dim, d});
    l.ffn_b2 = Tensor::zeros({d});
    p.layers.push_back(std::move(l));
  }
  return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& c, Rng& rng) {
  c.validate();
  EncoderParams p = zeros(c);
  const std::size_t d = c.model_dim;
  const double wd = 1.0 / std::sqrt(static_cast<double>(d));
  const double wf = 1.0 / std::sqrt(static_cast<double>(c.ffn_dim));
  p.token_embedding = Tensor::normal({c.vocab_size, d}, rng, 1.0);
  p.position_embedding = Tensor::normal({c.max_positions, d}, rng, 0.1);
  for (EncoderLayerParams& l : p.layers) {
    l.wq = Tensor::normal({d, d}, rng, wd);
    l.wk = Tensor::normal({d, d}, rng, wd);
    l.wv = Tensor::normal({d, d}, rng, wd);
    l.wo = Tensor::normal({d, d}, rng, wd);
    l.ffn_w1 = Tensor::normal({d, c.ffn_dim}, rng, wd);
    l.ffn_w2 = Tensor::normal({c.ffn_dim, d}, rng, wf);
  }
  return p;
}

namespace {

template <class Self, class Fn>
void visit_encoder(Self& self, Fn&& fn) {
  fn("encoder.token_embedding", self.token_embedding);
  fn("encoder.position_embedding", self.position_embedding);
  for (std::size_t n = 0; n < self.layers.size(); ++n) {
    auto& l = self.layers[n];
    const std::string pre = "encoder.layer" + std::to_string(n) + ".";
    fn(pre + "ln1_gain", l.ln1_gain);
    fn(pre + "ln1_bias", l.ln1_bias);
    fn(pre + "wq", l.wq);
    fn(pre + "bq", l.bq);
    fn(pre + "wk", l.wk);
    fn(pre + "bk", l.bk);
    fn(pre + "wv", l.wv);
    fn(pre + "bv", l.bv);
    fn(pre + "wo", l.wo);
    fn(pre + "bo", l.bo);
    fn(pre + "ln2_gain", l.ln2_gain);
    fn(pre + "ln2_bias", l.ln2_bias);
    fn(pre + "ffn_w1", l.ffn_w1);
    fn(pre + "ffn_b1", l.ffn_b1);
    fn(pre + "ffn_w2", l.ffn_w2);
    fn(pre + "ffn_b2", l.ffn_b2);
  }
}

Var linear(ParamBinder& bind, Var x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, bind(w)), bind(b));
}

}  // namespace

void EncoderParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) { visit_encoder(*this, fn); }

void EncoderParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_encoder(*this, fn);
}

Var HiddenStates::layer(std::size_t n) const {
  if (n >= layers.size()) {
    throw RangeError("hidden state layer " + std::to_string(n) + " requested from an encoder with " +
                     std::to_string(num_layers()) + " layers");
  }
  return layers[n];
}

Var embed(ParamBinder& bind, const EncoderParams& params, std::span<const int> token_ids) {
  const std::size_t len = token_ids.size();
  if (len > params.position_embedding.rows()) {
    throw RangeError("sequence of " + std::to_string(len) + " positions exceeds max_positions " +
                     std::to_string(params.position_embedding.rows()));
  }
  std::vector<int> positions(len);
  std::iota(positions.begin(), positions.end(), 0);
  Var tok = embedding(bind(params.token_embedding), token_ids);
  Var pos = embedding(bind(params.position_embedding), positions);
  return add(tok, pos);
}

HiddenStates encode_all_layers(ParamBinder& bind, const EncoderParams& params, const EncoderConfig& config, Var h0,
                               const Mask& mask, const Dropout& dropout) {
  const std::size_t d = config.model_dim;
  const std::size_t heads = config.num_heads;
  const std::size_t dh = d / heads;
  const double attn_tau = std::sqrt(static_cast<double>(dh));
  if (h0.value().rank() != 2 || h0.value().cols() != d || h0.value().rows() != mask.size()) {
    throw DimensionError("encode_all_layers: H0 " + shape_string(h0.shape()) + " does not match d=" +
                         std::to_string(d) + " and mask of " + std::to_string(mask.size()));
  }

  HiddenStates hs;
  hs.mask = mask;
  hs.layers.push_back(h0);
  Var x = h0;
  for (std::size_t n = 0; n < params.layers.size(); ++n) {
    const EncoderLayerParams& l = params.layers[n];

    Var a = layer_norm(x, bind(l.ln1_gain), bind(l.ln1_bias));
    Var q = linear(bind, a, l.wq, l.bq);
    Var k = linear(bind, a, l.wk, l.bk);
    Var v = linear(bind, a, l.wv, l.bv);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var scores = matmul_nt(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh));
      Var probs = softmax_rows(scores, mask, attn_tau);
      head_out.push_back(matmul(probs, slice_cols(v, h * dh, dh)));
    }
    Var attn = linear(bind, heads == 1 ? head_out[0] : concat_cols(head_out), l.wo, l.bo);
    x = add(x, apply_dropout(attn, dropout));

    Var b = layer_norm(x, bind(l.ln2_gain), bind(l.ln2_bias));
    Var f = linear(bind, gelu(linear(bind, b, l.ffn_w1, l.ffn_b1)), l.ffn_w2, l.ffn_b2);
    x = add(x, apply_dropout(f, dropout));

    if (!x.value().all_finite()) {
      throw NumericError("encoder layer " + std::to_string(n + 1) + " produced non-finite activations");
    }
    hs.layers.push_back(x);
  }
  return hs;
}

Var apply_dropout(Var x, const Dropout& dropout) {
  if (!dropout.active()) return x;
  const double keep = 1.0 - dropout.rate;
  Tensor m = Tensor::zeros(x.shape());
  for (double& v : m.data()) v = dropout.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, x.tape().constant(std::move(m)));
}

}  // namespace glocal
