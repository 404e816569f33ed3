#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glocal/autodiff.hpp"
#include "glocal/binder.hpp"
#include "glocal/tensor.hpp"

namespace glocal {

struct EncoderConfig {
  std::size_t num_layers = 4;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_positions = 64;
  std::size_t vocab_size = 0;
  double dropout = 0.0;

  void validate() const;  // ValidationError
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab x d]
  Tensor position_embedding;  // [max_positions x d]
  std::vector<EncoderLayerParams> layers;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);
  static EncoderParams zeros(const EncoderConfig& config);

  /// Visits every tensor with its canonical name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

/// Outputs H^(0)..H^(N) of one document, each [(T+1) x d]. H^(0) is the token
/// plus position embedding before any block.
struct HiddenStates {
  std::vector<Var> layers;
  Mask mask;

  std::size_t num_layers() const { return layers.size() - 1; }
  /// H^(n); RangeError when n > N.
  Var layer(std::size_t n) const;
};

/// H0[i] = token_embedding[id_i] + position_embedding[i]. RangeError on ids
/// outside the vocabulary or sequences longer than max_positions.
Var embed(ParamBinder& bind, const EncoderParams& params, std::span<const int> token_ids);

/// Pre-norm blocks: x += MHA(LN1(x)) with keys restricted to the mask, then
/// x += FFN(LN2(x)) with GELU. Records every block output. NumericError naming
/// the layer when a block produces non-finite values.
HiddenStates encode_all_layers(ParamBinder& bind, const EncoderParams& params, const EncoderConfig& config, Var h0,
                               const Mask& mask, const Dropout& dropout = {});

}  // namespace glocal
