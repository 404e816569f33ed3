#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glocal/data.hpp"
#include "glocal/encoder.hpp"
#include "glocal/gradcheck.hpp"
#include "glocal/heads.hpp"

namespace glocal {

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig heads;  // heads.model_dim must equal encoder.model_dim

  /// Default toy configuration: N=4, d=64, 4 heads, FFN 256.
  static ModelConfig toy(std::size_t vocab_size, std::size_t num_labels, std::size_t max_len = 64);
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Source { global, local, final };
inline constexpr std::array<Source, 3> kAllSources = {Source::global, Source::local, Source::final};
std::string_view source_name(Source s);
Source parse_source(std::string_view name);

enum class ParamGroup { backbone, global_pooler, global_classifier, local_attention, local_mlp };
inline constexpr std::size_t kNumParamGroups = 5;
std::string_view group_name(ParamGroup g);

struct ParamRef {
  std::string name;
  ParamGroup group;
  Tensor* tensor;
  std::size_t index;  // position in GlocalModel::parameters()
};

struct ConstParamRef {
  std::string name;
  ParamGroup group;
  const Tensor* tensor;
};

/// Shared encoder with the global and local classification heads.
class GlocalModel {
 public:
  ModelConfig config;
  EncoderParams encoder;
  GlobalHead global_head;
  LocalHead local_head;

  static GlocalModel init(const ModelConfig& config, std::uint64_t seed);

  /// Every trainable tensor with its canonical name and group, in a fixed order.
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::size_t parameter_count() const;
  std::size_t num_labels() const { return config.heads.num_labels; }

  /// Zeroes E_global and the last MLP layer so both heads output logit 0.
  void zero_classifier_outputs();
};

/// Everything recorded for one document.
struct DocumentForward {
  HiddenStates hidden;
  Var global_logits;  // [1 x L]
  Var local_logits;   // [1 x L]
  Var attention;      // [L x (T+1)]
};

/// One encoder pass; H^(N)[0] feeds the global head and H^(local_layer) the
/// local head.
DocumentForward forward_document(ParamBinder& bind, const GlocalModel& model, std::span<const int> token_ids,
                                 const Mask& mask, const Dropout& dropout = {});

enum class Execution { serial, parallel };

/// Probabilities per document and label; p_final = (p_local + p_global) / 2.
struct PredictionBatch {
  Tensor p_global;  // [B x L]
  Tensor p_local;
  Tensor p_final;
  std::optional<Tensor> attention;  // [B x L x S] when requested

  const Tensor& probs(Source s) const;
  std::size_t size() const { return p_final.rows(); }
};

PredictionBatch forward(const GlocalModel& model, std::span<const Example* const> batch, bool keep_attention = false,
                        Execution exec = Execution::parallel);
PredictionBatch predict_corpus(const GlocalModel& model, const Corpus& corpus, bool keep_attention = false,
                               Execution exec = Execution::parallel);

struct LossBreakdown {
  double total = 0.0;
  double global = 0.0;
  double local = 0.0;
};

enum class LossTerms { both, global_only, local_only };

struct LossAndGradients {
  LossBreakdown loss;
  std::vector<Tensor> grads;  // aligned with model.parameters()
};

/// L_total = BCE(z_global, y) + BCE(z_local, y) per document, averaged over
/// the batch. Documents are differentiated on separate tapes (in parallel when
/// requested) and their gradients summed in batch order, so both execution
/// modes give bit-identical results.
LossAndGradients loss_and_gradients(const GlocalModel& model, std::span<const Example* const> batch,
                                    LossTerms terms = LossTerms::both, Execution exec = Execution::parallel,
                                    std::optional<std::uint64_t> dropout_seed = std::nullopt);
LossBreakdown loss(const GlocalModel& model, std::span<const Example* const> batch,
                   Execution exec = Execution::parallel);

/// Multi-hot target vector of length num_labels.
Tensor label_targets(const std::vector<int>& labels, std::size_t num_labels);

/// Per row: the k label ids with the highest score, ties to the lower id.
/// ValidationError unless 1 <= k <= L.
std::vector<std::vector<int>> rank_labels(const Tensor& scores, std::size_t k);
std::vector<std::vector<int>> predict_topk(const GlocalModel& model, std::span<const Example* const> batch,
                                           std::size_t k, Source source);

/// Learning rates for the five parameter groups. Unset entries are a
/// ConfigError in param_groups().
struct LrConfig {
  std::optional<double> backbone, pooler, global, attention, mlp;

  static LrConfig uniform(double rate);
  std::optional<double> get(ParamGroup g) const;
};

struct ParamGroupEntry {
  ParamGroup group;
  double lr = 0.0;
  std::vector<ParamRef> params;
};

struct ParamGroups {
  std::vector<ParamGroupEntry> groups;  // indexed by ParamGroup

  std::size_t parameter_count() const;
  const ParamGroupEntry& operator[](ParamGroup g) const { return groups[static_cast<std::size_t>(g)]; }
};

ParamGroups param_groups(GlocalModel& model, const LrConfig& lr);

struct GroupGradCheck {
  ParamGroup group;
  GradCheckReport report;
};

/// Finite-difference check of L_total over the batch, one report per
/// non-empty parameter group. Uses serial execution.
std::vector<GroupGradCheck> check_model_gradients(GlocalModel& model, std::span<const Example* const> batch,
                                                  const GradCheckOptions& options = {});

}  // namespace glocal
