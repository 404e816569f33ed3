#include "glocal/model.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"

namespace glocal {

ModelConfig ModelConfig::toy(std::size_t vocab_size, std::size_t num_labels, std::size_t max_len) {
  ModelConfig c;
  c.encoder.num_layers = 4;
  c.encoder.model_dim = 64;
  c.encoder.num_heads = 4;
  c.encoder.ffn_dim = 256;
  c.encoder.max_positions = max_len;
  c.encoder.vocab_size = vocab_size;
  c.heads.num_labels = num_labels;
  c.heads.model_dim = 64;
  c.heads.local_layer = 1;
  c.heads.tau = 1.0;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  heads.validate(encoder.num_layers);
  if (heads.model_dim != encoder.model_dim) throw ValidationError("head width does not match encoder width");
}

std::string_view source_name(Source s) {
  switch (s) {
    case Source::global: return "global";
    case Source::local: return "local";
    case Source::final: return "final";
  }
  return "?";
}

Source parse_source(std::string_view name) {
  for (Source s : kAllSources)
    if (source_name(s) == name) return s;
  throw ValidationError("unknown prediction source '" + std::string(name) + "' (expected global|local|final)");
}

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::global_pooler: return "global_pooler";
    case ParamGroup::global_classifier: return "global_classifier";
    case ParamGroup::local_attention: return "local_attention";
    case ParamGroup::local_mlp: return "local_mlp";
  }
  return "?";
}

GlocalModel GlocalModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  GlocalModel m;
  m.config = config;
  Rng enc_rng(derive_seed(seed, "init.encoder"));
  Rng global_rng(derive_seed(seed, "init.global"));
  Rng local_rng(derive_seed(seed, "init.local"));
  m.encoder = EncoderParams::init(config.encoder, enc_rng);
  m.global_head = GlobalHead::init(config.heads, global_rng);
  m.local_head = LocalHead::init(config.heads, local_rng);
  return m;
}

std::vector<ParamRef> GlocalModel::parameters() {
  std::vector<ParamRef> out;
  encoder.for_each([&](const std::string& name, Tensor& t) { out.push_back({name, ParamGroup::backbone, &t, out.size()}); });
  for_each_param(global_head, [&](const std::string& name, Tensor& t) {
    const bool pooler = name.starts_with("global.pooler");
    out.push_back({name, pooler ? ParamGroup::global_pooler : ParamGroup::global_classifier, &t, out.size()});
  });
  for_each_param(local_head, [&](const std::string& name, Tensor& t) {
    const bool mlp = name.starts_with("local.mlp");
    out.push_back({name, mlp ? ParamGroup::local_mlp : ParamGroup::local_attention, &t, out.size()});
  });
  return out;
}

std::vector<ConstParamRef> GlocalModel::parameters() const {
  std::vector<ConstParamRef> out;
  for (const ParamRef& p : const_cast<GlocalModel*>(this)->parameters()) out.push_back({p.name, p.group, p.tensor});
  return out;
}

std::size_t GlocalModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

void GlocalModel::zero_classifier_outputs() {
  global_head.label_embedding = Tensor::zeros(global_head.label_embedding.shape());
  local_head.mlp_w2 = Tensor::zeros(local_head.mlp_w2.shape());
  local_head.mlp_b2 = Tensor::zeros(local_head.mlp_b2.shape());
}

DocumentForward forward_document(ParamBinder& bind, const GlocalModel& model, std::span<const int> token_ids,
                                 const Mask& mask, const Dropout& dropout) {
  if (token_ids.size() != mask.size()) throw DimensionError("token ids and mask lengths differ");
  DocumentForward out;
  Var h0 = embed(bind, model.encoder, token_ids);
  out.hidden = encode_all_layers(bind, model.encoder, model.config.encoder, h0, mask, dropout);
  Var h_cls = row(out.hidden.layer(out.hidden.num_layers()), 0);
  out.global_logits = global_logits(bind, model.global_head, h_cls);
  LocalOutput local = local_logits(bind, model.local_head, out.hidden.layer(model.local_head.local_layer), mask);
  out.local_logits = local.logits;
  out.attention = local.attention;
  return out;
}

const Tensor& PredictionBatch::probs(Source s) const {
  switch (s) {
    case Source::global: return p_global;
    case Source::local: return p_local;
    case Source::final: return p_final;
  }
  return p_final;
}

namespace {

// Runs body(i) for i in [0, n), on OpenMP threads when requested. The first
// exception (by index) is rethrown after the loop.
template <class Body>
void for_each_document(std::size_t n, Execution exec, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

PredictionBatch forward(const GlocalModel& model, std::span<const Example* const> batch, bool keep_attention,
                        Execution exec) {
  const std::size_t b = batch.size(), l = model.num_labels();
  PredictionBatch out;
  out.p_global = Tensor::zeros({b, l});
  out.p_local = Tensor::zeros({b, l});
  out.p_final = Tensor::zeros({b, l});
  const std::size_t seq = b ? batch[0]->token_ids.size() : 0;
  if (keep_attention) {
    for (const Example* ex : batch)
      if (ex->token_ids.size() != seq) throw DimensionError("attention export needs equal sequence lengths");
    out.attention = Tensor::zeros({b, l, seq});
  }
  for_each_document(b, exec, [&](std::size_t i) {
    Tape tape;
    ParamBinder bind(tape, false);
    const DocumentForward f = forward_document(bind, model, batch[i]->token_ids, batch[i]->mask);
    const Tensor& zg = f.global_logits.value();
    const Tensor& zl = f.local_logits.value();
    for (std::size_t j = 0; j < l; ++j) {
      const double pg = sigmoid_scalar(zg[j]);
      const double pl = sigmoid_scalar(zl[j]);
      out.p_global.at(i, j) = pg;
      out.p_local.at(i, j) = pl;
      out.p_final.at(i, j) = 0.5 * (pl + pg);
    }
    if (keep_attention) {
      const Tensor& a = f.attention.value();
      std::copy(a.data().begin(), a.data().end(), out.attention->data().begin() + static_cast<std::ptrdiff_t>(i * l * seq));
    }
  });
  return out;
}

PredictionBatch predict_corpus(const GlocalModel& model, const Corpus& corpus, bool keep_attention, Execution exec) {
  std::vector<const Example*> all;
  all.reserve(corpus.size());
  for (const Example& ex : corpus.examples) all.push_back(&ex);
  return forward(model, all, keep_attention, exec);
}

Tensor label_targets(const std::vector<int>& labels, std::size_t num_labels) {
  Tensor y = Tensor::zeros({num_labels});
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
      throw RangeError("label id " + std::to_string(l) + " outside label space of " + std::to_string(num_labels));
    }
    y[static_cast<std::size_t>(l)] = 1.0;
  }
  return y;
}

LossAndGradients loss_and_gradients(const GlocalModel& model, std::span<const Example* const> batch, LossTerms terms,
                                    Execution exec, std::optional<std::uint64_t> dropout_seed) {
  if (batch.empty()) throw ValidationError("loss over an empty batch");
  const auto params = model.parameters();
  const std::size_t b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);

  LossAndGradients out;
  out.grads.reserve(params.size());
  for (const auto& p : params) out.grads.push_back(Tensor::zeros(p.tensor->shape()));

  std::vector<LossBreakdown> doc_loss(b);
  // Parallel runs keep every document's gradients until the ordered reduction.
  std::vector<std::vector<Tensor>> doc_grads(exec == Execution::parallel ? b : 0);

  auto accumulate = [&](std::vector<Tensor>& into, const std::vector<Tensor>& from) {
    for (std::size_t p = 0; p < into.size(); ++p) {
      auto dst = into[p].data();
      const auto src = from[p].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  };

  for_each_document(b, exec, [&](std::size_t i) {
    const Example& ex = *batch[i];
    Tape tape;
    ParamBinder bind(tape, true);
    std::optional<Rng> rng;
    Dropout dropout;
    if (dropout_seed && model.config.encoder.dropout > 0.0) {
      rng.emplace(derive_seed(*dropout_seed, "dropout", i));
      dropout = Dropout{model.config.encoder.dropout, &*rng};
    }
    const DocumentForward f = forward_document(bind, model, ex.token_ids, ex.mask, dropout);
    const Tensor y = label_targets(ex.labels, model.num_labels());
    Var lg = bce_with_logits(f.global_logits, y);
    Var ll = bce_with_logits(f.local_logits, y);
    doc_loss[i] = {lg.value()[0] + ll.value()[0], lg.value()[0], ll.value()[0]};
    Var objective = terms == LossTerms::both ? add(lg, ll) : terms == LossTerms::global_only ? lg : ll;
    tape.backward(scale(objective, inv_b));

    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
      const auto v = bind.find(*p.tensor);
      grads.push_back(v ? tape.gradient(*v) : Tensor::zeros(p.tensor->shape()));
    }
    if (exec == Execution::parallel) doc_grads[i] = std::move(grads);
    else accumulate(out.grads, grads);
  });

  if (exec == Execution::parallel)
    for (std::size_t i = 0; i < b; ++i) accumulate(out.grads, doc_grads[i]);
  for (const LossBreakdown& l : doc_loss) {
    out.loss.total += l.total * inv_b;
    out.loss.global += l.global * inv_b;
    out.loss.local += l.local * inv_b;
  }
  return out;
}

LossBreakdown loss(const GlocalModel& model, std::span<const Example* const> batch, Execution exec) {
  if (batch.empty()) throw ValidationError("loss over an empty batch");
  const std::size_t b = batch.size();
  std::vector<LossBreakdown> doc_loss(b);
  for_each_document(b, exec, [&](std::size_t i) {
    Tape tape;
    ParamBinder bind(tape, false);
    const DocumentForward f = forward_document(bind, model, batch[i]->token_ids, batch[i]->mask);
    const Tensor y = label_targets(batch[i]->labels, model.num_labels());
    const double g = bce_with_logits(f.global_logits, y).value()[0];
    const double l = bce_with_logits(f.local_logits, y).value()[0];
    doc_loss[i] = {g + l, g, l};
  });
  LossBreakdown out;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (const LossBreakdown& l : doc_loss) {
    out.total += l.total * inv_b;
    out.global += l.global * inv_b;
    out.local += l.local * inv_b;
  }
  return out;
}

std::vector<std::vector<int>> rank_labels(const Tensor& scores, std::size_t k) {
  const std::size_t rows = scores.rows(), l = scores.cols();
  if (k < 1 || k > l) {
    throw ValidationError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(l) + "]");
  }
  std::vector<std::vector<int>> out(rows);
  std::vector<int> idx(l);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
      const double sa = scores.at(r, static_cast<std::size_t>(a));
      const double sb = scores.at(r, static_cast<std::size_t>(b));
      return sa > sb || (sa == sb && a < b);
    });
    out[r].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

std::vector<std::vector<int>> predict_topk(const GlocalModel& model, std::span<const Example* const> batch,
                                           std::size_t k, Source source) {
  if (k < 1 || k > model.num_labels()) {
    throw ValidationError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(model.num_labels()) + "]");
  }
  return rank_labels(forward(model, batch).probs(source), k);
}

LrConfig LrConfig::uniform(double rate) { return LrConfig{rate, rate, rate, rate, rate}; }

std::optional<double> LrConfig::get(ParamGroup g) const {
  switch (g) {
    case ParamGroup::backbone: return backbone;
    case ParamGroup::global_pooler: return pooler;
    case ParamGroup::global_classifier: return global;
    case ParamGroup::local_attention: return attention;
    case ParamGroup::local_mlp: return mlp;
  }
  return std::nullopt;
}

std::size_t ParamGroups::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups)
    for (const auto& p : g.params) n += p.tensor->size();
  return n;
}

ParamGroups param_groups(GlocalModel& model, const LrConfig& lr) {
  ParamGroups out;
  for (std::size_t i = 0; i < kNumParamGroups; ++i) {
    const auto g = static_cast<ParamGroup>(i);
    const auto rate = lr.get(g);
    if (!rate) throw ConfigError("missing learning rate for parameter group '" + std::string(group_name(g)) + "'");
    if (!(*rate >= 0.0)) throw ConfigError("learning rate for '" + std::string(group_name(g)) + "' must be >= 0");
    out.groups.push_back({g, *rate, {}});
  }
  for (ParamRef& p : model.parameters()) out.groups[static_cast<std::size_t>(p.group)].params.push_back(p);
  return out;
}

}  // namespace glocal
