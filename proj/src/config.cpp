#include "glocal/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "glocal/errors.hpp"

namespace glocal {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

double to_real(std::string_view s) {
  const std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || end != str.c_str() + str.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + str + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(s) + "'");
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : RunConfig::schema())
    if (k.name == name) return &k;
  return nullptr;
}

void check_value(const ConfigKey& key, const std::string& value) {
  try {
    switch (key.type) {
      case KeyType::uint: to_uint(value); break;
      case KeyType::real: to_real(value); break;
      case KeyType::boolean: to_bool(value); break;
      case KeyType::text: break;
      case KeyType::uint_list: parse_uint_list(value); break;
      case KeyType::layer_range: parse_layer_range(value); break;
    }
  } catch (const ConfigError& e) {
    throw ConfigError(key.name + ": " + e.what());
  }
}

}  // namespace

std::vector<std::size_t> parse_uint_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::string part;
  std::istringstream ss{std::string(text)};
  while (std::getline(ss, part, ',')) out.push_back(to_uint(trim(part)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::vector<std::size_t> parse_layer_range(std::string_view text) {
  const std::string t = trim(text);
  const auto dots = t.find("..");
  if (dots == std::string::npos) return {to_uint(t)};
  const auto a = to_uint(trim(std::string_view(t).substr(0, dots)));
  const auto b = to_uint(trim(std::string_view(t).substr(dots + 2)));
  if (b < a) throw ConfigError("empty layer range '" + t + "'");
  std::vector<std::size_t> out;
  for (auto n = a; n <= b; ++n) out.push_back(n);
  return out;
}

const std::vector<ConfigKey>& RunConfig::schema() {
  static const std::vector<ConfigKey> keys = {
      {"run.seed", KeyType::uint, "1", "root seed; every component seed is derived from it"},
      {"run.threads", KeyType::uint, "0", "worker threads (0 = GLOCAL_THREADS or the OpenMP default)"},
      {"run.out_dir", KeyType::text, ".", "directory for outputs without an explicit path"},

      {"data.train", KeyType::text, "", "training corpus (`labels<TAB>text` lines)"},
      {"data.test", KeyType::text, "", "evaluation corpus"},
      {"data.vocab", KeyType::text, "", "vocabulary file; built from data.train and written here when missing"},
      {"data.num_labels", KeyType::uint, "", "label space size L"},
      {"data.max_len", KeyType::uint, "64", "sequence length including [CLS]"},
      {"data.min_freq", KeyType::uint, "1", "minimum token frequency for the vocabulary"},
      {"data.max_vocab", KeyType::uint, "50000", "maximum number of non-reserved tokens"},

      {"model.num_layers", KeyType::uint, "4", "encoder depth N"},
      {"model.dim", KeyType::uint, "64", "model width d"},
      {"model.heads", KeyType::uint, "4", "self-attention heads"},
      {"model.ffn_dim", KeyType::uint, "256", "feed-forward width"},
      {"model.dropout", KeyType::real, "0", "dropout rate in [0,1)"},
      {"model.pooler", KeyType::boolean, "false", "affine+tanh pooler on the [CLS] embedding"},
      {"model.tau", KeyType::real, "1", "label-attention temperature"},
      {"model.local_layer", KeyType::uint, "1", "encoder layer feeding the local head"},
      {"model.attn_dim", KeyType::uint, "0", "key width d_a (0 = d)"},
      {"model.value_dim", KeyType::uint, "0", "value width d_v (0 = d)"},
      {"model.mlp_hidden", KeyType::uint, "0", "local scorer hidden width (0 = d)"},

      {"train.epochs", KeyType::uint, "10", "passes over the training corpus"},
      {"train.batch_size", KeyType::uint, "16", "documents per optimizer step"},
      {"train.lr_backbone", KeyType::real, "", "encoder learning rate"},
      {"train.lr_pooler", KeyType::real, "", "pooler learning rate"},
      {"train.lr_global", KeyType::real, "", "global label-embedding learning rate"},
      {"train.lr_attention", KeyType::real, "", "local attention (psi_K, psi_V, E_local) learning rate"},
      {"train.lr_mlp", KeyType::real, "", "local scorer learning rate"},
      {"train.beta1", KeyType::real, "0.9", "Adam beta1"},
      {"train.beta2", KeyType::real, "0.999", "Adam beta2"},
      {"train.eps", KeyType::real, "1e-8", "Adam epsilon"},
      {"train.weight_decay", KeyType::real, "0", "decoupled weight decay"},
      {"train.grad_clip", KeyType::real, "0", "global gradient-norm clip (0 = off)"},
      {"train.eval_every", KeyType::uint, "1", "dev evaluation period in epochs (0 = never)"},
      {"train.checkpoint", KeyType::text, "", "checkpoint written after every epoch"},
      {"train.log", KeyType::text, "", "training log CSV"},

      {"eval.checkpoint", KeyType::text, "", "checkpoint to evaluate"},
      {"eval.k", KeyType::uint_list, "1,3,5", "precision cut-offs"},
      {"eval.source", KeyType::text, "", "restrict printed metrics to global|local|final"},
      {"eval.predictions", KeyType::text, "", "prefix for per-source prediction dumps"},
      {"eval.attention", KeyType::text, "", "attention dump path"},
      {"eval.metrics", KeyType::text, "", "metrics CSV path"},

      {"ablate.layers", KeyType::layer_range, "", "local layers to sweep, A..B (default 0..N)"},
      {"ablate.mode", KeyType::text, "retrain", "retrain | fixed_global"},
      {"ablate.csv", KeyType::text, "", "ablation CSV path (default stdout)"},
      {"ablate.plot", KeyType::text, "", "matplotlib script path"},

      {"gradcheck.eps", KeyType::real, "1e-5", "central-difference step"},
      {"gradcheck.tol", KeyType::real, "1e-4", "maximum relative error"},
      {"gradcheck.layers", KeyType::uint, "1", "encoder depth of the tiny model"},
      {"gradcheck.dim", KeyType::uint, "8", "width of the tiny model"},
      {"gradcheck.tokens", KeyType::uint, "6", "content tokens T"},
      {"gradcheck.labels", KeyType::uint, "5", "labels L"},

      {"synth.num_docs", KeyType::uint, "2000", "documents before the 80/20 split"},
      {"synth.num_labels", KeyType::uint, "50", "label space size"},
      {"synth.vocab_size", KeyType::uint, "400", "filler vocabulary size"},
      {"synth.doc_len_min", KeyType::uint, "24", "minimum words per document"},
      {"synth.doc_len_max", KeyType::uint, "48", "maximum words per document"},
      {"synth.topics", KeyType::uint, "10", "number of topics (= topic labels)"},
      {"synth.threshold", KeyType::real, "0.3", "mixture weight that triggers a topic label"},
      {"synth.background_rate", KeyType::real, "0.3", "probability a word is background"},
      {"synth.secondary_prob", KeyType::real, "0.5", "probability of a secondary topic"},
      {"synth.max_keywords", KeyType::uint, "3", "maximum planted keywords per document"},
      {"synth.noise", KeyType::real, "0", "per-document label-flip probability"},
      {"synth.out_dir", KeyType::text, "synthetic", "output directory"},
  };
  return keys;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    auto fail = [&](const std::string& why) { return ConfigError(source + ":" + std::to_string(lineno) + ": " + why); };
    if (t.front() == '[') {
      if (t.back() != ']') throw fail("unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw fail("expected `key = value`");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      cfg.set(key, trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw fail(e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  check_value(*k, value);
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  if (values_.count(key)) return true;
  const ConfigKey* k = find_key(key);
  return k && !k->default_value.empty();
}

std::string RunConfig::get(const std::string& key) const {
  if (const auto it = values_.find(key); it != values_.end()) return it->second;
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  if (k->default_value.empty()) throw ConfigError("'" + key + "' is required (" + k->help + ")");
  return k->default_value;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const { return to_uint(get(key)); }
double RunConfig::get_real(const std::string& key) const { return to_real(get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return to_bool(get(key)); }
std::vector<std::size_t> RunConfig::get_list(const std::string& key) const { return parse_uint_list(get(key)); }
std::vector<std::size_t> RunConfig::get_range(const std::string& key) const { return parse_layer_range(get(key)); }

void RunConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

ModelConfig RunConfig::model_config(std::size_t vocab_size, std::size_t num_labels) const {
  ModelConfig c;
  c.encoder.num_layers = get_uint("model.num_layers");
  c.encoder.model_dim = get_uint("model.dim");
  c.encoder.num_heads = get_uint("model.heads");
  c.encoder.ffn_dim = get_uint("model.ffn_dim");
  c.encoder.max_positions = get_uint("data.max_len");
  c.encoder.vocab_size = vocab_size;
  c.encoder.dropout = get_real("model.dropout");
  c.heads.num_labels = num_labels;
  c.heads.model_dim = c.encoder.model_dim;
  c.heads.pooler = get_bool("model.pooler");
  c.heads.attn_dim = get_uint("model.attn_dim");
  c.heads.value_dim = get_uint("model.value_dim");
  c.heads.mlp_hidden = get_uint("model.mlp_hidden");
  c.heads.tau = get_real("model.tau");
  c.heads.local_layer = get_uint("model.local_layer");
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("model configuration: ") + e.what());
  }
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = get_uint("train.epochs");
  t.batch_size = get_uint("train.batch_size");
  t.lr = TrainConfig::default_rates();
  auto rate = [&](const char* key, std::optional<double>& slot) {
    if (has(key)) slot = get_real(key);
  };
  rate("train.lr_backbone", t.lr.backbone);
  rate("train.lr_pooler", t.lr.pooler);
  rate("train.lr_global", t.lr.global);
  rate("train.lr_attention", t.lr.attention);
  rate("train.lr_mlp", t.lr.mlp);
  t.adam.beta1 = get_real("train.beta1");
  t.adam.beta2 = get_real("train.beta2");
  t.adam.eps = get_real("train.eps");
  t.adam.weight_decay = get_real("train.weight_decay");
  if (const double clip = get_real("train.grad_clip"); clip > 0.0) t.adam.grad_clip = clip;
  t.seed = get_uint("run.seed");
  t.eval_every = get_uint("train.eval_every");
  t.eval_ks = get_list("eval.k");
  if (has("train.checkpoint")) t.checkpoint_path = get("train.checkpoint");
  t.validate();
  return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s = SyntheticSpec::standard(get_uint("synth.num_docs"), static_cast<int>(get_uint("synth.num_labels")),
                                            get_uint("run.seed"), static_cast<int>(get_uint("synth.topics")),
                                            get_real("synth.threshold"));
  s.vocab_size = get_uint("synth.vocab_size");
  s.doc_len_min = get_uint("synth.doc_len_min");
  s.doc_len_max = get_uint("synth.doc_len_max");
  s.background_rate = get_real("synth.background_rate");
  s.secondary_topic_prob = get_real("synth.secondary_prob");
  s.max_keywords = std::min(static_cast<int>(get_uint("synth.max_keywords")), s.num_labels - s.num_topics);
  s.noise = get_real("synth.noise");
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

AblationMode RunConfig::ablation_mode() const {
  const std::string m = get("ablate.mode");
  if (m == "retrain") return AblationMode::retrain;
  if (m == "fixed_global") return AblationMode::fixed_global;
  throw ConfigError("ablate.mode must be retrain or fixed_global, got '" + m + "'");
}

}  // namespace glocal
