#include "glocal/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "glocal/ablation.hpp"
#include "glocal/config.hpp"
#include "glocal/errors.hpp"
#include "glocal/kernels.hpp"
#include "glocal/predictions.hpp"
#include "glocal/rng.hpp"
#include "glocal/synthetic.hpp"
#include "glocal/train.hpp"

namespace glocal {

namespace fs = std::filesystem;

namespace {

/// Flag values as typed; applied on top of the config file.
struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<std::size_t> local_layer;
  std::string layers, source, k;
  std::optional<double> lr_backbone, lr_pooler, lr_global, lr_attention, lr_mlp;
  std::optional<std::size_t> epochs, batch_size, max_len;
  std::string train, test, vocab, checkpoint, log, out;
  std::optional<std::size_t> num_labels;
  std::vector<std::string> inputs;  // ensemble
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "key = value file with [section] headers");
  cmd->add_option("--set", o.sets, "override any config key, KEY=VALUE (repeatable)");
  cmd->add_option("--seed", o.seed, "root seed (run.seed)");
}

void add_data(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--train", o.train, "training corpus (data.train)");
  cmd->add_option("--test", o.test, "evaluation corpus (data.test)");
  cmd->add_option("--vocab", o.vocab, "vocabulary file (data.vocab)");
  cmd->add_option("--num-labels", o.num_labels, "label space size (data.num_labels)");
  cmd->add_option("--max-len", o.max_len, "sequence length including [CLS] (data.max_len)");
}

void add_model(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--tau", o.tau, "label-attention temperature (model.tau)");
  cmd->add_option("--local-layer", o.local_layer, "encoder layer feeding the local head (model.local_layer)");
}

void add_training(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs", o.epochs, "training epochs (train.epochs)");
  cmd->add_option("--batch-size", o.batch_size, "documents per step (train.batch_size)");
  cmd->add_option("--lr-backbone", o.lr_backbone, "encoder learning rate");
  cmd->add_option("--lr-pooler", o.lr_pooler, "pooler learning rate");
  cmd->add_option("--lr-global", o.lr_global, "global classifier learning rate");
  cmd->add_option("--lr-attention", o.lr_attention, "local attention learning rate");
  cmd->add_option("--lr-mlp", o.lr_mlp, "local scorer learning rate");
  cmd->add_option("--k", o.k, "precision cut-offs, e.g. 1,3,5 (eval.k)");
}

template <class T>
void put(RunConfig& cfg, const std::string& key, const std::optional<T>& v) {
  if (v) {
    std::ostringstream s;
    s.precision(17);
    s << *v;
    cfg.set(key, s.str());
  }
}

void put(RunConfig& cfg, const std::string& key, const std::string& v) {
  if (!v.empty()) cfg.set(key, v);
}

RunConfig build_config(const Overrides& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  put(cfg, "run.seed", o.seed);
  put(cfg, "model.tau", o.tau);
  put(cfg, "model.local_layer", o.local_layer);
  put(cfg, "ablate.layers", o.layers);
  put(cfg, "eval.source", o.source);
  put(cfg, "eval.k", o.k);
  put(cfg, "train.lr_backbone", o.lr_backbone);
  put(cfg, "train.lr_pooler", o.lr_pooler);
  put(cfg, "train.lr_global", o.lr_global);
  put(cfg, "train.lr_attention", o.lr_attention);
  put(cfg, "train.lr_mlp", o.lr_mlp);
  put(cfg, "train.epochs", o.epochs);
  put(cfg, "train.batch_size", o.batch_size);
  put(cfg, "data.max_len", o.max_len);
  put(cfg, "data.num_labels", o.num_labels);
  put(cfg, "data.train", o.train);
  put(cfg, "data.test", o.test);
  put(cfg, "data.vocab", o.vocab);
  return cfg;
}

fs::path out_path(const RunConfig& cfg, const std::string& key, const std::string& fallback) {
  if (cfg.has(key)) return cfg.get(key);
  return fs::path(cfg.get("run.out_dir")) / fallback;
}

struct Data {
  Vocab vocab;
  Corpus train;
  std::optional<Corpus> test;
};

/// Loads the corpora named in the config. The vocabulary comes from
/// `vocab_path` when it exists and is otherwise built from the training
/// corpus and saved there.
Data load_data(const RunConfig& cfg, const fs::path& vocab_path, bool need_train, std::ostream& out) {
  const int num_labels = static_cast<int>(cfg.get_uint("data.num_labels"));
  const std::size_t max_len = cfg.get_uint("data.max_len");
  Data d;
  std::optional<TextCorpus> train_text;
  if (need_train) train_text = load_corpus(cfg.get("data.train"), num_labels);
  if (!vocab_path.empty() && fs::exists(vocab_path)) {
    d.vocab = Vocab::load(vocab_path);
  } else {
    if (!train_text) throw ConfigError("no vocabulary at '" + vocab_path.string() + "' and no training corpus");
    d.vocab = build_vocab(*train_text, cfg.get_uint("data.min_freq"), cfg.get_uint("data.max_vocab"));
    if (!vocab_path.empty()) {
      d.vocab.save(vocab_path);
      out << "wrote vocabulary (" << d.vocab.size() << " ids) to " << vocab_path.string() << '\n';
    }
  }
  if (train_text) d.train = encode_corpus(*train_text, d.vocab, max_len);
  if (cfg.has("data.test")) d.test = encode_corpus(load_corpus(cfg.get("data.test"), num_labels), d.vocab, max_len);
  return d;
}

void print_report(std::ostream& out, const MetricsReport& r, std::optional<Source> only = std::nullopt) {
  char buf[64];
  for (Source s : kAllSources) {
    if (only && *only != s) continue;
    std::snprintf(buf, sizeof buf, "%-7s", std::string(source_name(s)).c_str());
    out << buf;
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      std::snprintf(buf, sizeof buf, "  P@%zu=%.4f", r.ks[i], r.precision[static_cast<std::size_t>(s)][i]);
      out << buf;
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "jsd(global,local)=%.4f  docs=%zu\n", r.mean_jsd, r.num_docs);
  out << buf;
}

fs::path vocab_for(const RunConfig& cfg, const fs::path& checkpoint) {
  if (cfg.has("data.vocab")) return cfg.get("data.vocab");
  fs::path p = checkpoint;
  p += ".vocab";
  return p;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const fs::path ckpt = out_path(cfg, "train.checkpoint", "model.ckpt");
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  Data data = load_data(cfg, vocab_for(cfg, ckpt), true, out);
  const ModelConfig mc = cfg.model_config(data.vocab.size(), data.train.num_labels);
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_path = ckpt;

  GlocalModel model = GlocalModel::init(mc, tc.seed);
  out << "training " << model.parameter_count() << " parameters on " << data.train.size() << " documents\n";
  const Corpus* dev = data.test ? &*data.test : nullptr;
  const TrainingLog log = fit(model, data.train, dev, tc, nullptr, [&](const LogRow& row) {
    if (row.dev) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %zu  loss %.5f  dev P@1 global %.4f local %.4f final %.4f\n", row.epoch,
                    row.loss.total, row.dev->at(Source::global, row.dev->ks.front()),
                    row.dev->at(Source::local, row.dev->ks.front()), row.dev->at(Source::final, row.dev->ks.front()));
      out << buf;
    }
  });
  const fs::path log_path = out_path(cfg, "train.log", "train_log.csv");
  std::ofstream log_out(log_path);
  if (!log_out) throw IoError("cannot write " + log_path.string());
  log.write_csv(log_out, tc.eval_ks);
  out << "final loss " << log.rows.back().loss.total << "; checkpoint " << ckpt.string() << ", log "
      << log_path.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const fs::path ckpt = cfg.get("eval.checkpoint");
  Checkpoint ck = load_checkpoint(ckpt);
  const auto vocab = Vocab::load(vocab_for(cfg, ckpt));
  if (vocab.size() != ck.model.config.encoder.vocab_size) {
    throw ValidationError("vocabulary has " + std::to_string(vocab.size()) + " ids, checkpoint expects " +
                          std::to_string(ck.model.config.encoder.vocab_size));
  }
  const int num_labels = static_cast<int>(ck.model.num_labels());
  const Corpus test =
      encode_corpus(load_corpus(cfg.get("data.test"), num_labels), vocab, ck.model.config.encoder.max_positions);
  const bool want_attention = cfg.has("eval.attention");
  const PredictionBatch preds = predict_corpus(ck.model, test, want_attention);
  const MetricsReport report = evaluate(preds, corpus_truths(test), cfg.get_list("eval.k"));
  std::optional<Source> only;
  if (cfg.has("eval.source")) only = parse_source(cfg.get("eval.source"));
  print_report(out, report, only);

  const auto ids = index_ids(test.size());
  if (cfg.has("eval.metrics")) {
    std::ofstream m(cfg.get("eval.metrics"));
    if (!m) throw IoError("cannot write " + cfg.get("eval.metrics"));
    report.write_csv(m);
  }
  if (cfg.has("eval.predictions")) {
    for (Source s : kAllSources) {
      if (only && *only != s) continue;
      const fs::path p = cfg.get("eval.predictions") + "." + std::string(source_name(s)) + ".txt";
      write_prediction_dump(p, make_dump(preds.probs(s), ids));
    }
  }
  if (want_attention) {
    std::ofstream a(cfg.get("eval.attention"));
    if (!a) throw IoError("cannot write " + cfg.get("eval.attention"));
    std::vector<Mask> masks;
    for (const Example& ex : test.examples) masks.push_back(ex.mask);
    write_attention_dump(a, *preds.attention, masks, ids);
  }
  return 0;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.has("data.test")) throw ConfigError("ablate needs an evaluation corpus (data.test)");
  const fs::path vocab_path = cfg.has("data.vocab") ? fs::path(cfg.get("data.vocab")) : fs::path();
  Data data = load_data(cfg, vocab_path, true, out);
  const ModelConfig mc = cfg.model_config(data.vocab.size(), data.train.num_labels);
  const TrainConfig tc = cfg.train_config();
  std::vector<std::size_t> layers;
  if (cfg.has("ablate.layers")) {
    layers = cfg.get_range("ablate.layers");
  } else {
    for (std::size_t n = 0; n <= mc.encoder.num_layers; ++n) layers.push_back(n);
  }
  const auto rows = layer_ablation(mc, tc, data.train, *data.test, layers, cfg.ablation_mode());
  if (cfg.has("ablate.csv")) {
    const fs::path csv = cfg.get("ablate.csv");
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv.string());
    write_ablation_csv(f, rows);
    if (cfg.has("ablate.plot")) {
      const fs::path script = cfg.get("ablate.plot");
      std::ofstream s(script);
      if (!s) throw IoError("cannot write " + script.string());
      fs::path png = script;
      png.replace_extension(".png");
      write_ablation_plot_script(s, csv, png);
    }
  }
  write_ablation_csv(out, rows);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const std::size_t tokens = cfg.get_uint("gradcheck.tokens");
  const std::size_t labels = cfg.get_uint("gradcheck.labels");
  const std::size_t dim = cfg.get_uint("gradcheck.dim");
  const std::uint64_t seed = cfg.get_uint("run.seed");

  ModelConfig mc;
  mc.encoder.num_layers = cfg.get_uint("gradcheck.layers");
  mc.encoder.model_dim = dim;
  mc.encoder.num_heads = 2;
  mc.encoder.ffn_dim = 2 * dim;
  mc.encoder.max_positions = tokens + 1;
  mc.encoder.vocab_size = kNumReservedIds + 8;
  mc.heads.num_labels = labels;
  mc.heads.model_dim = dim;
  mc.heads.pooler = true;
  mc.heads.tau = cfg.get_real("model.tau");
  mc.heads.local_layer = std::min<std::size_t>(cfg.get_uint("model.local_layer"), mc.encoder.num_layers);
  GlocalModel model = GlocalModel::init(mc, seed);

  Rng rng(derive_seed(seed, "gradcheck.data"));
  std::vector<Example> docs(2);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    Example& ex = docs[d];
    ex.token_ids.push_back(kClsId);
    ex.mask.push_back(1);
    const std::size_t real = d == 0 ? tokens : std::max<std::size_t>(1, tokens / 2);
    for (std::size_t i = 0; i < tokens; ++i) {
      const bool pad = i >= real;
      ex.token_ids.push_back(pad ? kPadId : static_cast<int>(kNumReservedIds + rng.uniform_index(8)));
      ex.mask.push_back(pad ? 0 : 1);
    }
    for (std::size_t l = 0; l < labels; ++l)
      if (rng.bernoulli(0.4)) ex.labels.push_back(static_cast<int>(l));
    if (ex.labels.empty()) ex.labels.push_back(0);
  }
  std::vector<const Example*> batch;
  for (const Example& ex : docs) batch.push_back(&ex);

  GradCheckOptions opts;
  opts.eps = cfg.get_real("gradcheck.eps");
  opts.tol = cfg.get_real("gradcheck.tol");
  const auto reports = check_model_gradients(model, batch, opts);
  double worst = 0.0;
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-18s entries=%-6zu max_rel_err=%.3e\n", std::string(group_name(r.group)).c_str(),
                  r.report.entries_checked, r.report.max_rel_error);
    out << buf;
    worst = std::max(worst, r.report.max_rel_error);
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tol %.1e): %s\n", worst, opts.tol,
                worst <= opts.tol ? "PASS" : "FAIL");
  out << buf;
  return worst <= opts.tol ? 0 : 1;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const SyntheticSpec spec = cfg.synthetic_spec();
  const SyntheticData data = generate_synthetic(spec);
  const fs::path dir = cfg.get("synth.out_dir");
  fs::create_directories(dir);
  save_corpus(dir / "train.txt", data.train);
  save_corpus(dir / "test.txt", data.test);
  {
    std::ofstream k(dir / "keywords.tsv");
    if (!k) throw IoError("cannot write " + (dir / "keywords.tsv").string());
    for (const auto& [label, word] : spec.keyword_map) k << label << '\t' << word << '\n';
  }
  std::ofstream c(dir / "data.cfg");
  if (!c) throw IoError("cannot write " + (dir / "data.cfg").string());
  c << "[data]\n"
    << "train = " << (dir / "train.txt").string() << '\n'
    << "test = " << (dir / "test.txt").string() << '\n'
    << "num_labels = " << spec.num_labels << '\n';
  out << "wrote " << data.train.docs.size() << " train / " << data.test.docs.size() << " test documents to "
      << dir.string() << '\n';
  return 0;
}

int cmd_ensemble(const Overrides& o, std::ostream& out) {
  std::vector<PredictionDump> dumps;
  for (const std::string& p : o.inputs) dumps.push_back(read_prediction_dump(fs::path(p)));
  const PredictionDump merged = ensemble(dumps);
  if (o.out.empty()) {
    write_prediction_dump(out, merged);
  } else {
    write_prediction_dump(fs::path(o.out), merged);
    out << "averaged " << dumps.size() << " files over " << merged.doc_ids.size() << " documents into " << o.out
        << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Global + local label-attention multi-label text classifier", "glocal"};
  app.require_subcommand(1);
  app.footer("Environment: GLOCAL_THREADS bounds worker threads.");
  Overrides o;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + log");
  add_common(train, o);
  add_data(train, o);
  add_model(train, o);
  add_training(train, o);
  train->add_option("--checkpoint", o.checkpoint, "checkpoint path (train.checkpoint)");
  train->add_option("--log", o.log, "training log CSV (train.log)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate (eval.checkpoint)");
  eval->add_option("--test", o.test, "evaluation corpus (data.test)");
  eval->add_option("--vocab", o.vocab, "vocabulary (default <checkpoint>.vocab)");
  eval->add_option("--source", o.source, "global|local|final (eval.source)");
  eval->add_option("--k", o.k, "precision cut-offs (eval.k)");
  eval->add_option("--predictions", o.out, "prefix for prediction dumps (eval.predictions)");

  auto* ablate = app.add_subcommand("ablate", "sweep the local layer and report P@k and JSD");
  add_common(ablate, o);
  add_data(ablate, o);
  add_model(ablate, o);
  add_training(ablate, o);
  ablate->add_option("--layers", o.layers, "local layers A..B (ablate.layers)");
  ablate->add_option("--out", o.log, "CSV output (ablate.csv)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model on a tiny config");
  add_common(gradcheck, o);
  add_model(gradcheck, o);

  auto* synth = app.add_subcommand("synth", "generate the planted-keyword corpus");
  add_common(synth, o);
  synth->add_option("--out", o.out, "output directory (synth.out_dir)");

  auto* ens = app.add_subcommand("ensemble", "average prediction dumps");
  ens->add_option("files", o.inputs, "prediction dumps")->required();
  ens->add_option("--out", o.out, "output path (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code;
  }

  try {
    kernels::configure_threads_from_env();
    if (ens->parsed()) return cmd_ensemble(o, out);

    RunConfig cfg = build_config(o);
    if (cfg.get_uint("run.threads") > 0) kernels::set_max_threads(static_cast<int>(cfg.get_uint("run.threads")));
    if (train->parsed()) {
      put(cfg, "train.checkpoint", o.checkpoint);
      put(cfg, "train.log", o.log);
      return cmd_train(cfg, out);
    }
    if (eval->parsed()) {
      put(cfg, "eval.checkpoint", o.checkpoint);
      put(cfg, "eval.predictions", o.out);
      return cmd_eval(cfg, out);
    }
    if (ablate->parsed()) {
      put(cfg, "ablate.csv", o.log);
      return cmd_ablate(cfg, out);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, out);
    if (synth->parsed()) {
      put(cfg, "synth.out_dir", o.out);
      return cmd_synth(cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace glocal
