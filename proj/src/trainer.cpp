#include <cmath>
#include <ostream>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"
#include "glocal/train.hpp"

namespace glocal {

LrConfig TrainConfig::default_rates() {
  LrConfig lr;
  lr.backbone = 1e-3;
  lr.pooler = 2e-3;
  lr.global = 5e-3;
  lr.attention = 2e-3;
  lr.mlp = 5e-3;
  return lr;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (eval_ks.empty()) throw ConfigError("need at least one k for evaluation");
  adam.validate();
  for (std::size_t i = 0; i < kNumParamGroups; ++i) {
    const auto g = static_cast<ParamGroup>(i);
    const auto r = lr.get(g);
    if (!r) throw ConfigError("missing learning rate for parameter group '" + std::string(group_name(g)) + "'");
    if (!(*r >= 0.0) || !std::isfinite(*r)) throw ConfigError("invalid learning rate for " + std::string(group_name(g)));
  }
}

void TrainingLog::write_csv(std::ostream& out, const std::vector<std::size_t>& ks) const {
  out << "epoch,step,loss_total,loss_global,loss_local";
  for (Source s : kAllSources)
    for (std::size_t k : ks) out << ",dev_" << source_name(s) << "_p@" << k;
  out << ",dev_jsd\n";
  for (const LogRow& r : rows) {
    out << r.epoch << ',' << r.step << ',' << r.loss.total << ',' << r.loss.global << ',' << r.loss.local;
    for (Source s : kAllSources) {
      for (std::size_t k : ks) {
        out << ',';
        if (r.dev) out << r.dev->at(s, k);
      }
    }
    out << ',';
    if (r.dev) out << r.dev->mean_jsd;
    out << '\n';
  }
}

TrainingLog fit(GlocalModel& model, const Corpus& train, const Corpus* dev, const TrainConfig& config,
                TrainerState* state, const std::function<void(const LogRow&)>& on_step) {
  config.validate();
  if (train.size() == 0) throw ValidationError("fit: empty training corpus");
  if (static_cast<std::size_t>(train.num_labels) != model.num_labels()) {
    throw ValidationError("fit: corpus label space does not match the model");
  }

  TrainerState local_state;
  TrainerState& st = state ? *state : local_state;
  if (st.optimizer.m.empty()) st.optimizer = OptimizerState::for_model(model);

  ParamGroups groups = param_groups(model, config.lr);
  TrainingLog log;

  auto write_checkpoint = [&](const std::filesystem::path& path, std::size_t epoch) {
    save_checkpoint(path, Checkpoint{model, st.optimizer, config.seed, epoch});
  };

  for (std::size_t epoch = st.epochs_done + 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_batches = example_batches(train, config.batch_size, derive_seed(config.seed, "shuffle", epoch));
    for (std::size_t b = 0; b < epoch_batches.size(); ++b) {
      const std::uint64_t step = st.optimizer.step + 1;
      LossAndGradients lg = loss_and_gradients(model, epoch_batches[b], LossTerms::both, config.exec,
                                               derive_seed(config.seed, "dropout-step", step));
      if (!std::isfinite(lg.loss.total)) {
        if (!config.checkpoint_path.empty()) {
          std::filesystem::path diag = config.checkpoint_path;
          diag += ".diag";
          write_checkpoint(diag, epoch - 1);
        }
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      adam_step(groups, st.optimizer, config.adam, lg.grads);

      LogRow row{epoch, static_cast<std::size_t>(step), lg.loss, std::nullopt};
      const bool last_in_epoch = b + 1 == epoch_batches.size();
      if (last_in_epoch && dev && dev->size() > 0 && config.eval_every > 0 && epoch % config.eval_every == 0) {
        row.dev = evaluate(model, *dev, config.eval_ks);
      }
      if (on_step) on_step(row);
      log.rows.push_back(std::move(row));
    }
    st.epochs_done = epoch;
    if (!config.checkpoint_path.empty()) write_checkpoint(config.checkpoint_path, epoch);
  }
  return log;
}

}  // namespace glocal
