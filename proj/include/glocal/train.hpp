#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "glocal/metrics.hpp"
#include "glocal/model.hpp"

namespace glocal {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) decay, scaled by each group's learning rate.
  double weight_decay = 0.0;
  /// Rescale gradients whose global L2 norm exceeds this value.
  std::optional<double> grad_clip;

  void validate() const;
};

/// First and second moments aligned with GlocalModel::parameters().
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static OptimizerState for_model(const GlocalModel& model);
};

/// One bias-corrected Adam update with each group's own learning rate.
/// `grads` is aligned with GlocalModel::parameters() and zeroed afterwards.
/// A non-finite gradient raises NumericError before anything is modified.
void adam_step(ParamGroups& groups, OptimizerState& state, const AdamConfig& config, std::vector<Tensor>& grads);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  LrConfig lr;
  AdamConfig adam;
  std::uint64_t seed = 1;
  /// Evaluate on the dev corpus every this many epochs (0 = never).
  std::size_t eval_every = 1;
  std::vector<std::size_t> eval_ks = {1, 3, 5};
  /// Written after every epoch when non-empty.
  std::filesystem::path checkpoint_path;
  Execution exec = Execution::parallel;

  /// Defaults used for from-scratch training of the toy encoder.
  static LrConfig default_rates();
  void validate() const;
};

struct LogRow {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based optimizer step
  LossBreakdown loss;
  std::optional<MetricsReport> dev;
};

struct TrainingLog {
  std::vector<LogRow> rows;

  /// Header row then one comma-separated line per step. Dev columns are empty
  /// on steps without an evaluation.
  void write_csv(std::ostream& out, const std::vector<std::size_t>& ks) const;
};

/// Resumable part of a run: optimizer moments and completed epochs.
struct TrainerState {
  OptimizerState optimizer;
  std::size_t epochs_done = 0;
};

/// Trains `model` in place. Epoch e shuffles with derive_seed(seed, "shuffle",
/// e) and step s draws dropout from derive_seed(seed, "dropout-step", s), so
/// passing the state saved after epoch e continues the run exactly. A
/// non-finite loss writes `<checkpoint_path>.diag` (when a path is set) and
/// raises NumericError.
TrainingLog fit(GlocalModel& model, const Corpus& train, const Corpus* dev, const TrainConfig& config,
                TrainerState* state = nullptr,
                const std::function<void(const LogRow&)>& on_step = {});

// --- checkpoints -------------------------------------------------------------

struct Checkpoint {
  GlocalModel model;
  std::optional<OptimizerState> optimizer;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

inline constexpr char kCheckpointMagic[9] = "GLXCKPT1";
inline constexpr int kCheckpointVersion = 1;

/// Layout: 8-byte magic, u64 little-endian header length, text header
/// (key=value lines, then `tensor <name> <dims> <offset>` lines), raw
/// little-endian doubles, CRC32 of everything before it (u32 little-endian).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// FormatError on wrong magic or version, IntegrityError on checksum failure
/// or truncated files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace glocal
