#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "glocal/metrics.hpp"
#include "glocal/train.hpp"

namespace glocal {

enum class AblationMode {
  /// Train a fresh model per layer from the same seed.
  retrain,
  /// Train the base model once, then for each layer keep its backbone and
  /// global head fixed and train only a new local head on that layer.
  fixed_global,
};

struct AblationRow {
  std::size_t layer = 0;
  MetricsReport report;  // on the test corpus
  /// P@1(final) - P@1(global).
  double gain_p1 = 0.0;
};

/// One row per requested local layer. RangeError for a layer above N.
std::vector<AblationRow> layer_ablation(const ModelConfig& base, const TrainConfig& train_config, const Corpus& train,
                                        const Corpus& test, const std::vector<std::size_t>& layers,
                                        AblationMode mode = AblationMode::retrain);

/// Header `layer,<source>_p@k...,jsd,gain_p1`, one line per row.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

/// A matplotlib script plotting P@5 (or the largest k) and JSD against the
/// layer, reading the CSV at `csv_path` and saving `png_path`.
void write_ablation_plot_script(std::ostream& out, const std::filesystem::path& csv_path,
                                const std::filesystem::path& png_path);

}  // namespace glocal
