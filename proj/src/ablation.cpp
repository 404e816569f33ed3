#include "glocal/ablation.hpp"

#include <cstdio>
#include <ostream>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"

namespace glocal {

namespace {

AblationRow make_row(std::size_t layer, const GlocalModel& model, const Corpus& test,
                     const std::vector<std::size_t>& ks) {
  AblationRow row;
  row.layer = layer;
  row.report = evaluate(model, test, ks);
  row.gain_p1 = row.report.precision[static_cast<std::size_t>(Source::final)].front() -
                row.report.precision[static_cast<std::size_t>(Source::global)].front();
  return row;
}

}  // namespace

std::vector<AblationRow> layer_ablation(const ModelConfig& base, const TrainConfig& train_config, const Corpus& train,
                                        const Corpus& test, const std::vector<std::size_t>& layers,
                                        AblationMode mode) {
  for (std::size_t n : layers) {
    if (n > base.encoder.num_layers) {
      throw RangeError("ablation layer " + std::to_string(n) + " exceeds the encoder depth " +
                       std::to_string(base.encoder.num_layers));
    }
  }
  TrainConfig tc = train_config;
  tc.eval_every = 0;
  tc.checkpoint_path.clear();
  // P@1 is always reported first so gain_p1 has a column to read.
  std::vector<std::size_t> ks = {1};
  for (std::size_t k : tc.eval_ks)
    if (k != 1) ks.push_back(k);

  std::vector<AblationRow> rows;
  if (mode == AblationMode::retrain) {
    for (std::size_t n : layers) {
      ModelConfig config = base;
      config.heads.local_layer = n;
      GlocalModel model = GlocalModel::init(config, tc.seed);
      fit(model, train, nullptr, tc);
      rows.push_back(make_row(n, model, test, ks));
    }
    return rows;
  }

  GlocalModel trained = GlocalModel::init(base, tc.seed);
  fit(trained, train, nullptr, tc);
  TrainConfig local_only = tc;
  local_only.lr.backbone = 0.0;
  local_only.lr.pooler = 0.0;
  local_only.lr.global = 0.0;
  for (std::size_t n : layers) {
    GlocalModel model = trained;
    model.config.heads.local_layer = n;
    Rng rng(derive_seed(tc.seed, "ablation.local", n));
    model.local_head = LocalHead::init(model.config.heads, rng);
    fit(model, train, nullptr, local_only);
    rows.push_back(make_row(n, model, test, ks));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "layer";
  if (!rows.empty()) {
    for (Source s : kAllSources)
      for (std::size_t k : rows.front().report.ks) out << ',' << source_name(s) << "_p@" << k;
  }
  out << ",jsd,gain_p1\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const AblationRow& r : rows) {
    out << r.layer;
    for (Source s : kAllSources)
      for (double v : r.report.precision[static_cast<std::size_t>(s)]) out << ',' << num(v);
    out << ',' << num(r.report.mean_jsd) << ',' << num(r.gain_p1) << '\n';
  }
}

void write_ablation_plot_script(std::ostream& out, const std::filesystem::path& csv_path,
                                const std::filesystem::path& png_path) {
  out << "import csv\n"
         "import matplotlib\n"
         "matplotlib.use('Agg')\n"
         "import matplotlib.pyplot as plt\n\n"
      << "rows = list(csv.DictReader(open(" << csv_path.filename() << ")))\n"
      << "layers = [int(r['layer']) for r in rows]\n"
         "pk = max(int(k.split('@')[1]) for k in rows[0] if k.startswith('final_p@'))\n"
         "fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))\n"
         "for src in ('global', 'local', 'final'):\n"
         "    a.plot(layers, [float(r[f'{src}_p@{pk}']) for r in rows], marker='o', label=src)\n"
         "a.set_xlabel('local layer')\n"
         "a.set_ylabel(f'P@{pk}')\n"
         "a.legend()\n"
         "b.plot(layers, [float(r['jsd']) for r in rows], marker='o', color='k')\n"
         "b.set_xlabel('local layer')\n"
         "b.set_ylabel('JSD(global, local)')\n"
         "fig.tight_layout()\n"
      << "fig.savefig(" << png_path.filename() << ", dpi=120)\n";
}

}  // namespace glocal
