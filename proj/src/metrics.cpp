#include "glocal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "glocal/errors.hpp"

namespace glocal {

double precision_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<std::vector<int>>& truths,
                      std::size_t k) {
  if (k == 0) throw ValidationError("precision_at_k: k must be >= 1");
  if (ranked.size() != truths.size()) throw ValidationError("precision_at_k: ranking and truth counts differ");
  if (ranked.empty()) throw ValidationError("precision_at_k: no documents");
  double total = 0.0;
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    if (ranked[d].size() < k) {
      throw ValidationError("precision_at_k: document " + std::to_string(d) + " ranks only " +
                            std::to_string(ranked[d].size()) + " labels, k=" + std::to_string(k));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (std::find(truths[d].begin(), truths[d].end(), ranked[d][i]) != truths[d].end()) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(ranked.size());
}

namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string("jsd: ") + name + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw ValidationError(std::string("jsd: ") + name + " sums to " + std::to_string(s) + ", not 1");
  }
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("jsd: distributions differ in length");
  check_distribution(p, "p");
  check_distribution(q, "q");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log2(q[i] / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

std::vector<double> prediction_distribution(std::span<const double> probs) {
  double s = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0)) throw ValidationError("prediction_distribution: negative score");
    s += v;
  }
  if (!(s > 0.0)) throw DegenerateInputError("prediction_distribution: scores sum to zero");
  std::vector<double> out(probs.begin(), probs.end());
  for (double& v : out) v /= s;
  return out;
}

double mean_head_jsd(const PredictionBatch& predictions) {
  const std::size_t n = predictions.size();
  if (n == 0) return 0.0;
  const std::size_t l = predictions.p_global.cols();
  double total = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const auto g = prediction_distribution(predictions.p_global.data().subspan(d * l, l));
    const auto lo = prediction_distribution(predictions.p_local.data().subspan(d * l, l));
    total += jsd(g, lo);
  }
  return total / static_cast<double>(n);
}

double MetricsReport::at(Source source, std::size_t k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw RangeError("P@" + std::to_string(k) + " was not evaluated");
  return precision[static_cast<std::size_t>(source)][static_cast<std::size_t>(it - ks.begin())];
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << "source";
  for (std::size_t k : ks) out << ",p@" << k;
  out << ",jsd,docs\n";
  for (Source s : kAllSources) {
    out << source_name(s);
    for (double v : precision[static_cast<std::size_t>(s)]) out << ',' << v;
    out << ',' << mean_jsd << ',' << num_docs << '\n';
  }
}

std::vector<std::vector<int>> corpus_truths(const Corpus& corpus) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const Example& ex : corpus.examples) out.push_back(ex.labels);
  return out;
}

MetricsReport evaluate(const PredictionBatch& predictions, const std::vector<std::vector<int>>& truths,
                       const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ValidationError("evaluate: no k values");
  MetricsReport report;
  report.ks = ks;
  report.num_docs = predictions.size();
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  for (Source s : kAllSources) {
    const auto ranked = rank_labels(predictions.probs(s), kmax);
    for (std::size_t k : ks) report.precision[static_cast<std::size_t>(s)].push_back(precision_at_k(ranked, truths, k));
  }
  report.mean_jsd = mean_head_jsd(predictions);
  return report;
}

MetricsReport evaluate(const GlocalModel& model, const Corpus& corpus, const std::vector<std::size_t>& ks) {
  return evaluate(predict_corpus(model, corpus), corpus_truths(corpus), ks);
}

}  // namespace glocal
