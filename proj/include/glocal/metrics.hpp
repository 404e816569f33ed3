#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "glocal/model.hpp"

namespace glocal {

/// Mean over documents of |top-k ∩ truth| / k. ValidationError when a ranked
/// list is shorter than k or the two lists differ in length.
double precision_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<std::vector<int>>& truths,
                      std::size_t k);

/// Jensen-Shannon divergence in bits, 0 log 0 = 0. Inputs must be nonnegative
/// and sum to 1 within 1e-9 (ValidationError otherwise).
double jsd(std::span<const double> p, std::span<const double> q);

/// Per-label sigmoid scores normalised to sum to one.
/// DegenerateInputError when the scores sum to zero.
std::vector<double> prediction_distribution(std::span<const double> probs);

/// Mean per-document JSD between the normalised global and local predictions.
double mean_head_jsd(const PredictionBatch& predictions);

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::array<std::vector<double>, 3> precision;  // [source][k index]
  double mean_jsd = 0.0;
  std::size_t num_docs = 0;

  /// P@k for a source; RangeError when k was not evaluated.
  double at(Source source, std::size_t k) const;
  /// Header `source,p@1,...,docs` followed by one line per source.
  void write_csv(std::ostream& out) const;
};

MetricsReport evaluate(const PredictionBatch& predictions, const std::vector<std::vector<int>>& truths,
                       const std::vector<std::size_t>& ks);
MetricsReport evaluate(const GlocalModel& model, const Corpus& corpus, const std::vector<std::size_t>& ks);

std::vector<std::vector<int>> corpus_truths(const Corpus& corpus);

}  // namespace glocal
