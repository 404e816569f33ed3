#pragma once

#include <vector>

#include "glocal/model.hpp"
#include "glocal/synthetic.hpp"

namespace glocal {

/// Local-head attention on planted keywords: for every (document, planted
/// label) whose trigger survived truncation, alpha(label, trigger position)
/// divided by the uniform weight 1/(T+1).
struct KeywordAttention {
  std::vector<double> ratios;

  std::size_t cases() const { return ratios.size(); }
  /// Fraction of cases with ratio >= factor (0 when there are no cases).
  double fraction_at_least(double factor) const;
  double median() const;
};

/// `corpus` must be the encoding of the documents described by `info`, in the
/// same order.
KeywordAttention keyword_attention(const GlocalModel& model, const Corpus& corpus,
                                   const std::vector<SyntheticDocInfo>& info);

}  // namespace glocal
