#include "glocal/analysis.hpp"

#include <algorithm>

#include "glocal/errors.hpp"

namespace glocal {

double KeywordAttention::fraction_at_least(double factor) const {
  if (ratios.empty()) return 0.0;
  const auto n = std::count_if(ratios.begin(), ratios.end(), [&](double r) { return r >= factor; });
  return static_cast<double>(n) / static_cast<double>(ratios.size());
}

double KeywordAttention::median() const {
  if (ratios.empty()) return 0.0;
  std::vector<double> s = ratios;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

KeywordAttention keyword_attention(const GlocalModel& model, const Corpus& corpus,
                                   const std::vector<SyntheticDocInfo>& info) {
  if (info.size() != corpus.size()) throw AlignmentError("keyword_attention: corpus and document info differ in size");
  const PredictionBatch preds = predict_corpus(model, corpus, true);
  const Tensor& att = *preds.attention;
  const std::size_t l = att.dim(1), seq = att.dim(2);
  const auto a = att.data();
  KeywordAttention out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const Mask& mask = corpus.examples[d].mask;
    const auto unmasked = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
    for (const auto& [label, word] : info[d].planted) {
      const std::size_t pos = word + 1;  // [CLS] occupies position 0
      if (pos >= seq || !mask[pos]) continue;
      out.ratios.push_back(a[(d * l + static_cast<std::size_t>(label)) * seq + pos] * unmasked);
    }
  }
  return out;
}

}  // namespace glocal
