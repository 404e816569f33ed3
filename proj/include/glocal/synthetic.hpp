#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glocal/data.hpp"

namespace glocal {

/// Label `label` is true when the document's mixture weight on `topic` is at
/// least `threshold`.
struct TopicRule {
  int topic = 0;
  int label = 0;
  double threshold = 0.3;
};

/// Planted-keyword corpus description.
///
/// Filler words are named `w0000`, `w0001`, ...; the first
/// `background_fraction` of them are shared background vocabulary and the rest
/// are split evenly into `num_topics` topic vocabularies. Every document draws
/// a topic mixture (a primary topic, and with probability
/// `secondary_topic_prob` a secondary topic with weight in
/// [secondary_weight_min, secondary_weight_max]); each word is background with
/// probability `background_rate` and otherwise comes from a topic drawn from
/// the mixture. Topic labels follow `topic_rules`. Keyword labels are planted
/// by overwriting random word positions with their trigger token; between
/// `min_keywords` and `max_keywords` distinct keyword labels per document.
/// With probability `noise` one uniformly chosen label of the document is
/// flipped (never leaving the label set empty).
struct SyntheticSpec {
  std::size_t num_docs = 2000;
  int num_labels = 50;
  std::size_t vocab_size = 400;
  std::size_t doc_len_min = 24;
  std::size_t doc_len_max = 48;
  int num_topics = 10;
  double background_fraction = 0.2;
  double background_rate = 0.3;
  double secondary_topic_prob = 0.5;
  double secondary_weight_min = 0.15;
  double secondary_weight_max = 0.45;
  int min_keywords = 0;
  int max_keywords = 3;
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::map<int, std::string> keyword_map;
  std::vector<TopicRule> topic_rules;

  /// Labels [0, num_topics) become topic labels (one rule per topic at
  /// `threshold`), labels [num_topics, num_labels) keyword labels with
  /// triggers `kw00`, `kw01`, ...
  static SyntheticSpec standard(std::size_t num_docs, int num_labels, std::uint64_t seed, int num_topics = 10,
                                double threshold = 0.3);

  /// ValidationError on any inconsistency.
  void validate() const;
  std::string filler_word(std::size_t index) const;
};

struct SyntheticDocInfo {
  std::size_t doc_index = 0;            // index before the train/test split
  std::vector<double> mixture;          // num_topics weights summing to 1
  std::vector<std::string> words;       // the document's words in order
  std::vector<std::pair<int, std::size_t>> planted;  // (label, word position)
  bool flipped = false;
};

struct SyntheticData {
  TextCorpus train;
  TextCorpus test;
  std::vector<SyntheticDocInfo> train_info;
  std::vector<SyntheticDocInfo> test_info;
};

/// Deterministic in spec.seed. Exactly num_docs / 5 documents (those with the
/// smallest split hash) form the test split.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace glocal
