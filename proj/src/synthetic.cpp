#include "glocal/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"

namespace glocal {

namespace {

std::size_t background_words(const SyntheticSpec& spec) {
  return static_cast<std::size_t>(spec.background_fraction * static_cast<double>(spec.vocab_size));
}

std::size_t words_per_topic(const SyntheticSpec& spec) {
  return (spec.vocab_size - background_words(spec)) / static_cast<std::size_t>(spec.num_topics);
}

}  // namespace

SyntheticSpec SyntheticSpec::standard(std::size_t num_docs, int num_labels, std::uint64_t seed, int num_topics,
                                      double threshold) {
  SyntheticSpec spec;
  spec.num_docs = num_docs;
  spec.num_labels = num_labels;
  spec.seed = seed;
  spec.num_topics = num_topics;
  for (int t = 0; t < num_topics && t < num_labels; ++t) spec.topic_rules.push_back({t, t, threshold});
  for (int l = num_topics; l < num_labels; ++l) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "kw%02d", l - num_topics);
    spec.keyword_map.emplace(l, buf);
  }
  spec.max_keywords = std::min(spec.max_keywords, static_cast<int>(spec.keyword_map.size()));
  return spec;
}

std::string SyntheticSpec::filler_word(std::size_t index) const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "w%04zu", index);
  return buf;
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("synthetic spec: " + msg); };
  if (num_docs == 0) fail("num_docs must be positive");
  if (num_labels < 1) fail("num_labels must be >= 1");
  if (num_topics < 1) fail("num_topics must be >= 1");
  if (doc_len_min < 1 || doc_len_min > doc_len_max) fail("need 1 <= doc_len_min <= doc_len_max");
  if (!(background_fraction >= 0.0 && background_fraction < 1.0)) fail("background_fraction must be in [0,1)");
  if (!(background_rate >= 0.0 && background_rate <= 1.0)) fail("background_rate must be in [0,1]");
  if (!(secondary_topic_prob >= 0.0 && secondary_topic_prob <= 1.0)) fail("secondary_topic_prob must be in [0,1]");
  if (!(secondary_weight_min >= 0.0 && secondary_weight_min <= secondary_weight_max && secondary_weight_max < 0.5)) {
    fail("need 0 <= secondary_weight_min <= secondary_weight_max < 0.5");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must be in [0,1]");
  if (words_per_topic(*this) < 1) fail("vocab_size too small for the number of topics");
  if (background_rate > 0.0 && background_words(*this) < 1) fail("background_rate > 0 needs background words");
  if (min_keywords < 0 || min_keywords > max_keywords) fail("need 0 <= min_keywords <= max_keywords");
  if (static_cast<std::size_t>(max_keywords) > keyword_map.size()) fail("max_keywords exceeds keyword labels");
  if (static_cast<std::size_t>(max_keywords) > doc_len_min) fail("max_keywords exceeds doc_len_min");

  std::set<std::string> triggers;
  std::set<int> rule_labels;
  for (const TopicRule& r : topic_rules) {
    if (r.topic < 0 || r.topic >= num_topics) fail("rule references topic " + std::to_string(r.topic));
    if (r.label < 0 || r.label >= num_labels) fail("rule references label " + std::to_string(r.label));
    if (!(r.threshold > 0.0 && r.threshold <= 1.0)) fail("rule threshold must be in (0,1]");
    rule_labels.insert(r.label);
  }
  for (const auto& [label, token] : keyword_map) {
    if (label < 0 || label >= num_labels) fail("keyword label " + std::to_string(label) + " out of range");
    if (rule_labels.contains(label)) fail("label " + std::to_string(label) + " is both a topic and a keyword label");
    const auto toks = tokenize(token);
    if (toks.size() != 1 || toks[0] != token) fail("trigger '" + token + "' is not a single lowercase token");
    if (token.size() == 5 && token[0] == 'w' && std::all_of(token.begin() + 1, token.end(), ::isdigit)) {
      fail("trigger '" + token + "' collides with filler vocabulary");
    }
    if (!triggers.insert(token).second) fail("trigger token '" + token + "' used twice");
  }
  // The primary topic weight is at least 1 - secondary_weight_max; some rule
  // must fire on it so that no document ends up unlabeled.
  for (int t = 0; t < num_topics; ++t) {
    const bool covered = std::any_of(topic_rules.begin(), topic_rules.end(), [&](const TopicRule& r) {
      return r.topic == t && r.threshold <= 1.0 - secondary_weight_max;
    });
    if (!covered && min_keywords == 0) fail("topic " + std::to_string(t) + " can yield unlabeled documents");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n_background = background_words(spec);
  const std::size_t per_topic = words_per_topic(spec);
  const auto topics = static_cast<std::size_t>(spec.num_topics);

  std::vector<int> keyword_labels;
  for (const auto& [label, token] : spec.keyword_map) keyword_labels.push_back(label);

  std::vector<Document> docs(spec.num_docs);
  std::vector<SyntheticDocInfo> infos(spec.num_docs);
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    Rng rng(derive_seed(spec.seed, "synthetic-doc", d));
    SyntheticDocInfo& info = infos[d];
    info.doc_index = d;

    info.mixture.assign(topics, 0.0);
    const std::size_t primary = rng.uniform_index(topics);
    std::size_t secondary = primary;
    info.mixture[primary] = 1.0;
    if (topics > 1 && rng.bernoulli(spec.secondary_topic_prob)) {
      secondary = (primary + 1 + rng.uniform_index(topics - 1)) % topics;
      const double w = spec.secondary_weight_min + rng.uniform() * (spec.secondary_weight_max - spec.secondary_weight_min);
      info.mixture[secondary] = w;
      info.mixture[primary] = 1.0 - w;
    }

    const std::size_t len = spec.doc_len_min + rng.uniform_index(spec.doc_len_max - spec.doc_len_min + 1);
    info.words.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      if (rng.bernoulli(spec.background_rate)) {
        info.words.push_back(spec.filler_word(rng.uniform_index(n_background)));
      } else {
        const std::size_t topic = rng.uniform() < info.mixture[primary] ? primary : secondary;
        info.words.push_back(spec.filler_word(n_background + topic * per_topic + rng.uniform_index(per_topic)));
      }
    }

    const auto k = static_cast<std::size_t>(spec.min_keywords) +
                   rng.uniform_index(static_cast<std::size_t>(spec.max_keywords - spec.min_keywords) + 1);
    std::vector<int> pool = keyword_labels;
    std::vector<std::size_t> positions(len);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(pool[j], pool[j + rng.uniform_index(pool.size() - j)]);
      std::swap(positions[j], positions[j + rng.uniform_index(len - j)]);
      info.words[positions[j]] = spec.keyword_map.at(pool[j]);
      info.planted.emplace_back(pool[j], positions[j]);
    }

    std::set<int> labels;
    for (const TopicRule& r : spec.topic_rules)
      if (info.mixture[static_cast<std::size_t>(r.topic)] >= r.threshold) labels.insert(r.label);
    for (const auto& [label, pos] : info.planted) labels.insert(label);

    if (rng.bernoulli(spec.noise)) {
      const int flip = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.num_labels)));
      if (!labels.contains(flip)) {
        labels.insert(flip);
        info.flipped = true;
      } else if (labels.size() > 1) {
        labels.erase(flip);
        info.flipped = true;
      }
    }

    Document& doc = docs[d];
    doc.labels.assign(labels.begin(), labels.end());
    for (std::size_t i = 0; i < info.words.size(); ++i) doc.text += (i ? " " : "") + info.words[i];
  }

  // Exact 80/20 split: the fifth of documents with the smallest hash is test.
  std::vector<std::size_t> order(spec.num_docs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint64_t> hash(spec.num_docs);
  for (std::size_t d = 0; d < spec.num_docs; ++d) hash[d] = derive_seed(spec.seed, "split", d);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hash[a] < hash[b]; });
  std::vector<bool> is_test(spec.num_docs, false);
  for (std::size_t i = 0; i < spec.num_docs / 5; ++i) is_test[order[i]] = true;

  SyntheticData out;
  for (TextCorpus* c : {&out.train, &out.test}) {
    c->num_labels = spec.num_labels;
    c->label_names.resize(static_cast<std::size_t>(spec.num_labels));
    for (int l = 0; l < spec.num_labels; ++l) {
      const auto it = spec.keyword_map.find(l);
      c->label_names[static_cast<std::size_t>(l)] = it != spec.keyword_map.end() ? "keyword:" + it->second
                                                                                : "topic-label:" + std::to_string(l);
    }
  }
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    if (is_test[d]) {
      out.test.docs.push_back(std::move(docs[d]));
      out.test_info.push_back(std::move(infos[d]));
    } else {
      out.train.docs.push_back(std::move(docs[d]));
      out.train_info.push_back(std::move(infos[d]));
    }
  }
  return out;
}

}  // namespace glocal
