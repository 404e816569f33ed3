#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "glocal/autodiff.hpp"

namespace glocal {

inline constexpr int kClsId = 0;
inline constexpr int kPadId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kNumReservedIds = 3;

/// One raw line of a corpus file: label ids plus untokenized text.
struct Document {
  std::vector<int> labels;  // sorted, unique
  std::string text;
};

struct TextCorpus {
  std::vector<Document> docs;
  int num_labels = 0;
  std::vector<std::string> label_names;
};

/// An encoded document. token_ids[0] is always [CLS] and mask[0] is set.
struct Example {
  std::vector<int> labels;  // sorted, unique
  std::vector<int> token_ids;
  Mask mask;

  std::size_t length() const;  // number of unmasked positions, [CLS] included
};

struct Corpus {
  std::vector<Example> examples;
  int num_labels = 0;
  std::vector<std::string> label_names;
  std::size_t max_len = 0;

  std::size_t size() const { return examples.size(); }
};

/// Reads `lab1,lab2,...<TAB>text` lines. Blank lines are skipped. Throws
/// ParseError (with line number) on malformed lines and RangeError when a
/// label id is >= num_labels.
TextCorpus load_corpus(const std::filesystem::path& path, int num_labels);
TextCorpus parse_corpus(std::istream& in, int num_labels, std::string_view source = "<stream>");
void save_corpus(const std::filesystem::path& path, const TextCorpus& corpus);

/// Lowercases ASCII letters and splits on whitespace and ASCII punctuation.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  Vocab();
  explicit Vocab(std::vector<std::string> tokens);  // tokens for ids 3, 4, ...

  /// Id of `token`, or kUnkId when absent.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(std::string_view token) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Tokens with frequency >= min_freq, most frequent first, ties broken
/// lexicographically, at most max_size of them after the reserved ids.
Vocab build_vocab(const TextCorpus& corpus, std::size_t min_freq, std::size_t max_size);

struct EncodedText {
  std::vector<int> token_ids;
  Mask mask;
};

/// [CLS] + up to max_len - 1 token ids, padded with [PAD] to max_len.
EncodedText encode(const Vocab& vocab, std::string_view text, std::size_t max_len);
/// Tokens of the unmasked content positions ([CLS] and padding dropped).
std::vector<std::string> decode(const Vocab& vocab, std::span<const int> token_ids, const Mask& mask);

Corpus encode_corpus(const TextCorpus& corpus, const Vocab& vocab, std::size_t max_len);

/// Index batches over `count` items. With a seed the order is a Fisher-Yates
/// shuffle driven by Rng(seed); without one it is 0..count-1. The final
/// partial batch is kept. ValidationError when batch_size is 0.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed);

/// Batches of `corpus` examples as pointer lists.
std::vector<std::vector<const Example*>> example_batches(const Corpus& corpus, std::size_t batch_size,
                                                         std::optional<std::uint64_t> shuffle_seed);

}  // namespace glocal
