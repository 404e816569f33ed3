#include "glocal/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "glocal/errors.hpp"
#include "glocal/rng.hpp"

namespace glocal {

namespace {

const std::vector<std::string> kReservedTokens = {"[CLS]", "[PAD]", "[UNK]"};

std::vector<int> parse_labels(std::string_view field, int num_labels, std::string_view source, std::size_t line_no) {
  auto where = [&] { return std::string(source) + ":" + std::to_string(line_no); };
  if (field.empty()) throw ParseError(where() + ": empty label field");
  std::vector<int> labels;
  std::size_t start = 0;
  while (start <= field.size()) {
    const std::size_t comma = std::min(field.find(',', start), field.size());
    std::string_view item = field.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || value < 0) {
      throw ParseError(where() + ": bad label id '" + std::string(item) + "'");
    }
    if (value >= num_labels) {
      throw RangeError(where() + ": label id " + std::to_string(value) + " >= label space size " +
                       std::to_string(num_labels));
    }
    labels.push_back(value);
    start = comma + 1;
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace

std::size_t Example::length() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

TextCorpus parse_corpus(std::istream& in, int num_labels, std::string_view source) {
  if (num_labels < 1) throw ValidationError("label space size must be >= 1");
  TextCorpus corpus;
  corpus.num_labels = num_labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": missing TAB between labels and text");
    }
    Document doc;
    doc.labels = parse_labels(std::string_view(line).substr(0, tab), num_labels, source, line_no);
    doc.text = line.substr(tab + 1);
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

TextCorpus load_corpus(const std::filesystem::path& path, int num_labels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  return parse_corpus(in, num_labels, path.string());
}

void save_corpus(const std::filesystem::path& path, const TextCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const Document& doc : corpus.docs) {
    for (std::size_t i = 0; i < doc.labels.size(); ++i) out << (i ? "," : "") << doc.labels[i];
    out << '\t' << doc.text << '\n';
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || (c < 0x80 && std::ispunct(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) : id_to_token_(kReservedTokens) {
  for (int i = 0; i < kNumReservedIds; ++i) token_to_id_.emplace(id_to_token_[i], i);
  for (std::string& t : tokens) {
    if (token_to_id_.contains(t)) throw ValidationError("duplicate vocabulary token '" + t + "'");
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(std::move(t));
  }
}

int Vocab::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw RangeError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[id];
}

bool Vocab::contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (std::size_t i = kNumReservedIds; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

Vocab build_vocab(const TextCorpus& corpus, std::size_t min_freq, std::size_t max_size) {
  if (corpus.docs.empty()) throw ValidationError("build_vocab: corpus is empty");
  std::map<std::string, std::size_t> counts;
  for (const Document& doc : corpus.docs)
    for (std::string& t : tokenize(doc.text)) ++counts[std::move(t)];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_freq) ranked.emplace_back(tok, n);
  // counts is ordered, so a stable sort on frequency keeps ties lexicographic.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(std::move(tok));
  return Vocab(std::move(tokens));
}

EncodedText encode(const Vocab& vocab, std::string_view text, std::size_t max_len) {
  if (max_len < 2) throw ValidationError("encode: max_len must be >= 2");
  EncodedText enc;
  enc.token_ids.assign(max_len, kPadId);
  enc.mask.assign(max_len, 0);
  enc.token_ids[0] = kClsId;
  enc.mask[0] = 1;
  std::size_t pos = 1;
  for (const std::string& t : tokenize(text)) {
    if (pos == max_len) break;
    enc.token_ids[pos] = vocab.id(t);
    enc.mask[pos] = 1;
    ++pos;
  }
  return enc;
}

std::vector<std::string> decode(const Vocab& vocab, std::span<const int> token_ids, const Mask& mask) {
  std::vector<std::string> tokens;
  for (std::size_t i = 1; i < token_ids.size(); ++i)
    if (mask.at(i)) tokens.push_back(vocab.token(token_ids[i]));
  return tokens;
}

Corpus encode_corpus(const TextCorpus& corpus, const Vocab& vocab, std::size_t max_len) {
  Corpus out;
  out.num_labels = corpus.num_labels;
  out.label_names = corpus.label_names;
  out.max_len = max_len;
  out.examples.reserve(corpus.docs.size());
  for (const Document& doc : corpus.docs) {
    EncodedText enc = encode(vocab, doc.text, max_len);
    out.examples.push_back(Example{doc.labels, std::move(enc.token_ids), std::move(enc.mask)});
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<const Example*>> example_batches(const Corpus& corpus, std::size_t batch_size,
                                                         std::optional<std::uint64_t> shuffle_seed) {
  std::vector<std::vector<const Example*>> out;
  for (const auto& idx : batches(corpus.size(), batch_size, shuffle_seed)) {
    auto& b = out.emplace_back();
    for (std::size_t i : idx) b.push_back(&corpus.examples[i]);
  }
  return out;
}

}  // namespace glocal
