#include "glocal/predictions.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "glocal/errors.hpp"

namespace glocal {

PredictionDump make_dump(const Tensor& probs, std::vector<std::string> doc_ids) {
  if (doc_ids.size() != probs.rows()) throw DimensionError("make_dump: id count does not match the rows");
  return PredictionDump{std::move(doc_ids), probs.cols(), probs};
}

std::vector<std::string> index_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return ids;
}

void write_prediction_dump(std::ostream& out, const PredictionDump& dump) {
  const std::size_t l = dump.num_labels;
  const auto ranked = rank_labels(dump.probs, l);
  char buf[48];
  for (std::size_t d = 0; d < dump.doc_ids.size(); ++d) {
    out << dump.doc_ids[d] << '\t';
    for (std::size_t i = 0; i < l; ++i) {
      const int label = ranked[d][i];
      std::snprintf(buf, sizeof buf, "%d:%.17g", label, dump.probs.at(d, static_cast<std::size_t>(label)));
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
}

void write_prediction_dump(const std::filesystem::path& path, const PredictionDump& dump) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_prediction_dump(out, dump);
}

PredictionDump read_prediction_dump(std::istream& in, const std::string& source) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::string line;
  std::size_t lineno = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    auto fail = [&](const std::string& why) {
      return ParseError(source + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tab == std::string::npos || tab == 0) throw fail("expected `doc_id<TAB>label:prob ...`");
    ids.push_back(line.substr(0, tab));
    std::istringstream ss(line.substr(tab + 1));
    std::vector<std::pair<int, double>> row;
    std::string pair;
    while (ss >> pair) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) throw fail("bad pair '" + pair + "'");
      int label = -1;
      const auto [p, ec] = std::from_chars(pair.data(), pair.data() + colon, label);
      if (ec != std::errc{} || p != pair.data() + colon || label < 0) throw fail("bad label in '" + pair + "'");
      char* end = nullptr;
      const std::string num = pair.substr(colon + 1);
      const double prob = std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size()) throw fail("bad probability in '" + pair + "'");
      row.emplace_back(label, prob);
      max_label = std::max(max_label, label);
    }
    rows.push_back(std::move(row));
  }
  PredictionDump dump;
  dump.doc_ids = std::move(ids);
  dump.num_labels = static_cast<std::size_t>(max_label + 1);
  if (!rows.empty()) {
    const std::size_t n0 = rows[0].size();
    bool same = true;
    for (const auto& r : rows) same = same && r.size() == n0;
    if (same) dump.num_labels = std::max(dump.num_labels, n0);
  }
  dump.probs = Tensor::zeros({rows.size(), dump.num_labels});
  for (std::size_t d = 0; d < rows.size(); ++d)
    for (const auto& [label, prob] : rows[d]) dump.probs.at(d, static_cast<std::size_t>(label)) = prob;
  return dump;
}

PredictionDump read_prediction_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_prediction_dump(in, path.string());
}

PredictionDump ensemble(const std::vector<PredictionDump>& dumps) {
  if (dumps.empty()) throw ValidationError("ensemble: no prediction files");
  const PredictionDump& first = dumps.front();
  for (std::size_t i = 1; i < dumps.size(); ++i) {
    if (dumps[i].num_labels != first.num_labels) {
      throw AlignmentError("ensemble: file " + std::to_string(i) + " has " + std::to_string(dumps[i].num_labels) +
                           " labels, expected " + std::to_string(first.num_labels));
    }
    if (dumps[i].doc_ids != first.doc_ids) {
      throw AlignmentError("ensemble: file " + std::to_string(i) + " does not list the same document ids");
    }
  }
  PredictionDump out = first;
  if (dumps.size() == 1) return out;
  auto acc = out.probs.data();
  for (std::size_t i = 1; i < dumps.size(); ++i) {
    const auto src = dumps[i].probs.data();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += src[j];
  }
  const double n = static_cast<double>(dumps.size());
  for (double& v : acc) v /= n;
  return out;
}

void write_attention_dump(std::ostream& out, const Tensor& attention, const std::vector<Mask>& masks,
                          const std::vector<std::string>& doc_ids) {
  const Shape& s = attention.shape();
  if (s.size() != 3 || s[0] != masks.size() || s[0] != doc_ids.size()) {
    throw DimensionError("write_attention_dump: expected [B x L x S] with B masks and ids, got " + shape_string(s));
  }
  const std::size_t l = s[1], seq = s[2];
  const auto a = attention.data();
  char buf[40];
  for (std::size_t d = 0; d < s[0]; ++d) {
    if (masks[d].size() != seq) throw DimensionError("write_attention_dump: mask length differs from S");
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t i = 0; i < seq; ++i) {
        if (!masks[d][i]) continue;
        std::snprintf(buf, sizeof buf, "%.17g", a[(d * l + j) * seq + i]);
        out << doc_ids[d] << ' ' << j << ' ' << i << ' ' << buf << '\n';
      }
    }
  }
}

}  // namespace glocal
