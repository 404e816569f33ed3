#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "glocal/model.hpp"

namespace glocal {

/// Per-document label probabilities keyed by document id.
struct PredictionDump {
  std::vector<std::string> doc_ids;
  std::size_t num_labels = 0;
  Tensor probs;  // [docs x L]
};

PredictionDump make_dump(const Tensor& probs, std::vector<std::string> doc_ids);
/// Document ids "0", "1", ... in row order.
std::vector<std::string> index_ids(std::size_t n);

/// One line per document: `doc_id<TAB>label:prob label:prob ...` over all L
/// labels, sorted by probability descending with ties to the lower id.
void write_prediction_dump(std::ostream& out, const PredictionDump& dump);
void write_prediction_dump(const std::filesystem::path& path, const PredictionDump& dump);
/// ParseError on malformed lines. The label space is the largest label id + 1
/// unless every line lists the same count, in which case that count is used.
PredictionDump read_prediction_dump(std::istream& in, const std::string& source = "<stream>");
PredictionDump read_prediction_dump(const std::filesystem::path& path);

/// Elementwise mean of the probabilities. AlignmentError unless every dump
/// lists the same document ids in the same order with the same L.
PredictionDump ensemble(const std::vector<PredictionDump>& dumps);

/// Lines `doc_id label_id position weight` for every unmasked position.
/// `attention` is [B x L x S]; masks give the unmasked positions per document.
void write_attention_dump(std::ostream& out, const Tensor& attention, const std::vector<Mask>& masks,
                          const std::vector<std::string>& doc_ids);

}  // namespace glocal
