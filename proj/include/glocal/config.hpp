#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "glocal/ablation.hpp"
#include "glocal/synthetic.hpp"
#include "glocal/train.hpp"

namespace glocal {

enum class KeyType { uint, real, boolean, text, uint_list, layer_range };

struct ConfigKey {
  std::string name;  // "section.key"
  KeyType type;
  std::string default_value;  // empty = unset
  std::string help;
};

/// Settings merged from a `key = value` file with `[section]` headers and
/// command-line overrides. Every key is checked against schema().
class RunConfig {
 public:
  static const std::vector<ConfigKey>& schema();

  /// `#` and `;` start comments. Keys inside `[section]` become
  /// `section.key`. ConfigError (with line number) on unknown keys or
  /// ill-typed values.
  static RunConfig parse(std::istream& in, const std::string& source = "<stream>");
  static RunConfig load(const std::filesystem::path& path);

  /// Validates against the schema; later calls override earlier ones.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  /// Explicit value or the schema default; ConfigError when neither exists.
  std::string get(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_list(const std::string& key) const;
  /// "A..B" (inclusive) or a single number.
  std::vector<std::size_t> get_range(const std::string& key) const;

  /// Explicitly set keys, sorted, as `key = value` lines.
  void write(std::ostream& out) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  ModelConfig model_config(std::size_t vocab_size, std::size_t num_labels) const;
  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;
  AblationMode ablation_mode() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Parsers shared with the command-line layer; ConfigError on bad input.
std::vector<std::size_t> parse_uint_list(std::string_view text);
std::vector<std::size_t> parse_layer_range(std::string_view text);

}  // namespace glocal
