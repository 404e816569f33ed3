#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "glocal/errors.hpp"
#include "glocal/train.hpp"

namespace glocal {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t done = 0;
  while (done < n) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n - done, 1u << 30));
    crc = crc32(crc, p + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  std::string name;
  const Tensor* tensor;
};

std::map<std::string, std::string> config_fields(const ModelConfig& c) {
  const auto& e = c.encoder;
  const auto& h = c.heads;
  return {
      {"encoder.num_layers", std::to_string(e.num_layers)},
      {"encoder.model_dim", std::to_string(e.model_dim)},
      {"encoder.num_heads", std::to_string(e.num_heads)},
      {"encoder.ffn_dim", std::to_string(e.ffn_dim)},
      {"encoder.max_positions", std::to_string(e.max_positions)},
      {"encoder.vocab_size", std::to_string(e.vocab_size)},
      {"encoder.dropout", fmt_double(e.dropout)},
      {"heads.num_labels", std::to_string(h.num_labels)},
      {"heads.model_dim", std::to_string(h.model_dim)},
      {"heads.pooler", h.pooler ? "1" : "0"},
      {"heads.pooler_dim", std::to_string(h.pooler_dim)},
      {"heads.attn_dim", std::to_string(h.attn_dim)},
      {"heads.value_dim", std::to_string(h.value_dim)},
      {"heads.mlp_hidden", std::to_string(h.mlp_hidden)},
      {"heads.tau", fmt_double(h.tau)},
      {"heads.local_layer", std::to_string(h.local_layer)},
  };
}

class HeaderReader {
 public:
  explicit HeaderReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  const std::string& raw(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw FormatError("checkpoint header lacks '" + key + "'");
    return it->second;
  }
  std::uint64_t u64(const std::string& key) const {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw FormatError("bad integer for '" + key + "': " + s);
    return v;
  }
  double f64(const std::string& key) const {
    const std::string& s = raw(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw FormatError("bad number for '" + key + "': " + s);
    return v;
  }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  GlocalModel& model = const_cast<GlocalModel&>(checkpoint.model);
  const auto params = model.parameters();

  std::vector<Entry> entries;
  for (const auto& p : params) entries.push_back({p.name, p.tensor});
  if (checkpoint.optimizer) {
    const auto& opt = *checkpoint.optimizer;
    if (opt.m.size() != params.size() || opt.v.size() != params.size()) {
      throw DimensionError("save_checkpoint: optimizer state does not match the model");
    }
    for (const auto& p : params) entries.push_back({"adam.m/" + p.name, &opt.m[p.index]});
    for (const auto& p : params) entries.push_back({"adam.v/" + p.name, &opt.v[p.index]});
  }

  std::ostringstream header;
  header << "format_version=" << kCheckpointVersion << '\n';
  header << "epoch=" << checkpoint.epoch << '\n';
  header << "seed=" << checkpoint.seed << '\n';
  header << "has_optimizer=" << (checkpoint.optimizer ? 1 : 0) << '\n';
  header << "step=" << (checkpoint.optimizer ? checkpoint.optimizer->step : 0) << '\n';
  for (const auto& [k, v] : config_fields(model.config)) header << k << '=' << v << '\n';
  std::size_t offset = 0;
  for (const Entry& e : entries) {
    header << "tensor " << e.name << ' ';
    const Shape& s = e.tensor->shape();
    if (s.empty()) header << "scalar";
    for (std::size_t i = 0; i < s.size(); ++i) header << (i ? "x" : "") << s[i];
    header << ' ' << offset << '\n';
    offset += e.tensor->size() * sizeof(double);
  }
  const std::string head = header.str();

  std::string bytes;
  bytes.reserve(16 + head.size() + offset + 4);
  bytes.append(kCheckpointMagic, 8);
  put_u64(bytes, head.size());
  bytes += head;
  for (const Entry& e : entries) {
    for (double v : e.tensor->data()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  }
  const std::uint32_t crc = crc_of(bytes, bytes.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  if (bytes.size() < 20) throw IntegrityError(path.string() + ": truncated checkpoint");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(u[body + i]) << (8 * i);
  if (crc_of(bytes, body) != stored) throw IntegrityError(path.string() + ": checksum mismatch");

  const std::uint64_t head_len = get_u64(u + 8);
  if (head_len > body - 16) throw IntegrityError(path.string() + ": header length exceeds file");
  std::istringstream header(bytes.substr(16, head_len));
  const std::size_t data_start = 16 + head_len;

  std::map<std::string, std::string> kv;
  struct Dir {
    Shape shape;
    std::size_t offset;
  };
  std::map<std::string, Dir> dir;
  std::string line;
  while (std::getline(header, line)) {
    if (line.empty()) continue;
    if (line.starts_with("tensor ")) {
      std::istringstream ls(line.substr(7));
      std::string name, dims;
      std::size_t off = 0;
      if (!(ls >> name >> dims >> off)) throw FormatError("bad tensor entry: " + line);
      Shape shape;
      if (dims != "scalar") {
        std::istringstream ds(dims);
        std::string part;
        while (std::getline(ds, part, 'x')) shape.push_back(std::stoull(part));
      }
      dir[name] = {std::move(shape), off};
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  HeaderReader h(std::move(kv));
  const auto version = h.u64("format_version");
  if (version != static_cast<std::uint64_t>(kCheckpointVersion)) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }

  ModelConfig config;
  config.encoder.num_layers = h.u64("encoder.num_layers");
  config.encoder.model_dim = h.u64("encoder.model_dim");
  config.encoder.num_heads = h.u64("encoder.num_heads");
  config.encoder.ffn_dim = h.u64("encoder.ffn_dim");
  config.encoder.max_positions = h.u64("encoder.max_positions");
  config.encoder.vocab_size = h.u64("encoder.vocab_size");
  config.encoder.dropout = h.f64("encoder.dropout");
  config.heads.num_labels = h.u64("heads.num_labels");
  config.heads.model_dim = h.u64("heads.model_dim");
  config.heads.pooler = h.u64("heads.pooler") != 0;
  config.heads.pooler_dim = h.u64("heads.pooler_dim");
  config.heads.attn_dim = h.u64("heads.attn_dim");
  config.heads.value_dim = h.u64("heads.value_dim");
  config.heads.mlp_hidden = h.u64("heads.mlp_hidden");
  config.heads.tau = h.f64("heads.tau");
  config.heads.local_layer = h.u64("heads.local_layer");

  Checkpoint ck{GlocalModel::init(config, 0), std::nullopt, h.u64("seed"), h.u64("epoch")};
  const bool has_opt = h.u64("has_optimizer") != 0;
  auto params = ck.model.parameters();
  if (has_opt) {
    ck.optimizer = OptimizerState::for_model(ck.model);
    ck.optimizer->step = h.u64("step");
  }

  auto fill = [&](const std::string& name, Tensor& t) {
    const auto it = dir.find(name);
    if (it == dir.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_string(it->second.shape) + ", expected " +
                        shape_string(t.shape()));
    }
    const std::size_t start = data_start + it->second.offset;
    if (start + t.size() * 8 > body) throw IntegrityError("tensor '" + name + "' runs past the end of the file");
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::bit_cast<double>(get_u64(u + start + 8 * i));
  };
  for (auto& p : params) {
    fill(p.name, *p.tensor);
    if (has_opt) {
      fill("adam.m/" + p.name, ck.optimizer->m[p.index]);
      fill("adam.v/" + p.name, ck.optimizer->v[p.index]);
    }
  }
  return ck;
}

}  // namespace glocal
