#include "eswm/harness/persistence.h"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace eswm::harness {

namespace {

using nlohmann::json;

constexpr std::array<char, 8> kMagic{'E', 'S', 'W', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& file, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw CheckpointError(file + ": truncated while reading " + what);
  }
  return v;
}

json model_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"layers", c.layers},
          {"embed_dim", c.embed_dim},
          {"heads", c.heads},
          {"ff_dim", c.ff_dim},
          {"dropout", c.dropout},
          {"state_vocab", c.state_vocab},
          {"action_vocab", c.action_vocab},
          {"idk_enabled", c.idk_enabled},
          {"state_encoding", to_string(c.state_encoding)},
          {"loss_scope", to_string(c.loss_scope)}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.layers = j.at("layers").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.state_vocab = j.at("state_vocab").get<int>();
  c.action_vocab = j.at("action_vocab").get<int>();
  c.idk_enabled = j.at("idk_enabled").get<bool>();
  c.state_encoding = parse_state_encoding(j.at("state_encoding").get<std::string>());
  c.loss_scope = parse_loss_scope(j.at("loss_scope").get<std::string>());
  return c;
}

struct Header {
  CheckpointMeta meta;
  std::vector<std::tuple<std::string, long, long>> tensors;
};

Header read_header(std::istream& in, const std::string& file) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size())) throw CheckpointError(file + ": truncated header");
  if (magic != kMagic) throw CheckpointError(file + ": not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, file, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(file + ": unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = get<std::uint64_t>(in, file, "header length");
  if (len > (1u << 26)) throw CheckpointError(file + ": implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError(file + ": truncated header");
  Header h;
  try {
    const json j = json::parse(text);
    h.meta.model = model_from(j.at("model_config"));
    h.meta.iteration = j.at("iteration").get<int>();
    h.meta.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tensors")) {
      h.tensors.emplace_back(t.at("name").get<std::string>(), t.at("rows").get<long>(), t.at("cols").get<long>());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(file + ": malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(file + ": malformed header: " + e.what());
  }
  return h;
}

void read_tensors(std::istream& in, const std::string& file, const Header& h, Network<float>& net) {
  std::string mismatch;
  std::size_t matched = 0;
  for (const auto& [name, rows, cols] : h.tensors) {
    auto it = std::find_if(net.params().begin(), net.params().end(), [&](const auto& kv) { return kv.first == name; });
    if (it == net.params().end()) {
      mismatch += "\n  unexpected tensor " + name;
      continue;
    }
    ++matched;
    const auto& v = it->second.value;
    if (v.rows() != rows || v.cols() != cols) {
      mismatch += "\n  " + name + ": file " + std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                  std::to_string(v.rows()) + "x" + std::to_string(v.cols());
    }
  }
  for (const auto& [name, p] : net.params()) {
    const bool present = std::any_of(h.tensors.begin(), h.tensors.end(),
                                     [&](const auto& t) { return std::get<0>(t) == name; });
    if (!present) mismatch += "\n  missing tensor " + name;
  }
  if (!mismatch.empty()) throw CheckpointError(file + ": shape mismatch" + mismatch);
  for (const auto& [name, rows, cols] : h.tensors) {
    auto& v = net.params().at(name).value;
    const auto bytes = static_cast<std::streamsize>(sizeof(float) * rows * cols);
    if (!in.read(reinterpret_cast<char*>(v.data()), bytes)) {
      throw CheckpointError(file + ": truncated while reading tensor " + name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(file + ": trailing bytes after tensors");
}

std::ifstream open_checkpoint(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw MissingCheckpoint("checkpoint not found: " + file.string());
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + file.string());
  return in;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Network<float>& net, const CheckpointMeta& meta) {
  json tensors = json::array();
  for (const auto& [name, p] : net.params()) {
    tensors.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string header =
      json{{"model_config", model_json(meta.model)}, {"iteration", meta.iteration}, {"seed", meta.seed}, {"tensors", tensors}}
          .dump();
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const auto tmp = std::filesystem::path(file.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, p] : net.params()) {
      out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(sizeof(float) * p.value.size()));
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  auto in = open_checkpoint(file);
  const Header h = read_header(in, file.string());
  try {
    validate(h.meta.model);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(file.string() + ": invalid model config: " + e.what());
  }
  LoadedCheckpoint out{h.meta, Network<float>(h.meta.model, 0)};
  read_tensors(in, file.string(), h, out.net);
  return out;
}

CheckpointMeta load_checkpoint_into(const std::filesystem::path& file, Network<float>& net) {
  auto in = open_checkpoint(file);
  const Header h = read_header(in, file.string());
  read_tensors(in, file.string(), h, net);
  return h.meta;
}

std::string model_config_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) { return model_from(json::parse(text)); }

// ---------------------------------------------------------------------------

MetricValue metric(double x) { return {true, x, {}}; }
MetricValue metric(const std::string& s) { return {false, 0.0, s}; }

namespace {

std::string encode(const MetricRecord& r) {
  json j = json::object();
  for (const auto& [k, v] : r) {
    if (!v.is_number) j[k] = v.text;
    else if (std::isfinite(v.number)) j[k] = v.number;
    else j[k] = nullptr;
  }
  return j.dump();
}

void write_records(const std::filesystem::path& file, const std::vector<MetricRecord>& records,
                   std::ios::openmode mode) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, mode);
  if (!out) throw std::runtime_error("cannot write metrics file " + file.string());
  for (const auto& r : records) out << encode(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

}  // namespace

void append_metrics(const std::filesystem::path& file, const std::vector<MetricRecord>& records) {
  write_records(file, records, std::ios::app);
}

void write_metrics(const std::filesystem::path& file, const std::vector<MetricRecord>& records) {
  write_records(file, records, std::ios::trunc);
}

std::vector<MetricRecord> read_metrics(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MetricsError("cannot read metrics file " + file.string(), 0);
  std::vector<MetricRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MetricsError(file.string() + ":" + std::to_string(lineno) + ": malformed record", lineno);
    }
    if (!j.is_object()) throw MetricsError(file.string() + ":" + std::to_string(lineno) + ": not an object", lineno);
    MetricRecord r;
    for (const auto& [k, v] : j.items()) {
      if (v.is_number()) r[k] = metric(v.get<double>());
      else if (v.is_string()) r[k] = metric(v.get<std::string>());
      else if (v.is_null()) r[k] = metric(std::numeric_limits<double>::quiet_NaN());
      else {
        throw MetricsError(file.string() + ":" + std::to_string(lineno) + ": field '" + k + "' is not a scalar",
                           lineno);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& file, const std::string& content) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << content;
}

}  // namespace eswm::harness
