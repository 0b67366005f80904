#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "eswm/model/network.h"

namespace eswm::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// The checkpoint file does not exist.
class MissingCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ModelConfig model;
  int iteration = 0;
  std::uint64_t seed = 0;
};

/// Layout: "ESWMCKPT", u32 version, u64 header length, JSON header (model
/// config, iteration, seed, tensor names and shapes), raw little-endian
/// float32 tensors in header order.
void save_checkpoint(const std::filesystem::path& file, const Network<float>& net,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  Network<float> net;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Loads into an existing network; every tensor must match by name and shape.
CheckpointMeta load_checkpoint_into(const std::filesystem::path& file, Network<float>& net);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Metrics: one JSON object per line with numeric or string values.
// A file has a single writer; concurrent appends are not supported.

class MetricsError : public std::runtime_error {
 public:
  MetricsError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct MetricValue {
  bool is_number = true;
  double number = 0.0;
  std::string text;
  bool operator==(const MetricValue&) const = default;
};
using MetricRecord = std::map<std::string, MetricValue>;

MetricValue metric(double x);
MetricValue metric(const std::string& s);

void append_metrics(const std::filesystem::path& file, const std::vector<MetricRecord>& records);
void write_metrics(const std::filesystem::path& file, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> read_metrics(const std::filesystem::path& file);

/// Whole file as bytes, for hashing.
std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, const std::string& content);

}  // namespace eswm::harness
