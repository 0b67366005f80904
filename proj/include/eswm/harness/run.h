#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eswm::harness {

enum class ExitCode : int {
  Ok = 0,
  Failure = 1,
  Usage = 2,
  InvalidConfig = 3,
  MissingCheckpoint = 4,
  BadCheckpoint = 5,
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"train",     "eval",  "explore", "navigate", "heuristic",
                                              "adapt",     "latent", "probe",  "figures"};
  return names;
}

struct RunRequest {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> overrides;
  /// Defaults to <output>/checkpoint.bin.
  std::optional<std::filesystem::path> checkpoint;
  /// Agents and analyses that support it use ground-truth knowledge instead
  /// of the trained model.
  bool oracle = false;
};

/// Loads and validates the config, runs one subcommand, writes its artifacts
/// (result tables, resolved config, manifest) to the output directory and a
/// summary to `out`. Errors are reported on `err`; the return value is the
/// process exit status.
int run(const RunRequest& request, std::ostream& out, std::ostream& err);

}  // namespace eswm::harness
