#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eswm/agents.h"
#include "eswm/model/config.h"
#include "eswm/model/train.h"

namespace eswm::harness {

/// Field-level configuration problem (unknown key, unparsable value, failed
/// validation).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AgentSettings {
  PlanConfig plan;
  ExploreConfig explore;
  AdaptConfig adapt;
  int explore_budget = 40;
  int episodes = 20;
  std::uint64_t env_seed = 1000;
  int nav_cap = 20;
  int pairs_per_env = 10;
  std::optional<double> r_latent;  // nullopt: select automatically
  int heuristic_layer = 0;         // 0: ceil(L / 2)
};

struct AnalysisSettings {
  int eval_trials = 3000;
  int entropy_trials = 2000;
  int kl_trials = 2000;
  int kl_min_path = 3;
  std::vector<double> density_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  int density_trials = 2000;
  int isomap_banks = 60;
  int isomap_neighbors = 20;
  Mask activation_task = Mask::End;
  int activation_layer = 0;  // 0: per-task default
  int latent_envs = 75;
  int latent_pairs = 20;
  int probe_train = 3000;
  int probe_test = 1000;
  int probe_runs = 10;
  int probe_epochs = 500;
  double probe_lr = 0.01;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  EnvConfig env = EnvConfig::random_wall(2);
  QueryMix mix = QueryMix::random_wall();
  ModelConfig model = ModelConfig::desk_random_wall(2);
  TrainConfig train;  // env, mix and seed are taken from the blocks above
  AgentSettings agent;
  AnalysisSettings analysis;
};

/// Every recognised key, in rendering order.
std::vector<std::string> config_keys();
std::string config_doc(const std::string& key);

/// Sets one dotted key. Throws ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; `#` starts a comment. Errors name the source line.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source);

/// Defaults, then the file (if any), then overrides; validated.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides);

/// Fully resolved config in the same key = value format.
std::string render_config(const ExperimentConfig& cfg);

/// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

/// TrainConfig with the environment, mix and seed filled in.
TrainConfig resolved_train_config(const ExperimentConfig& cfg);

/// Output directory; a relative path is placed under $ESWM_OUTPUT_ROOT when
/// that is set.
std::filesystem::path output_path(const ExperimentConfig& cfg);

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace eswm::harness
