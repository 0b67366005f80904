#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eswm/harness/config.h"
#include "eswm/harness/run.h"

using namespace eswm::harness;

namespace {

std::pair<std::string, std::string> split_setting(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic spatial world model: training, evaluation, agents and analyses"};
  app.require_subcommand(0, 1);

  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

  RunRequest req;
  std::string config, checkpoint, radius, output;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed, env_seed;
  std::optional<int> budget, t_max;

  for (const std::string& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config,-c", config, "Config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "Override a config key: --set train.iterations=500");
    sub->add_option("--seed", seed, "Root seed");
    sub->add_option("--output,-o", output, "Output directory");
    if (name != "train" && name != "figures") sub->add_option("--checkpoint", checkpoint, "Model checkpoint");
    if (name == "train") sub->add_option("--checkpoint", checkpoint, "Where to write the final checkpoint");
    if (name == "explore" || name == "navigate" || name == "heuristic" || name == "adapt") {
      sub->add_option("--env-seed", env_seed, "Seed of the agent environments");
      sub->add_option("--t-max", t_max, "Planning horizon");
    }
    if (name == "explore" || name == "adapt") sub->add_option("--budget", budget, "Step budget");
    if (name == "heuristic" || name == "latent") sub->add_option("--radius", radius, "r_latent value or auto");
    if (name == "explore" || name == "navigate" || name == "heuristic" || name == "adapt" || name == "latent" ||
        name == "probe") {
      sub->add_flag("--oracle", req.oracle, "Use ground-truth knowledge instead of the trained model");
    }
  }

  try {
    app.parse(argc, argv);
    for (const auto& kv : sets) req.overrides.push_back(split_setting(kv));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (list_keys) {
    const ExperimentConfig defaults;
    std::cout << render_config(defaults);
    return 0;
  }
  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    std::cerr << app.help();
    return static_cast<int>(ExitCode::Usage);
  }
  req.command = chosen.front()->get_name();
  if (!config.empty()) req.config = config;
  if (!checkpoint.empty()) req.checkpoint = checkpoint;
  // Flags are shorthands for config keys and take precedence over --set.
  if (seed) req.overrides.emplace_back("seed", std::to_string(*seed));
  if (!output.empty()) req.overrides.emplace_back("output_dir", output);
  if (env_seed) req.overrides.emplace_back("agent.env_seed", std::to_string(*env_seed));
  if (t_max) req.overrides.emplace_back("agent.t_max", std::to_string(*t_max));
  if (budget) {
    req.overrides.emplace_back(req.command == "adapt" ? "agent.global_budget" : "agent.explore_budget",
                               std::to_string(*budget));
  }
  if (!radius.empty()) req.overrides.emplace_back("agent.r_latent", radius);
  return run(req, std::cout, std::cerr);
}
