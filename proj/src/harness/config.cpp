#include "eswm/harness/config.h"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace eswm::harness {

namespace {

using Getter = std::function<std::string(const ExperimentConfig&)>;
using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct Field {
  std::string key;
  Getter get;
  Setter set;
  std::string doc;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

long long parse_integer(const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return out;
}

std::uint64_t parse_unsigned(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer");
  }
  return out;
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw std::invalid_argument("expected a number");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

Mask parse_mask(const std::string& v) {
  if (v == "source") return Mask::Source;
  if (v == "action") return Mask::Action;
  if (v == "end") return Mask::End;
  throw std::invalid_argument("expected source, action or end");
}

template <typename Proj>
Field int_field(std::string key, Proj proj, std::string doc) {
  return {std::move(key), [proj](const ExperimentConfig& c) { return std::to_string(proj(const_cast<ExperimentConfig&>(c))); },
          [proj](ExperimentConfig& c, const std::string& v) {
            const long long x = parse_integer(v);
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
              throw std::invalid_argument("integer out of range");
            }
            proj(c) = static_cast<int>(x);
          },
          std::move(doc)};
}

template <typename Proj>
Field u64_field(std::string key, Proj proj, std::string doc) {
  return {std::move(key), [proj](const ExperimentConfig& c) { return std::to_string(proj(const_cast<ExperimentConfig&>(c))); },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_unsigned(v); },
          std::move(doc)};
}

template <typename Proj>
Field double_field(std::string key, Proj proj, std::string doc) {
  return {std::move(key), [proj](const ExperimentConfig& c) { return fmt_double(proj(const_cast<ExperimentConfig&>(c))); },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_double(v); },
          std::move(doc)};
}

template <typename Proj>
Field bool_field(std::string key, Proj proj, std::string doc) {
  return {std::move(key),
          [proj](const ExperimentConfig& c) {
            return std::string(proj(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_bool(v); },
          std::move(doc)};
}

template <typename Proj, typename Show, typename Parse>
Field enum_field(std::string key, Proj proj, Show show, Parse parse, std::string doc) {
  return {std::move(key), [proj, show](const ExperimentConfig& c) { return show(proj(const_cast<ExperimentConfig&>(c))); },
          [proj, parse](ExperimentConfig& c, const std::string& v) { proj(c) = parse(v); },
          std::move(doc)};
}

#define P(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(u64_field("seed", P(c.seed), "root seed; every random stream derives from it"));
    f.push_back({"output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty()) throw std::invalid_argument("must not be empty");
                   c.output_dir = v;
                 },
                 "run directory; relative paths go under $ESWM_OUTPUT_ROOT"});

    f.push_back(enum_field("env.family", P(c.env.family), [](EnvFamily x) { return to_string(x); },
                           parse_env_family, "open_arena or random_wall"));
    f.push_back(int_field("env.radius", P(c.env.radius), "hex radius"));
    f.push_back(int_field("env.vocab_size", P(c.env.vocab_size), "number of state values"));
    f.push_back(enum_field("env.state_encoding", P(c.env.state_encoding),
                           [](StateEncoding x) { return to_string(x); }, parse_state_encoding,
                           "integer or six_bit"));
    f.push_back(int_field("env.wall_len_min", P(c.env.wall_len_min), "shortest wall"));
    f.push_back(int_field("env.wall_len_max", P(c.env.wall_len_max), "longest wall"));
    f.push_back(double_field("env.unobs_max_frac", P(c.env.unobs_max_frac),
                             "largest unobserved share of the cells"));
    f.push_back(enum_field("env.state_pool", P(c.env.state_pool), [](StatePool x) { return to_string(x); },
                           parse_state_pool, "all, train or test state values"));
    f.push_back(double_field("env.mix.unseen", P(c.mix.unseen), "share of unseen queries"));
    f.push_back(double_field("env.mix.seen", P(c.mix.seen), "share of seen queries"));
    f.push_back(double_field("env.mix.unsolvable", P(c.mix.unsolvable), "share of unsolvable queries"));

    f.push_back(enum_field("model.arch", P(c.model.arch), [](Arch x) { return to_string(x); }, parse_arch,
                           "transformer or lstm"));
    f.push_back(int_field("model.layers", P(c.model.layers), "encoder layers"));
    f.push_back(int_field("model.embed_dim", P(c.model.embed_dim), "token width"));
    f.push_back(int_field("model.heads", P(c.model.heads), "attention heads"));
    f.push_back(int_field("model.ff_dim", P(c.model.ff_dim), "feed-forward width"));
    f.push_back(double_field("model.dropout", P(c.model.dropout), "dropout rate during training"));
    f.push_back(int_field("model.state_vocab", P(c.model.state_vocab), "state classes (without IDK)"));
    f.push_back(bool_field("model.idk_enabled", P(c.model.idk_enabled), "extra IDK class on every head"));
    f.push_back(enum_field("model.state_encoding", P(c.model.state_encoding),
                           [](StateEncoding x) { return to_string(x); }, parse_state_encoding,
                           "integer or six_bit"));
    f.push_back(enum_field("model.loss_scope", P(c.model.loss_scope), [](LossScope x) { return to_string(x); },
                           parse_loss_scope, "all_heads or masked_only"));

    f.push_back(int_field("train.iterations", P(c.train.iterations), "optimizer steps"));
    f.push_back(int_field("train.batch_size", P(c.train.batch_size), "samples per step"));
    f.push_back(double_field("train.base_lr", P(c.train.base_lr), "peak learning rate (cosine decay)"));
    f.push_back(double_field("train.weight_decay", P(c.train.weight_decay), "AdamW decay on weight matrices"));
    f.push_back(double_field("train.beta1", P(c.train.beta1), "Adam first-moment rate"));
    f.push_back(double_field("train.beta2", P(c.train.beta2), "Adam second-moment rate"));
    f.push_back(double_field("train.adam_eps", P(c.train.adam_eps), "Adam epsilon"));
    f.push_back(double_field("train.grad_clip", P(c.train.grad_clip), "global gradient-norm clip, 0 off"));
    f.push_back(double_field("train.loss_weight.source", P(c.train.loss_weights.source), "source head weight"));
    f.push_back(double_field("train.loss_weight.action", P(c.train.loss_weights.action), "action head weight"));
    f.push_back(double_field("train.loss_weight.end", P(c.train.loss_weights.end), "end head weight"));
    f.push_back(int_field("train.log_every", P(c.train.log_every), "iterations per metrics record"));
    f.push_back(int_field("train.checkpoint_every", P(c.train.checkpoint_every),
                          "iterations per intermediate checkpoint, 0 final only"));

    f.push_back(int_field("agent.t_max", P(c.agent.plan.t_max), "planning horizon"));
    f.push_back(double_field("agent.action_cost", P(c.agent.plan.action_cost), "cost per move"));
    f.push_back(double_field("agent.beta", P(c.agent.explore.beta), "IDK entropy penalty"));
    f.push_back(double_field("agent.gamma", P(c.agent.explore.gamma), "low-confidence entropy bonus"));
    f.push_back(double_field("agent.confidence_threshold", P(c.agent.explore.confidence_threshold),
                             "max probability counted as confident"));
    f.push_back(int_field("agent.lookahead_depth", P(c.agent.explore.lookahead_depth), "frontier search depth"));
    f.push_back(int_field("agent.local_explore_budget", P(c.agent.adapt.local_explore_budget),
                          "exploration steps after a surprise"));
    f.push_back(int_field("agent.global_budget", P(c.agent.adapt.global_budget), "step limit when adapting"));
    f.push_back(int_field("agent.explore_budget", P(c.agent.explore_budget), "steps per exploration episode"));
    f.push_back(int_field("agent.episodes", P(c.agent.episodes), "environments per agent run"));
    f.push_back(u64_field("agent.env_seed", P(c.agent.env_seed), "seed of the agent environments"));
    f.push_back(int_field("agent.nav_cap", P(c.agent.nav_cap), "greedy navigation step cap"));
    f.push_back(int_field("agent.pairs_per_env", P(c.agent.pairs_per_env), "start/goal pairs per environment"));
    f.push_back({"agent.r_latent",
                 [](const ExperimentConfig& c) {
                   return c.agent.r_latent ? fmt_double(*c.agent.r_latent) : std::string("auto");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "auto") c.agent.r_latent.reset();
                   else c.agent.r_latent = parse_double(v);
                 },
                 "latent graph radius, or auto"});
    f.push_back(int_field("agent.heuristic_layer", P(c.agent.heuristic_layer),
                          "activation layer for the heuristic, 0 middle"));

    f.push_back(int_field("analysis.eval_trials", P(c.analysis.eval_trials), "accuracy trials"));
    f.push_back(int_field("analysis.entropy_trials", P(c.analysis.entropy_trials), "entropy trend trials"));
    f.push_back(int_field("analysis.kl_trials", P(c.analysis.kl_trials), "shortcut insertion trials"));
    f.push_back(int_field("analysis.kl_min_path", P(c.analysis.kl_min_path), "minimum integration path"));
    f.push_back({"analysis.density_fractions",
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (double x : c.analysis.density_fractions) s += (s.empty() ? "" : ",") + fmt_double(x);
                   return s;
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   std::vector<double> out;
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item)));
                   if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
                   c.analysis.density_fractions = out;
                 },
                 "shares of the unseen edges added to the bank"});
    f.push_back(int_field("analysis.density_trials", P(c.analysis.density_trials), "trials per density"));
    f.push_back(int_field("analysis.isomap_banks", P(c.analysis.isomap_banks), "banks feeding the embedding"));
    f.push_back(int_field("analysis.isomap_neighbors", P(c.analysis.isomap_neighbors), "k of the neighbour graph"));
    f.push_back(enum_field("analysis.activation_task", P(c.analysis.activation_task),
                           [](Mask m) { return to_string(m); }, parse_mask, "source, action or end"));
    f.push_back(int_field("analysis.activation_layer", P(c.analysis.activation_layer),
                          "activation layer, 0 per-task default"));
    f.push_back(int_field("analysis.latent_envs", P(c.analysis.latent_envs), "environments for latent distances"));
    f.push_back(int_field("analysis.latent_pairs", P(c.analysis.latent_pairs), "pairs per environment"));
    f.push_back(int_field("analysis.probe_train", P(c.analysis.probe_train), "probe training triplets"));
    f.push_back(int_field("analysis.probe_test", P(c.analysis.probe_test), "probe test triplets"));
    f.push_back(int_field("analysis.probe_runs", P(c.analysis.probe_runs), "probe initialisations"));
    f.push_back(int_field("analysis.probe_epochs", P(c.analysis.probe_epochs), "probe optimisation steps"));
    f.push_back(double_field("analysis.probe_lr", P(c.analysis.probe_lr), "probe learning rate"));
    return f;
  }();
  return all;
}

#undef P

const Field* find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

std::string config_doc(const std::string& key) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  return f->doc;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  try {
    f->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what() + " (got '" + value + "')");
  }
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), file->string());
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  validate(cfg);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void validate(const ExperimentConfig& cfg) {
  try {
    eswm::validate(cfg.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  try {
    eswm::validate(cfg.model);
    check_compatible(cfg.model, cfg.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  const double mix = cfg.mix.unseen + cfg.mix.seen + cfg.mix.unsolvable;
  require(cfg.mix.unseen >= 0 && cfg.mix.seen >= 0 && cfg.mix.unsolvable >= 0 && std::abs(mix - 1.0) < 1e-9,
          "env.mix", "shares must be non-negative and sum to 1");
  try {
    eswm::validate(resolved_train_config(cfg));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  try {
    eswm::validate(cfg.agent.plan);
    eswm::validate(cfg.agent.explore);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto& a = cfg.agent;
  require(a.adapt.local_explore_budget >= 0, "agent.local_explore_budget", "must be >= 0");
  require(a.adapt.global_budget >= 1, "agent.global_budget", "must be >= 1");
  require(a.explore_budget >= 0, "agent.explore_budget", "must be >= 0");
  require(a.episodes >= 1, "agent.episodes", "must be >= 1");
  require(a.nav_cap >= 1, "agent.nav_cap", "must be >= 1");
  require(a.pairs_per_env >= 1, "agent.pairs_per_env", "must be >= 1");
  require(!a.r_latent || *a.r_latent > 0.0, "agent.r_latent", "must be > 0 or auto");
  require(a.heuristic_layer >= 0 && a.heuristic_layer <= cfg.model.layers, "agent.heuristic_layer",
          "must lie in [0, model.layers]");
  const auto& s = cfg.analysis;
  require(s.eval_trials >= 1, "analysis.eval_trials", "must be >= 1");
  require(s.entropy_trials >= 1, "analysis.entropy_trials", "must be >= 1");
  require(s.kl_trials >= 1, "analysis.kl_trials", "must be >= 1");
  require(s.kl_min_path >= 1, "analysis.kl_min_path", "must be >= 1");
  for (double x : s.density_fractions) require(x >= 0.0 && x <= 1.0, "analysis.density_fractions", "must lie in [0, 1]");
  require(s.density_trials >= 1, "analysis.density_trials", "must be >= 1");
  require(s.isomap_banks >= 1, "analysis.isomap_banks", "must be >= 1");
  require(s.isomap_neighbors >= 1, "analysis.isomap_neighbors", "must be >= 1");
  require(s.activation_layer >= 0 && s.activation_layer <= cfg.model.layers, "analysis.activation_layer",
          "must lie in [0, model.layers]");
  require(s.latent_envs >= 1 && s.latent_pairs >= 1, "analysis.latent_envs", "and latent_pairs must be >= 1");
  require(s.probe_train >= 2 && s.probe_test >= 1 && s.probe_runs >= 1 && s.probe_epochs >= 1,
          "analysis.probe_train", "probe sizes must be positive");
  require(s.probe_lr > 0.0, "analysis.probe_lr", "must be > 0");
}

TrainConfig resolved_train_config(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.env = cfg.env;
  t.mix = cfg.mix;
  t.seed = cfg.seed;
  return t;
}

std::filesystem::path output_path(const ExperimentConfig& cfg) {
  std::filesystem::path p(cfg.output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("ESWM_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  }
  return p;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace eswm::harness
