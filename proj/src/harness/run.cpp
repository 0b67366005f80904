#include "eswm/harness/run.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "eswm/agents.h"
#include "eswm/analysis.h"
#include "eswm/harness/config.h"
#include "eswm/harness/persistence.h"
#include "eswm/model/model.h"
#include "eswm/model/train.h"
#include "json.hpp"

namespace eswm::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tab-separated table with a header line.
class Table {
 public:
  Table(const fs::path& file, std::vector<std::string> columns) : out_(file), width_(columns.size()) {
    if (!out_) throw std::runtime_error("cannot write " + file.string());
    row_strings(columns);
  }
  template <typename... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> cells{cell(values)...};
    if (cells.size() != width_) throw std::logic_error("table row width");
    row_strings(cells);
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
  }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(long x) { return std::to_string(x); }
  static std::string cell(std::size_t x) { return std::to_string(x); }
  static std::string cell(bool x) { return x ? "1" : "0"; }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "\t" : "") << cells[i];
    out_ << '\n';
  }
  std::ofstream out_;
  std::size_t width_;
};

// Whitespace-separated table reader for `figures`.
struct TsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("missing column " + name);
    return static_cast<int>(it - header.begin());
  }
  double num(std::size_t r, const std::string& name) const { return std::stod(rows[r][col(name)]); }
  const std::string& str(std::size_t r, const std::string& name) const { return rows[r][col(name)]; }
};

TsvData read_tsv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  TsvData d;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, '\t')) out.push_back(item);
    return out;
  };
  if (std::getline(in, line)) d.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) d.rows.push_back(split(line));
  }
  return d;
}

struct Context {
  const RunRequest& request;
  ExperimentConfig cfg;
  fs::path dir;
  std::ostream& out;
  std::vector<std::string> outputs;
  std::optional<fs::path> checkpoint_used;
  json extra = json::object();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return dir / name;
  }
};

fs::path checkpoint_path(const Context& c) {
  return c.request.checkpoint ? *c.request.checkpoint : c.dir / "checkpoint.bin";
}

Network<float> load_model(Context& c) {
  const fs::path p = checkpoint_path(c);
  LoadedCheckpoint ck = load_checkpoint(p);
  if (!(model_config_json(ck.meta.model) == model_config_json(c.cfg.model))) {
    // Architecture must agree with the config; dropout only affects training.
    ModelConfig a = ck.meta.model, b = c.cfg.model;
    a.dropout = b.dropout = 0.0;
    if (model_config_json(a) != model_config_json(b)) {
      throw CheckpointError(p.string() + ": model config differs from the run config:\n  checkpoint " +
                            model_config_json(ck.meta.model) + "\n  config     " + model_config_json(c.cfg.model));
    }
  }
  c.checkpoint_used = p;
  return std::move(ck.net);
}

EvalSampler sampler_for(const ExperimentConfig& cfg, std::string_view stream) {
  return {cfg.env, cfg.mix, derive_seed(cfg.seed, stream)};
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// train

int cmd_train(Context& c) {
  const TrainConfig tcfg = resolved_train_config(c.cfg);
  Network<float> net(c.cfg.model, derive_seed(c.cfg.seed, "init"));
  const fs::path metrics = c.file("metrics.jsonl");
  write_metrics(metrics, {});
  CheckpointMeta meta{c.cfg.model, 0, c.cfg.seed};
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) {
    append_metrics(metrics, {{{"iteration", metric(r.iteration)},
                              {"loss", metric(r.loss)},
                              {"loss_source", metric(r.loss_source)},
                              {"loss_action", metric(r.loss_action)},
                              {"loss_end", metric(r.loss_end)},
                              {"acc_source", metric(r.acc_source)},
                              {"acc_action", metric(r.acc_action)},
                              {"acc_end", metric(r.acc_end)},
                              {"lr", metric(r.lr)}}});
    c.out << "it " << r.iteration << " loss " << fmt(r.loss) << " acc " << fmt(r.acc_source, 3) << " "
          << fmt(r.acc_action, 3) << " " << fmt(r.acc_end, 3) << " (" << fmt(r.wall_time, 0) << "s)\n"
          << std::flush;
  };
  hooks.on_checkpoint = [&](const Network<float>& n, int done) {
    if (done == tcfg.iterations) return;
    meta.iteration = done;
    const std::string name = "checkpoints/iter_" + std::to_string(done) + ".bin";
    save_checkpoint(c.file(name), n, meta);
  };
  train(net, tcfg, hooks);
  meta.iteration = tcfg.iterations;
  const fs::path ck = c.request.checkpoint ? *c.request.checkpoint : c.file("checkpoint.bin");
  save_checkpoint(ck, net, meta);
  c.checkpoint_used = ck;
  c.out << "checkpoint " << ck.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(Context& c) {
  const Network<float> net = load_model(c);
  const ModelPredictor model(net);
  const auto& a = c.cfg.analysis;

  const AccuracyReport rep = eval_accuracy(model, sampler_for(c.cfg, "eval"), a.eval_trials);
  {
    Table t(c.file("accuracy.tsv"), {"kind", "mask", "correct", "total", "rate", "lo", "hi"});
    for (QueryKind k : {QueryKind::Seen, QueryKind::Unseen, QueryKind::Unsolvable}) {
      for (Mask m : {Mask::Source, Mask::Action, Mask::End}) {
        const Tally& x = rep.at(k, m);
        const Interval w = x.wilson();
        t.row(to_string(k), to_string(m), x.correct, x.total, x.rate(), w.lo, w.hi);
      }
    }
  }
  c.out << "accuracy (source action end)\n";
  for (QueryKind k : {QueryKind::Seen, QueryKind::Unseen, QueryKind::Unsolvable}) {
    c.out << "  " << std::left << std::setw(11) << to_string(k) << std::right;
    for (Mask m : {Mask::Source, Mask::Action, Mask::End}) c.out << " " << fmt(rep.at(k, m).rate(), 3);
    c.out << "  n=" << rep.kind(k).total << "\n";
  }

  const EntropyTrend trend = entropy_vs_integration(model, sampler_for(c.cfg, "entropy"), a.entropy_trials);
  {
    Table t(c.file("entropy.tsv"), {"path_length", "entropy"});
    for (std::size_t i = 0; i < trend.entropy.size(); ++i) t.row(trend.path_length[i], trend.entropy[i]);
  }
  c.out << "entropy vs path: rho " << fmt(trend.correlation.rho) << " p " << trend.correlation.p_value
        << " n " << trend.correlation.n << "\n";

  const KlShortcut kl = kl_shortcut(model, sampler_for(c.cfg, "kl"), a.kl_trials, a.kl_min_path);
  {
    Table t(c.file("kl.tsv"), {"memory", "kl"});
    for (double x : kl.informative) t.row("informative", x);
    for (double x : kl.non_informative) t.row("non_informative", x);
  }
  c.out << "kl informative " << fmt(kl.test.mean_a) << " non-informative " << fmt(kl.test.mean_b) << " t "
        << fmt(kl.test.t, 2) << " p " << kl.test.p_value << " (skipped " << kl.skipped << ")\n";

  const DensitySweep sweep =
      density_sweep(model, sampler_for(c.cfg, "density"), a.density_fractions, a.density_trials);
  {
    Table t(c.file("density.tsv"), {"fraction", "mean_bank_size", "correct", "total", "rate"});
    for (const auto& p : sweep.points) {
      t.row(p.fraction, p.mean_bank_size, p.accuracy.correct, p.accuracy.total, p.accuracy.rate());
    }
  }
  c.out << "density sweep:";
  for (const auto& p : sweep.points) c.out << " " << fmt(p.mean_bank_size, 1) << ":" << fmt(p.accuracy.rate(), 3);
  c.out << "  rho " << fmt(sweep.correlation.rho) << "\n";

  c.extra = {{"entropy_rho", trend.correlation.rho},
             {"entropy_p", trend.correlation.p_value},
             {"kl_t", kl.test.t},
             {"kl_p", kl.test.p_value},
             {"density_rho", sweep.correlation.rho}};
  return 0;
}

// ---------------------------------------------------------------------------
// agents

struct AgentEpisode {
  Environment env;
  MemoryBank bank;
  Rng rng;
};

AgentEpisode agent_episode(const ExperimentConfig& cfg, int e) {
  const auto root = cfg.agent.env_seed;
  AgentEpisode ep{generate_environment(cfg.env, derive_seed(derive_seed(root, "env"), e)), {},
                  Rng(derive_seed(derive_seed(root, "pairs"), e))};
  ep.bank = sample_memory_bank(ep.env, derive_seed(derive_seed(root, "bank"), e));
  return ep;
}

std::vector<std::pair<StateId, StateId>> sample_pairs(const MemoryBank& bank, int count, Rng& rng) {
  const auto states = bank.unique_states();
  std::vector<std::pair<StateId, StateId>> out;
  if (states.size() < 2) return out;
  const int n = static_cast<int>(states.size());
  for (int i = 0; i < count; ++i) {
    const int a = uniform_int(rng, 0, n - 1);
    int b = uniform_int(rng, 0, n - 2);
    if (b >= a) ++b;
    out.emplace_back(states[a], states[b]);
  }
  return out;
}

LocId execute(const Environment& env, LocId from, const std::vector<ActionId>& actions) {
  for (ActionId a : actions) from = step(env, from, a);
  return from;
}

std::unique_ptr<Network<float>> maybe_model(Context& c) {
  if (c.request.oracle) return nullptr;
  return std::make_unique<Network<float>>(load_model(c));
}

int cmd_explore(Context& c) {
  const auto net = maybe_model(c);
  const auto& ag = c.cfg.agent;
  const std::string agent = c.request.oracle ? "uncertainty_oracle" : "model";
  Table t(c.file("explore.tsv"), {"agent", "episode", "step", "unique_states", "reachable_states"});
  double sum_agent = 0.0, sum_tsp = 0.0;
  int full = 0;
  for (int e = 0; e < ag.episodes; ++e) {
    AgentEpisode ep = agent_episode(c.cfg, e);
    const auto free = ep.env.free_locations();
    const LocId start = free[uniform_int(ep.rng, 0, static_cast<int>(free.size()) - 1)];
    ExploreResult res;
    if (net) {
      res = explore_episode(ModelPredictor(*net), ep.env, start, ag.explore_budget, ag.explore, ag.plan);
    } else {
      res = explore_episode(BankOracle(ep.env), ep.env, start, ag.explore_budget, ag.explore, ag.plan);
    }
    const ExploreResult tsp = oracle_explore(ep.env, start, ag.explore_budget);
    const auto reach = bfs_distances(ep.env, start);
    const int nfree = static_cast<int>(std::count_if(reach.begin(), reach.end(), [](int d) { return d >= 0; }));
    for (std::size_t s = 0; s < res.unique_states.size(); ++s) t.row(agent, e, s, res.unique_states[s], nfree);
    for (std::size_t s = 0; s < tsp.unique_states.size(); ++s) t.row("optimal", e, s, tsp.unique_states[s], nfree);
    const int got = res.unique_states.empty() ? 1 : res.unique_states.back();
    sum_agent += static_cast<double>(got) / nfree;
    sum_tsp += static_cast<double>(tsp.unique_states.empty() ? 1 : tsp.unique_states.back()) / nfree;
    full += got == nfree;
  }
  c.out << agent << " coverage " << fmt(sum_agent / ag.episodes, 3) << " (full " << full << "/" << ag.episodes
        << "), optimal " << fmt(sum_tsp / ag.episodes, 3) << " within " << ag.explore_budget << " steps\n";
  c.extra = {{"coverage", sum_agent / ag.episodes}, {"full_coverage", full}};
  return 0;
}

int cmd_navigate(Context& c) {
  const auto net = maybe_model(c);
  const auto& ag = c.cfg.agent;
  Table t(c.file("navigate.tsv"),
          {"episode", "start", "goal", "path_length", "success", "steps", "expansions", "optimality"});
  int connected = 0, successes = 0;
  double optimality = 0.0;
  for (int e = 0; e < ag.episodes; ++e) {
    AgentEpisode ep = agent_episode(c.cfg, e);
    const auto pairs = sample_pairs(ep.bank, ag.pairs_per_env, ep.rng);
    const GroundTruthPredictor gt(ep.env, true);
    std::unique_ptr<ModelPredictor> mp = net ? std::make_unique<ModelPredictor>(*net) : nullptr;
    const Predictor& p = mp ? static_cast<const Predictor&>(*mp) : gt;
    for (const auto& [s, g] : pairs) {
      const LocId ls = ep.env.loc_of_state(s), lg = ep.env.loc_of_state(g);
      const int d = bfs_distances(ep.env, ls)[lg];
      const PlanResult r = find_path(p, ep.bank, s, g, ag.plan);
      const bool ok = r.success && execute(ep.env, ls, r.actions) == lg;
      const double opt = ok && !r.actions.empty() ? static_cast<double>(d) / r.actions.size() : 0.0;
      t.row(e, s, g, d, ok, static_cast<int>(r.actions.size()), r.expansions, opt);
      if (d >= 0) {
        ++connected;
        successes += ok;
        optimality += opt;
      }
    }
  }
  const double rate = connected ? static_cast<double>(successes) / connected : 0.0;
  c.out << (net ? "model" : "ground-truth oracle") << " navigation: success " << successes << "/" << connected
        << " connected pairs (" << fmt(rate, 3) << "), optimality "
        << fmt(successes ? optimality / successes : 0.0, 3) << "\n";
  c.extra = {{"success_rate", rate}, {"connected_pairs", connected}};
  return 0;
}

int heuristic_layer(const ExperimentConfig& cfg) {
  return cfg.agent.heuristic_layer ? cfg.agent.heuristic_layer : cfg.model.middle_layer();
}

// Latent table for one bank. With a fixed radius the selection is skipped.
struct LatentTables {
  const Predictor& model;
  int layer;
  std::optional<double> radius;
  int cap;

  HeuristicTable operator()(const Environment& env, const MemoryBank& bank,
                            const std::vector<std::pair<StateId, StateId>>& pairs, double* chosen) {
    const auto nodes = state_action_pairs(bank);
    const Eigen::MatrixXd d = cosine_distances(node_activations(model, bank, nodes, layer));
    double r;
    if (radius) {
      r = *radius;
    } else {
      const auto sel = select_r_latent(model, bank, env, radius_grid(d), pairs,
                                       [&](double x) { return build_heuristic_table(nodes, d, x); }, cap);
      r = sel.radius;
      radius = r;  // selected once, reused for later banks
    }
    if (chosen) *chosen = r;
    return build_heuristic_table(nodes, d, r);
  }
};

int cmd_heuristic(Context& c) {
  const auto net = maybe_model(c);
  const auto& ag = c.cfg.agent;
  std::unique_ptr<ModelPredictor> mp = net ? std::make_unique<ModelPredictor>(*net) : nullptr;
  std::optional<LatentTables> latent;
  if (mp) latent.emplace(LatentTables{*mp, heuristic_layer(c.cfg), ag.r_latent, ag.nav_cap});
  Table t(c.file("heuristic.tsv"), {"episode", "start", "goal", "path_length", "radius", "dijkstra_success",
                                    "dijkstra_expansions", "dijkstra_cost", "astar_success", "astar_expansions",
                                    "astar_cost", "greedy_success", "greedy_steps"});
  long exp_d = 0, exp_a = 0;
  int both = 0, greedy_ok = 0, pairs_total = 0;
  double radius = 0.0;
  for (int e = 0; e < ag.episodes; ++e) {
    AgentEpisode ep = agent_episode(c.cfg, e);
    const auto pairs = sample_pairs(ep.bank, ag.pairs_per_env, ep.rng);
    const GroundTruthPredictor gt(ep.env, true);
    const Predictor& p = mp ? static_cast<const Predictor&>(*mp) : gt;
    const HeuristicTable table =
        latent ? (*latent)(ep.env, ep.bank, pairs, &radius) : ground_truth_table(ep.env, ep.bank);
    for (const auto& [s, g] : pairs) {
      const LocId ls = ep.env.loc_of_state(s), lg = ep.env.loc_of_state(g);
      const int d = bfs_distances(ep.env, ls)[lg];
      const PlanResult dj = find_path(p, ep.bank, s, g, ag.plan);
      const PlanResult as = find_path(p, ep.bank, s, g, ag.plan, &table);
      const NavResult gr = greedy_navigate(p, ep.bank, table, s, g, ag.nav_cap, &ep.env);
      t.row(e, s, g, d, radius, dj.success, dj.expansions, dj.cost, as.success, as.expansions, as.cost, gr.success,
            gr.steps());
      ++pairs_total;
      greedy_ok += gr.success;
      if (dj.success && as.success) {
        ++both;
        exp_d += dj.expansions;
        exp_a += as.expansions;
      }
    }
  }
  c.out << "expansions over " << both << " pairs solved by both: dijkstra " << exp_d << ", A* " << exp_a
        << "; greedy success " << greedy_ok << "/" << pairs_total;
  if (latent) c.out << " (r_latent " << fmt(radius) << ")";
  c.out << "\n";
  c.extra = {{"dijkstra_expansions", exp_d}, {"astar_expansions", exp_a}, {"greedy_success", greedy_ok}};
  return 0;
}

int cmd_adapt(Context& c) {
  const auto net = maybe_model(c);
  const auto& ag = c.cfg.agent;
  std::unique_ptr<ModelPredictor> mp = net ? std::make_unique<ModelPredictor>(*net) : nullptr;
  Table t(c.file("adapt.tsv"),
          {"episode", "start", "goal", "path_length", "obstacle", "success", "steps", "replans", "mismatches"});
  int ok = 0, total = 0;
  for (int e = 0; e < ag.episodes; ++e) {
    AgentEpisode ep = agent_episode(c.cfg, e);
    // A goal whose shortest path crosses a free cell that can become an
    // obstacle without disconnecting the pair.
    for (int attempt = 0; attempt < 50; ++attempt) {
      const auto pair = sample_pairs(ep.bank, 1, ep.rng);
      if (pair.empty()) break;
      const auto [s, g] = pair.front();
      const LocId ls = ep.env.loc_of_state(s), lg = ep.env.loc_of_state(g);
      const auto from_s = bfs_distances(ep.env, ls);
      const auto from_g = bfs_distances(ep.env, lg);
      const int d = from_s[lg];
      if (d < 2) continue;
      std::vector<LocId> on_path;
      for (LocId l = 0; l < ep.env.graph().num_locations(); ++l) {
        if (l != ls && l != lg && from_s[l] >= 0 && from_g[l] >= 0 && from_s[l] + from_g[l] == d) on_path.push_back(l);
      }
      if (on_path.empty()) continue;
      const LocId block = on_path[uniform_int(ep.rng, 0, static_cast<int>(on_path.size()) - 1)];
      Environment changed;
      try {
        changed = apply_world_change(ep.env, {{ep.env.graph().coord(block)}, {}});
      } catch (const std::invalid_argument&) {
        continue;
      }
      if (bfs_distances(changed, changed.loc_of_state(s))[changed.loc_of_state(g)] < 0) continue;
      const BankOracle oracle(ep.env);
      const Predictor& p = mp ? static_cast<const Predictor&>(*mp) : oracle;
      const AdaptOutcome r = adaptive_navigate(p, ep.bank, changed, s, g, ag.plan, ag.explore, ag.adapt);
      t.row(e, s, g, d, static_cast<int>(block), r.success, r.steps, r.replans, r.mismatches);
      ok += r.success;
      ++total;
      break;
    }
  }
  c.out << (mp ? "model" : "uncertainty oracle") << " adaptation: " << ok << "/" << total
        << " reached the goal after an obstacle was inserted\n";
  c.extra = {{"successes", ok}, {"instances", total}};
  return 0;
}

// ---------------------------------------------------------------------------
// latent geometry

int cmd_latent(Context& c) {
  const auto net = maybe_model(c);
  const auto& a = c.cfg.analysis;
  const auto& ag = c.cfg.agent;
  if (net) {
    const ModelPredictor model(*net);
    const int layer = a.activation_layer ? a.activation_layer
                                         : default_activation_layer(c.cfg.model.layers, a.activation_task);
    const auto recs = collect_activations(model, sampler_for(c.cfg, "isomap"), a.isomap_banks, a.activation_task,
                                          layer);
    std::vector<Eigen::VectorXf> pts;
    for (const auto& r : recs) pts.push_back(r.vector);
    const EmbeddingResult emb = isomap_embed(pts, a.isomap_neighbors, 3);
    Table t(c.file("latent_embedding.tsv"), {"q", "r", "x", "y", "z"});
    for (std::size_t i = 0; i < emb.kept.size(); ++i) {
      const auto& r = recs[emb.kept[i]];
      t.row(r.anchor.q, r.anchor.r, emb.coords(i, 0), emb.coords(i, 1), emb.coords(i, 2));
    }
    c.out << "isomap: " << emb.kept.size() << " activations (layer " << layer << ", task "
          << to_string(a.activation_task) << "), dropped " << emb.dropped << ", residual " << fmt(emb.residual)
          << "\n";
  }

  std::unique_ptr<ModelPredictor> mp = net ? std::make_unique<ModelPredictor>(*net) : nullptr;
  std::optional<LatentTables> tables;
  if (mp) tables.emplace(LatentTables{*mp, heuristic_layer(c.cfg), ag.r_latent, ag.nav_cap});
  Rng pair_rng(derive_seed(c.cfg.seed, "latent_pairs"));
  const LatentTableFn fn = [&](const Environment& env, const MemoryBank& bank) {
    if (!tables) return ground_truth_table(env, bank);
    const auto pairs = sample_pairs(bank, ag.pairs_per_env, pair_rng);
    return (*tables)(env, bank, pairs, nullptr);
  };
  const LatentCorrelation lc =
      latent_distance_correlation(sampler_for(c.cfg, "latent"), a.latent_envs, a.latent_pairs, fn);
  Table t(c.file("latent_pairs.tsv"), {"latent", "physical"});
  for (std::size_t i = 0; i < lc.latent.size(); ++i) t.row(lc.latent[i], lc.physical[i]);
  c.out << "latent vs physical distance: R^2 " << fmt(lc.fit.r2) << " slope " << fmt(lc.fit.slope) << " over "
        << lc.fit.n << " pairs (" << lc.excluded << " unreachable in the latent graph)\n";
  c.extra = {{"r2", lc.fit.r2}, {"pairs", lc.fit.n}};
  return 0;
}

int cmd_probe(Context& c) {
  const auto& a = c.cfg.analysis;
  ProbeConfig pc;
  pc.train = a.probe_train;
  pc.test = a.probe_test;
  pc.runs = a.probe_runs;
  pc.epochs = a.probe_epochs;
  pc.lr = a.probe_lr;
  pc.seed = derive_seed(c.cfg.seed, "probe");
  const EvalSampler sampler = sampler_for(c.cfg, "probe_data");
  const auto net = maybe_model(c);
  std::unique_ptr<ModelPredictor> mp = net ? std::make_unique<ModelPredictor>(*net) : nullptr;
  const int layer = a.activation_layer ? a.activation_layer : c.cfg.model.middle_layer();
  auto run_probe = [&](bool shuffled) {
    ProbeConfig p = pc;
    p.shuffle_labels = shuffled;
    if (mp) return distance_probe(*mp, sampler, layer, p);
    const auto f = coordinate_features();
    return train_probe(probe_triplets(sampler, 0, p.train, f), probe_triplets(sampler, 1000000, p.test, f), p);
  };
  const ProbeResult real = run_probe(false);
  const ProbeResult shuf = run_probe(true);
  Table t(c.file("probe.tsv"), {"labels", "run", "accuracy"});
  for (std::size_t i = 0; i < real.accuracies.size(); ++i) t.row("true", i, real.accuracies[i]);
  for (std::size_t i = 0; i < shuf.accuracies.size(); ++i) t.row("shuffled", i, shuf.accuracies[i]);
  c.out << "distance probe (" << (mp ? "activations" : "cell coordinates") << "): " << fmt(real.mean) << " +/- "
        << fmt(real.sd) << ", shuffled labels " << fmt(shuf.mean) << " +/- " << fmt(shuf.sd) << "\n";
  c.extra = {{"accuracy", real.mean}, {"shuffled_accuracy", shuf.mean}};
  return 0;
}

// ---------------------------------------------------------------------------
// figures

struct Summary {
  double mean = 0.0, sem = 0.0;
  int n = 0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sem = std::sqrt(ss / (s.n - 1) / s.n);
  }
  return s;
}

int cmd_figures(Context& c) {
  const fs::path figdir = c.dir / "figures";
  fs::create_directories(figdir);
  int written = 0;
  auto have = [&](const char* name) { return fs::exists(c.dir / name); };
  auto emit = [&](const std::string& name) {
    ++written;
    c.out << "wrote figures/" << name << "\n";
    return c.file("figures/" + name);
  };

  if (have("accuracy.tsv")) {
    const TsvData d = read_tsv(c.dir / "accuracy.tsv");
    Table t(emit("accuracy_by_task.tsv"), {"task", "kind", "rate", "lo", "hi", "n"});
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      t.row(d.str(i, "mask"), d.str(i, "kind"), d.num(i, "rate"), d.num(i, "lo"), d.num(i, "hi"),
            static_cast<int>(d.num(i, "total")));
    }
  }
  if (have("entropy.tsv")) {
    const TsvData d = read_tsv(c.dir / "entropy.tsv");
    std::map<int, std::vector<double>> by;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      by[static_cast<int>(d.num(i, "path_length"))].push_back(d.num(i, "entropy"));
    }
    Table t(emit("integration_entropy.tsv"), {"path_length", "mean_entropy", "sem", "n"});
    for (const auto& [len, xs] : by) {
      const Summary s = summarize(xs);
      t.row(len, s.mean, s.sem, s.n);
    }
  }
  if (have("kl.tsv")) {
    const TsvData d = read_tsv(c.dir / "kl.tsv");
    std::map<std::string, std::vector<double>> by;
    for (std::size_t i = 0; i < d.rows.size(); ++i) by[d.str(i, "memory")].push_back(d.num(i, "kl"));
    Table t(emit("integration_kl.tsv"), {"memory", "mean_kl", "sem", "n"});
    for (const char* k : {"informative", "non_informative"}) {
      const Summary s = summarize(by[k]);
      t.row(k, s.mean, s.sem, s.n);
    }
  }
  if (have("density.tsv")) {
    const TsvData d = read_tsv(c.dir / "density.tsv");
    Table t(emit("integration_density.tsv"), {"mean_bank_size", "accuracy", "lo", "hi", "n"});
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      const int k = static_cast<int>(d.num(i, "correct")), n = static_cast<int>(d.num(i, "total"));
      const Interval w = wilson_interval(k, n);
      t.row(d.num(i, "mean_bank_size"), d.num(i, "rate"), w.lo, w.hi, n);
    }
  }
  if (have("explore.tsv")) {
    const TsvData d = read_tsv(c.dir / "explore.tsv");
    std::map<std::pair<std::string, int>, std::vector<double>> by;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      by[{d.str(i, "agent"), static_cast<int>(d.num(i, "step"))}].push_back(d.num(i, "unique_states"));
    }
    Table t(emit("exploration_curve.tsv"), {"agent", "step", "mean_unique_states", "sem", "n"});
    for (const auto& [key, xs] : by) {
      const Summary s = summarize(xs);
      t.row(key.first, key.second, s.mean, s.sem, s.n);
    }
  }
  if (have("navigate.tsv")) {
    const TsvData d = read_tsv(c.dir / "navigate.tsv");
    std::map<int, std::vector<double>> success, optimality;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      const int len = static_cast<int>(d.num(i, "path_length"));
      if (len < 0) continue;
      success[len].push_back(d.num(i, "success"));
      if (d.num(i, "success") > 0) optimality[len].push_back(d.num(i, "optimality"));
    }
    Table t(emit("navigation_by_length.tsv"), {"path_length", "success_rate", "optimality", "n"});
    for (const auto& [len, xs] : success) t.row(len, summarize(xs).mean, summarize(optimality[len]).mean, summarize(xs).n);
  }
  if (have("adapt.tsv")) {
    const TsvData d = read_tsv(c.dir / "adapt.tsv");
    std::vector<double> ok, replans;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      ok.push_back(d.num(i, "success"));
      replans.push_back(d.num(i, "replans"));
    }
    Table t(emit("adaptation_summary.tsv"), {"obstacles", "success_rate", "mean_replans", "n"});
    t.row(1, summarize(ok).mean, summarize(replans).mean, summarize(ok).n);
  }
  if (written == 0) {
    throw std::runtime_error("no stored results in " + c.dir.string() + "; run eval, explore, navigate or adapt first");
  }
  return 0;
}

// ---------------------------------------------------------------------------

void write_manifest(Context& c) {
  const fs::path file = c.dir / "manifest.json";
  json m = json::object();
  if (fs::exists(file)) {
    try {
      m = json::parse(read_file(file));
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  const std::string rendered = render_config(c.cfg);
  json entry = {{"config_hash", fnv1a_hex(rendered)},
                {"config", c.request.config ? c.request.config->string() : std::string()},
                {"oracle", c.request.oracle},
                {"outputs", c.outputs},
                {"seeds",
                 {{"root", c.cfg.seed},
                  {"env", derive_seed(c.cfg.seed, "env")},
                  {"bank", derive_seed(c.cfg.seed, "bank")},
                  {"query", derive_seed(c.cfg.seed, "query")},
                  {"init", derive_seed(c.cfg.seed, "init")},
                  {"dropout", derive_seed(c.cfg.seed, "dropout")},
                  {"eval", derive_seed(c.cfg.seed, "eval")},
                  {"probe", derive_seed(c.cfg.seed, "probe")},
                  {"agent_env", c.cfg.agent.env_seed}}},
                {"versions",
                 {{"eswm", kVersion},
                  {"checkpoint_format", kCheckpointVersion},
                  {"compiler", __VERSION__},
                  {"cxx_standard", static_cast<long>(__cplusplus)}}},
                {"results", c.extra}};
  if (c.checkpoint_used && fs::exists(*c.checkpoint_used)) {
    entry["checkpoint"] = c.checkpoint_used->string();
    entry["checkpoint_hash"] = fnv1a_hex(read_file(*c.checkpoint_used));
  }
  m["version"] = kVersion;
  m["runs"][c.request.command] = entry;
  write_file(file, m.dump(2) + "\n");
}

int dispatch(Context& c) {
  const std::string& cmd = c.request.command;
  if (cmd == "train") return cmd_train(c);
  if (cmd == "eval") return cmd_eval(c);
  if (cmd == "explore") return cmd_explore(c);
  if (cmd == "navigate") return cmd_navigate(c);
  if (cmd == "heuristic") return cmd_heuristic(c);
  if (cmd == "adapt") return cmd_adapt(c);
  if (cmd == "latent") return cmd_latent(c);
  if (cmd == "probe") return cmd_probe(c);
  if (cmd == "figures") return cmd_figures(c);
  throw UsageError("unknown subcommand '" + cmd + "'");
}

}  // namespace

int run(const RunRequest& request, std::ostream& out, std::ostream& err) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), request.command) == names.end()) {
    err << "error: unknown subcommand '" << request.command << "'\n";
    return static_cast<int>(ExitCode::Usage);
  }
  static const std::set<std::string> with_oracle{"explore", "navigate", "heuristic", "adapt", "latent", "probe"};
  if (request.oracle && !with_oracle.count(request.command)) {
    err << "error: --oracle is not supported by '" << request.command << "'\n";
    return static_cast<int>(ExitCode::Usage);
  }
  ExperimentConfig cfg;
  try {
    cfg = load_config(request.config, request.overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::InvalidConfig);
  }
  Context c{request, cfg, output_path(cfg), out, {}, std::nullopt};
  try {
    fs::create_directories(c.dir);
    write_file(c.dir / ("config." + request.command + ".txt"), render_config(cfg));
    c.outputs.push_back("config." + request.command + ".txt");
    const int code = dispatch(c);
    if (request.command != "train" && !c.extra.empty()) {
      MetricRecord rec{{"command", metric(request.command)}};
      for (const auto& [k, v] : c.extra.items()) rec[k] = metric(v.get<double>());
      write_metrics(c.file(request.command + "_metrics.jsonl"), {rec});
    }
    write_manifest(c);
    return code;
  } catch (const MissingCheckpoint& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::MissingCheckpoint);
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::BadCheckpoint);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Usage);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Failure);
  }
}

}  // namespace eswm::harness
