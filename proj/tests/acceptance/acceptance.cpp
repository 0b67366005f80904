// Acceptance report: one PASS/FAIL line per criterion, followed by the
// measured quantities. Exit status is 0 when every criterion was evaluated;
// with --strict it is 1 if any criterion failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "eswm/agents.h"
#include "eswm/analysis.h"
#include "eswm/harness/config.h"
#include "eswm/harness/persistence.h"
#include "eswm/model/model.h"
#include "eswm/model/train.h"

using namespace eswm;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  std::string name;
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  [miss] " << what << "\n";
    }
  }
  void note(const std::string& s) { detail << "  " << s << "\n"; }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << x;
  return os.str();
}

Environment open_env(int radius, std::uint64_t seed) {
  const HexGraph g(radius);
  const int n = g.num_locations();
  std::vector<StateId> states(n);
  std::iota(states.begin(), states.end(), 0);
  Rng rng(seed);
  std::shuffle(states.begin(), states.end(), rng);
  std::vector<bool> forward(g.num_edges());
  for (std::size_t e = 0; e < forward.size(); ++e) forward[e] = uniform01(rng) < 0.5;
  return make_environment(g, std::vector<bool>(n, false), std::vector<bool>(n, true), states, forward,
                          EnvFamily::RandomWall, StateEncoding::Integer, n);
}

int observable_components(const Environment& env) {
  const HexGraph& g = env.graph();
  std::vector<int> comp(g.num_locations(), -1);
  int next = 0;
  for (LocId s : env.observable()) {
    if (comp[s] >= 0) continue;
    std::vector<LocId> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const LocId l = stack.back();
      stack.pop_back();
      for (ActionId a = 0; a < kNumActions; ++a) {
        const LocId m = g.neighbor(l, a);
        if (m != kNoLoc && env.is_observable(m) && comp[m] < 0) {
          comp[m] = next;
          stack.push_back(m);
        }
      }
    }
    ++next;
  }
  return next;
}

// ---------------------------------------------------------------------------

Verdict environment_suite() {
  Verdict v{"Environment/memory-bank property suite"};
  const auto t0 = Clock::now();
  v.require(HexGraph(2).num_locations() == 19 && HexGraph(2).num_edges() == 42, "radius 2: 19 cells, 42 edges");
  v.require(HexGraph(3).num_locations() == 37 && HexGraph(3).num_edges() == 90, "radius 3: 37 cells, 90 edges");
  v.require(2 * HexGraph(2).num_edges() == 84 && 2 * HexGraph(3).num_edges() == 180, "84 / 180 directed moves");

  const int n_env = 10000;
  int bad_size = 0, bad_span = 0, bad_support = 0, bad_loop = 0, bad_wall_loop = 0;
  std::map<QueryKind, long> kinds;
  long queries = 0;
  Rng qrng(derive_seed(99, "acceptance-mix"));
  for (int i = 0; i < n_env; ++i) {
    const int radius = i % 2 ? 3 : 2;
    const Environment env = generate_environment(EnvConfig::random_wall(radius), derive_seed(1, i));
    const MemoryBank bank = sample_memory_bank(env, derive_seed(2, i));
    const int obs = static_cast<int>(env.observable().size());
    const int comps = observable_components(env);
    // Minimal and spanning: a forest with one tree per observable component.
    bad_size += static_cast<int>(bank.size()) != obs - comps;
    std::set<int> edges;
    for (const Transition& t : bank.transitions) {
      const int e = transition_edge(env, t);
      if (e < 0 || !edges.insert(e).second || !(t == directed_transition(env, e))) ++bad_support;
    }
    std::vector<int> parent(env.graph().num_locations());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (int e : edges) {
      const HexEdge he = env.graph().edges()[e];
      parent[find(he.lo)] = find(he.hi);
    }
    std::set<int> roots;
    for (LocId l : env.observable()) roots.insert(find(l));
    bad_span += static_cast<int>(roots.size()) != comps;
    // Moves into walls or off the grid stay put.
    for (LocId l : env.free_locations()) {
      for (ActionId a = 0; a < kNumActions; ++a) {
        const LocId m = env.graph().neighbor(l, a);
        const bool blocked = m == kNoLoc || env.is_wall(m);
        bad_loop += (step(env, l, a) == l) != blocked;
      }
    }
    for (int e = 0; e < env.graph().num_edges(); ++e) {
      const HexEdge he = env.graph().edges()[e];
      if (env.is_wall(he.lo) == env.is_wall(he.hi)) continue;
      const Transition t = directed_transition(env, e);
      const LocId free = env.is_wall(he.lo) ? he.hi : he.lo;
      bad_wall_loop += !(t.source == t.end && t.source == env.state_of(free));
    }
    const QueryCandidates c = query_candidates(env, bank);
    if (c.unseen.empty() || c.seen.empty() || c.unsolvable.empty()) continue;
    for (int k = 0; k < 10; ++k) {
      ++kinds[sample_query(env, bank, c, QueryMix{}, qrng).kind];
      ++queries;
    }
  }
  v.require(bad_size == 0, "bank size = observable cells - components (" + std::to_string(bad_size) + " bad)");
  v.require(bad_span == 0, "bank spans every observable component (" + std::to_string(bad_span) + " bad)");
  v.require(bad_support == 0, "bank memories are distinct oriented edges (" + std::to_string(bad_support) + " bad)");
  v.require(bad_loop == 0, "blocked moves are self-loops (" + std::to_string(bad_loop) + " bad)");
  v.require(bad_wall_loop == 0, "wall edges give self-loops at the free cell (" + std::to_string(bad_wall_loop) +
                                    " bad)");
  const double fu = kinds[QueryKind::Unseen] / double(queries), fs = kinds[QueryKind::Seen] / double(queries),
               fx = kinds[QueryKind::Unsolvable] / double(queries);
  v.note("query mix over " + std::to_string(queries) + " draws: unseen " + num(fu) + " seen " + num(fs) +
         " unsolvable " + num(fx));
  v.require(std::abs(fu - 0.68) <= 0.01 && std::abs(fs - 0.17) <= 0.01 && std::abs(fx - 0.15) <= 0.01,
            "query mix within 0.01 of (0.68, 0.17, 0.15)");
  const double secs = seconds_since(t0);
  v.note(std::to_string(n_env) + " environments in " + num(secs, 1) + " s");
  v.require(secs < 300.0, "runtime under 5 minutes");
  return v;
}

Verdict planner_oracle() {
  Verdict v{"Planner oracle equivalence"};
  const auto t0 = Clock::now();
  PlanConfig pc;  // t_max 20
  int pairs = 0, connected = 0, success = 0, optimal = 0, wrong = 0, horizon_checks = 0;
  for (int e = 0; e < 50; ++e) {
    const Environment env = generate_environment(EnvConfig::random_wall(3), derive_seed(7, e));
    const MemoryBank bank = sample_memory_bank(env, derive_seed(8, e));
    const GroundTruthPredictor gt(env, true);
    const auto free = env.free_locations();
    for (LocId a : free) {
      const auto dist = bfs_distances(env, a);
      for (LocId b : free) {
        if (a == b) continue;
        ++pairs;
        const int d = dist[b];
        const PlanResult r = find_path(gt, bank, env.state_of(a), env.state_of(b), pc);
        const bool reachable = d >= 0 && d <= pc.t_max;
        if (r.success != reachable) ++wrong;
        if (d >= 0) {
          ++connected;
          if (r.success) {
            ++success;
            LocId at = a;
            for (ActionId x : r.actions) at = step(env, at, x);
            optimal += at == b && static_cast<int>(r.actions.size()) == d;
          }
        }
        // A horizon one short of the distance must fail; exactly the distance must succeed.
        if (d >= 2 && (a + b) % 5 == 0) {
          ++horizon_checks;
          const PlanResult shorter = find_path(gt, bank, env.state_of(a), env.state_of(b), {d - 1, 1.0});
          const PlanResult exact = find_path(gt, bank, env.state_of(a), env.state_of(b), {d, 1.0});
          if (shorter.success || !exact.success) ++wrong;
        }
      }
    }
  }
  v.note(std::to_string(pairs) + " ordered pairs, " + std::to_string(connected) + " connected, " +
         std::to_string(horizon_checks) + " horizon probes");
  v.note("success " + std::to_string(success) + "/" + std::to_string(connected) + ", optimal " +
         std::to_string(optimal) + "/" + std::to_string(success));
  v.require(success == connected, "every connected pair is solved");
  v.require(optimal == success, "every path is executable and has BFS length");
  v.require(wrong == 0, "failures are exactly the disconnected or beyond-horizon pairs (" + std::to_string(wrong) +
                            " wrong)");
  const double secs = seconds_since(t0);
  v.note("runtime " + num(secs, 1) + " s");
  v.require(secs < 120.0, "runtime under 2 minutes");
  return v;
}

// Model numerics on a tiny double-precision network.
struct NumericsBatch {
  std::vector<TrainingSample> samples;
  std::vector<ModelInput> inputs;
  std::vector<HeadTargets> targets;
  std::vector<LossWeights> weights;
  NumericsBatch(const ModelConfig& m, const EnvConfig& env, int n, std::uint64_t seed) {
    TrainConfig tc;
    tc.env = env;
    tc.mix = QueryMix::for_family(env.family);
    tc.batch_size = n;
    tc.seed = seed;
    samples = sample_batch(tc, 0);
    for (const auto& s : samples) {
      inputs.push_back({s.bank.transitions, s.query.transition, s.query.mask});
      targets.push_back(make_targets(m, s.query));
      weights.push_back(scoped_weights(m, {}, s.query.mask));
    }
  }
};

Verdict model_numerics() {
  Verdict v{"Model numerics"};
  ModelConfig tiny = ModelConfig::desk_random_wall(2);
  tiny.layers = 1;
  tiny.embed_dim = 8;
  tiny.heads = 1;
  tiny.ff_dim = 16;
  tiny.dropout = 0.0;

  {
    Network<double> net(tiny, 3);
    NumericsBatch b(tiny, EnvConfig::random_wall(2), 3, 17);
    net.params().zero_grad();
    const auto out = net.forward(b.inputs);
    Mat<double> ds, da, de;
    net.loss(out, b.targets, b.weights, &ds, &da, &de);
    net.backward(out, ds, da, de);
    std::vector<std::pair<Param<double>*, Eigen::Index>> coords;
    for (auto& [_, p] : net.params())
      for (Eigen::Index i = 0; i < p.value.size(); ++i) coords.push_back({&p, i});
    Rng rng(11);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(100);
    double worst = 0.0;
    for (auto [p, i] : coords) {
      double& x = p->value.data()[i];
      const double orig = x, h = 1e-6;
      x = orig + h;
      const double up = net.loss(net.forward(b.inputs), b.targets, b.weights).total;
      x = orig - h;
      const double down = net.loss(net.forward(b.inputs), b.targets, b.weights).total;
      x = orig;
      const double numeric = (up - down) / (2 * h), analytic = p->grad.data()[i];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7}));
    }
    v.note("gradient check: worst relative error " + sci(worst) + " over 100 coordinates");
    v.require(worst <= 1e-3, "finite differences agree to 1e-3");
  }
  {
    const ModelConfig desk = ModelConfig::desk_random_wall(2);
    Network<float> net(desk, 5);
    NumericsBatch b(desk, EnvConfig::random_wall(2), 8, 23);
    const auto base = net.forward(b.inputs);
    Rng rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::vector<Transition>> banks;
      for (const auto& s : b.samples) {
        banks.push_back(s.bank.transitions);
        std::shuffle(banks.back().begin(), banks.back().end(), rng);
      }
      auto inputs = b.inputs;
      for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].bank = banks[i];
      const auto perm = net.forward(inputs);
      for (const auto& [x, y] : {std::pair{&base.source_logits, &perm.source_logits},
                                 std::pair{&base.action_logits, &perm.action_logits},
                                 std::pair{&base.end_logits, &perm.end_logits}}) {
        worst = std::max(worst, static_cast<double>((*x - *y).norm() / x->norm()));
      }
    }
    v.note("bank permutation: worst relative logit change " + sci(worst));
    v.require(worst <= 1e-4, "logits invariant to bank order within 1e-4");
  }
  {
    ModelConfig c = tiny;
    c.state_vocab = 36;
    c.idk_enabled = false;
    Network<double> net(c, 1);
    for (auto& [name, p] : net.params())
      if (name.rfind("head.", 0) == 0 && name.find("norm") == std::string::npos) p.value.setZero();
    NumericsBatch b(c, EnvConfig::random_wall(3), 5, 3);
    const LossBreakdown plain = net.loss(net.forward(b.inputs), b.targets, b.weights);
    ModelConfig ci = c;
    ci.idk_enabled = true;
    Network<double> with_idk(ci, 1);
    for (auto& [name, p] : with_idk.params())
      if (name.rfind("head.", 0) == 0 && name.find("norm") == std::string::npos) p.value.setZero();
    NumericsBatch bi(ci, EnvConfig::random_wall(3), 5, 3);
    const LossBreakdown idk = with_idk.loss(with_idk.forward(bi.inputs), bi.targets, bi.weights);
    v.note("uniform outputs: action " + num(plain.action, 7) + " (ln 6 = " + num(std::log(6.0), 7) + "), state " +
           num(idk.end, 7) + " (ln 37 = " + num(std::log(37.0), 7) + ")");
    v.require(std::abs(plain.action - std::log(6.0)) < 1e-6, "uniform 6-way action loss = ln 6");
    v.require(std::abs(idk.end - std::log(37.0)) < 1e-6 && std::abs(idk.source - std::log(37.0)) < 1e-6,
              "uniform 36 + IDK state loss = ln 37");
  }
  return v;
}

// ---------------------------------------------------------------------------

struct DeskContext {
  harness::ExperimentConfig cfg;
  const ModelPredictor* model = nullptr;
  EvalSampler sampler(std::string_view stream) const { return {cfg.env, cfg.mix, derive_seed(cfg.seed, stream)}; }
};

Verdict desk_learning(const DeskContext& d) {
  Verdict v{"Desk-scale learning"};
  const int n = d.cfg.analysis.eval_trials;
  const AccuracyReport rep = eval_accuracy(*d.model, d.sampler("eval"), n);
  const Tally seen = rep.at(QueryKind::Seen, Mask::End);
  const Tally unseen = rep.at(QueryKind::Unseen, Mask::End);
  const Tally unsolv = rep.kind(QueryKind::Unsolvable);
  const double chance = 1.0 / (d.cfg.model.state_vocab + 1);
  // One-sided test that the accuracy exceeds five times chance.
  const double p = binomial_upper_tail(unseen.correct, unseen.total, 5 * chance);
  v.note("seen end " + num(seen.rate(), 3) + " (n " + std::to_string(seen.total) + "), unseen end " +
         num(unseen.rate(), 3) + " (n " + std::to_string(unseen.total) + ", chance " + num(chance, 3) +
         ", P[X >= k | 5x chance] " + sci(p) + "), unsolvable IDK " + num(unsolv.rate(), 3) + " (n " +
         std::to_string(unsolv.total) + ")");
  for (QueryKind k : {QueryKind::Seen, QueryKind::Unseen, QueryKind::Unsolvable}) {
    std::string line = to_string(k) + ":";
    for (Mask m : {Mask::Source, Mask::Action, Mask::End}) line += " " + num(rep.at(k, m).rate(), 3);
    v.note(line);
  }
  v.require(seen.rate() >= 0.90, "seen end-state accuracy >= 90%");
  v.require(unseen.rate() >= 5 * chance && p < 0.01, "unseen end-state accuracy >= 5x chance with p < 0.01");
  v.require(unsolv.rate() > 0.5, "unsolvable IDK rate > 50%");
  return v;
}

Verdict integration_trends(const DeskContext& d) {
  Verdict v{"Desk-scale memory-integration trends"};
  const auto& a = d.cfg.analysis;
  const EntropyTrend e = entropy_vs_integration(*d.model, d.sampler("entropy"), a.entropy_trials);
  v.note("entropy vs path length: rho " + num(e.correlation.rho) + ", p " + sci(e.correlation.p_value) + ", n " +
         std::to_string(e.correlation.n));
  v.require(e.correlation.n >= 2000 && e.correlation.rho > 0 && e.correlation.p_value < 0.01,
            "entropy rises with integration path (rho > 0, p < 0.01, n = 2000)");
  const KlShortcut kl = kl_shortcut(*d.model, d.sampler("kl"), a.kl_trials, a.kl_min_path);
  v.note("KL informative " + num(kl.test.mean_a) + " vs non-informative " + num(kl.test.mean_b) + ", t " +
         num(kl.test.t, 2) + ", p " + sci(kl.test.p_value) + ", n " + std::to_string(kl.informative.size()));
  v.require(kl.informative.size() >= 2000 && kl.test.mean_a > kl.test.mean_b && kl.test.p_value < 0.01,
            "informative memories move the prediction more (p < 0.01, n = 2000)");
  const DensitySweep s = density_sweep(*d.model, d.sampler("density"), a.density_fractions, a.density_trials);
  std::string pts;
  for (const auto& p : s.points) pts += " " + num(p.mean_bank_size, 1) + ":" + num(p.accuracy.rate(), 3);
  v.note("density sweep (bank size:accuracy)" + pts + ", rho " + num(s.correlation.rho));
  v.require(s.points.size() >= 4 && s.correlation.rho > 0, "accuracy rises with bank size over >= 4 sizes");
  return v;
}

double lattice_recovery(bool rolled) {
  const int side = 12, dim = 50;
  Rng rng(21);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = nd(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  std::vector<Eigen::VectorXf> pts;
  std::vector<Eigen::Vector2d> truth;
  const double radius = side / std::numbers::pi;  // half a cylinder
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
      if (rolled) {
        x[0] = radius * std::cos(a / radius);
        x[1] = radius * std::sin(a / radius);
        x[2] = b;
      } else {
        x[0] = a;
        x[1] = b;
      }
      pts.push_back((q * x).cast<float>());
      truth.push_back({static_cast<double>(a), static_cast<double>(b)});
    }
  const EmbeddingResult r = isomap_embed(pts, 8, 3, Metric::Euclidean);
  std::vector<double> emb, tru;
  for (std::size_t i = 0; i < r.kept.size(); ++i)
    for (std::size_t j = i + 1; j < r.kept.size(); ++j) {
      emb.push_back((r.coords.row(i) - r.coords.row(j)).norm());
      tru.push_back((truth[r.kept[i]] - truth[r.kept[j]]).norm());
    }
  return r.dropped == 0 ? pearson(emb, tru) : 0.0;
}

Verdict latent_checks(const DeskContext& d) {
  Verdict v{"Latent-map checks"};
  const double flat = lattice_recovery(false), rolled = lattice_recovery(true);
  v.note("ISOMAP lattice recovery: flat " + num(flat) + ", rolled " + num(rolled));
  v.require(flat >= 0.95 && rolled >= 0.95, "ISOMAP recovers the synthetic lattice (r >= 0.95)");

  const auto& a = d.cfg.analysis;
  const int layer = d.cfg.agent.heuristic_layer ? d.cfg.agent.heuristic_layer : d.cfg.model.middle_layer();
  // Radius selected once per model on its first bank, then reused.
  auto correlate = [&](const Predictor& model, std::optional<double>& radius) {
    Rng pair_rng(derive_seed(d.cfg.seed, "latent_pairs"));
    const LatentTableFn table = [&](const Environment& env, const MemoryBank& bank) {
      const auto nodes = state_action_pairs(bank);
      const Eigen::MatrixXd dist = cosine_distances(node_activations(model, bank, nodes, layer));
      if (!radius) {
        const auto states = bank.unique_states();
        std::vector<std::pair<StateId, StateId>> pairs;
        for (int i = 0; i < d.cfg.agent.pairs_per_env; ++i) {
          const int x = uniform_int(pair_rng, 0, static_cast<int>(states.size()) - 1);
          int y = uniform_int(pair_rng, 0, static_cast<int>(states.size()) - 2);
          if (y >= x) ++y;
          pairs.emplace_back(states[x], states[y]);
        }
        radius = select_r_latent(model, bank, env, radius_grid(dist), pairs,
                                 [&](double r) { return build_heuristic_table(nodes, dist, r); },
                                 d.cfg.agent.nav_cap)
                     .radius;
      }
      return build_heuristic_table(nodes, dist, *radius);
    };
    return latent_distance_correlation(d.sampler("latent"), a.latent_envs, a.latent_pairs, table);
  };
  std::optional<double> radius = d.cfg.agent.r_latent, base_radius = d.cfg.agent.r_latent;
  const LatentCorrelation lc = correlate(*d.model, radius);
  v.note("latent vs physical path length: R^2 " + num(lc.fit.r2) + " over " + std::to_string(lc.fit.n) +
         " pairs in " + std::to_string(a.latent_envs) + " environments (layer " + std::to_string(layer) +
         ", r_latent " + num(radius.value_or(0.0)) + ", " + std::to_string(lc.excluded) + " excluded)");
  const Network<float> untrained(d.cfg.model, derive_seed(d.cfg.seed, "init"));
  const LatentCorrelation base = correlate(ModelPredictor(untrained), base_radius);
  v.note("untrained baseline: R^2 " + num(base.fit.r2) + " over " + std::to_string(base.fit.n) + " pairs (r_latent " +
         num(base_radius.value_or(0.0)) + ", " + std::to_string(base.excluded) + " excluded)");
  v.require(lc.fit.r2 >= 0.5, "latent/physical R^2 >= 0.5");

  ProbeConfig pc;
  pc.train = a.probe_train;
  pc.test = a.probe_test;
  pc.runs = a.probe_runs;
  pc.epochs = a.probe_epochs;
  pc.lr = a.probe_lr;
  pc.seed = derive_seed(d.cfg.seed, "probe");
  const int probe_layer = default_activation_layer(d.cfg.model.layers, Mask::Action);
  const ProbeResult real = distance_probe(*d.model, d.sampler("probe_data"), probe_layer, pc);
  pc.shuffle_labels = true;
  const ProbeResult shuf = distance_probe(*d.model, d.sampler("probe_data"), probe_layer, pc);
  v.note("distance probe (layer " + std::to_string(probe_layer) + "): " + num(real.mean) + " +/- " + num(real.sd) +
         ", shuffled labels " + num(shuf.mean) + " +/- " + num(shuf.sd));
  v.require(real.mean >= 0.75, "distance probe >= 75%");
  v.require(std::abs(shuf.mean - 0.5) <= 0.02, "shuffled-label probe at 50% +/- 2%");
  return v;
}

Verdict exploration_adaptation() {
  Verdict v{"Exploration/adaptation with the uncertainty oracle"};
  PlanConfig pc;
  ExploreConfig ec;
  int covered = 0, worst_steps = 0;
  const int arenas = 20;
  for (int i = 0; i < arenas; ++i) {
    const Environment env = open_env(2, derive_seed(31, i));
    Rng rng(derive_seed(32, i));
    const LocId start = uniform_int(rng, 0, env.graph().num_locations() - 1);
    const ExploreResult r = explore_episode(BankOracle(env), env, start, 40, ec, pc);
    const int seen = r.unique_states.empty() ? 1 : r.unique_states.back();
    if (seen == 19) {
      ++covered;
      const auto it = std::find(r.unique_states.begin(), r.unique_states.end(), 19);
      worst_steps = std::max(worst_steps, static_cast<int>(it - r.unique_states.begin()));
    }
  }
  v.note("full coverage in " + std::to_string(covered) + "/" + std::to_string(arenas) +
         " radius-2 arenas, slowest after " + std::to_string(worst_steps) + " steps");
  v.require(covered == arenas, "every state of a radius-2 arena visited within 40 steps");

  // Straight two-step routes whose middle cell becomes an obstacle.
  int recovered = 0, instances = 0;
  std::ostringstream log;
  for (int i = 0; instances < 20; ++i) {
    const Environment env = open_env(2, derive_seed(41, i));
    const HexGraph& g = env.graph();
    Rng rng(derive_seed(42, i));
    const LocId a = uniform_int(rng, 0, g.num_locations() - 1);
    const ActionId dir = uniform_int(rng, 0, kNumActions - 1);
    const LocId mid = g.neighbor(a, dir);
    if (mid == kNoLoc) continue;
    const LocId b = g.neighbor(mid, dir);
    if (b == kNoLoc) continue;
    const Environment changed = apply_world_change(env, {{g.coord(mid)}, {}});
    const MemoryBank bank = sample_memory_bank(env, derive_seed(43, i));
    const AdaptOutcome r = adaptive_navigate(BankOracle(env), bank, changed, env.state_of(a), env.state_of(b), pc, ec);
    ++instances;
    recovered += r.success;
    log << (r.success ? "" : " failed#" + std::to_string(instances));
  }
  v.note("recovered on " + std::to_string(recovered) + "/" + std::to_string(instances) + " obstacle insertions" +
         log.str());
  v.require(recovered == 20, "adaptive_navigate recovers on 20/20 instances");
  return v;
}

Verdict astar_discipline() {
  Verdict v{"A* discipline"};
  PlanConfig pc;
  // Wall-free radius-3 arena: uniform-cost search must widen beyond the path.
  int open_pairs = 0, open_strict = 0, cost_mismatch = 0;
  long open_d = 0, open_a = 0;
  for (int i = 0; i < 5; ++i) {
    const Environment env = open_env(3, derive_seed(51, i));
    MemoryBank bank;
    for (LocId l : env.free_locations())
      for (ActionId a = 0; a < kNumActions; ++a) bank.transitions.push_back({env.state_of(l), a, env.state_of(step(env, l, a))});
    const GroundTruthPredictor gt(env, true);
    const HeuristicTable h = ground_truth_table(env, bank);
    for (LocId s : env.free_locations()) {
      const auto dist = bfs_distances(env, s);
      for (LocId t : env.free_locations()) {
        if (dist[t] < 3) continue;
        const PlanResult dj = find_path(gt, bank, env.state_of(s), env.state_of(t), pc);
        const PlanResult as = find_path(gt, bank, env.state_of(s), env.state_of(t), pc, &h);
        ++open_pairs;
        cost_mismatch += !(dj.success && as.success && dj.cost == as.cost);
        open_strict += as.expansions < dj.expansions;
        open_d += dj.expansions;
        open_a += as.expansions;
      }
    }
  }
  v.note("open arenas: " + std::to_string(open_strict) + "/" + std::to_string(open_pairs) +
         " pairs of length >= 3 strictly fewer expansions (total " + std::to_string(open_a) + " vs " +
         std::to_string(open_d) + ")");
  v.require(open_strict == open_pairs, "A* strictly fewer expansions on every open-arena pair of length >= 3");

  // Random Wall rooms: equal cost everywhere; strictly fewer whenever
  // uniform-cost search expands more than the path itself.
  int rw_pairs = 0, rw_strict = 0, rw_at_bound = 0, rw_violations = 0;
  long rw_d = 0, rw_a = 0;
  for (int e = 0; e < 50; ++e) {
    const Environment env = generate_environment(EnvConfig::random_wall(3), derive_seed(61, e));
    MemoryBank bank;
    for (LocId l : env.free_locations())
      for (ActionId a = 0; a < kNumActions; ++a) bank.transitions.push_back({env.state_of(l), a, env.state_of(step(env, l, a))});
    const GroundTruthPredictor gt(env, true);
    const HeuristicTable h = ground_truth_table(env, bank);
    for (LocId s : env.free_locations()) {
      const auto dist = bfs_distances(env, s);
      for (LocId t : env.free_locations()) {
        if (dist[t] < 3) continue;
        const PlanResult dj = find_path(gt, bank, env.state_of(s), env.state_of(t), pc);
        const PlanResult as = find_path(gt, bank, env.state_of(s), env.state_of(t), pc, &h);
        ++rw_pairs;
        cost_mismatch += !(dj.success && as.success && dj.cost == as.cost);
        rw_d += dj.expansions;
        rw_a += as.expansions;
        if (as.expansions < dj.expansions) ++rw_strict;
        else if (dj.expansions <= dist[t]) ++rw_at_bound;
        else ++rw_violations;
      }
    }
  }
  v.note("random wall: " + std::to_string(rw_strict) + "/" + std::to_string(rw_pairs) +
         " strictly fewer; " + std::to_string(rw_at_bound) +
         " where uniform-cost search already expands only the path; total " + std::to_string(rw_a) + " vs " +
         std::to_string(rw_d));
  v.require(cost_mismatch == 0, "A* and Dijkstra return equal-cost paths (" + std::to_string(cost_mismatch) +
                                    " mismatches)");
  v.require(rw_violations == 0, "no random-wall pair where A* fails to improve on a non-minimal search (" +
                                    std::to_string(rw_violations) + ")");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance report"};
  std::string config, checkpoint, report_path;
  bool strict = false;
  std::vector<std::string> only;
  app.add_option("--config", config, "Desk config")->required()->check(CLI::ExistingFile);
  app.add_option("--checkpoint", checkpoint, "Desk checkpoint (defaults to <output>/checkpoint.bin)");
  app.add_option("--only", only, "Run only criteria whose name contains one of these words");
  app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
  app.add_option("--report", report_path, "Also write the report to this file");
  CLI11_PARSE(app, argc, argv);

  DeskContext desk;
  try {
    desk.cfg = harness::load_config(config, {});
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  const std::filesystem::path ck =
      checkpoint.empty() ? harness::output_path(desk.cfg) / "checkpoint.bin" : std::filesystem::path(checkpoint);

  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"environment", environment_suite},
      {"planner", planner_oracle},
      {"numerics", model_numerics},
      {"learning", [&] { return desk_learning(desk); }},
      {"trends", [&] { return integration_trends(desk); }},
      {"latent", [&] { return latent_checks(desk); }},
      {"exploration", exploration_adaptation},
      {"astar", astar_discipline},
  };
  std::optional<harness::LoadedCheckpoint> loaded;
  std::optional<ModelPredictor> model;
  std::ofstream report_file;
  if (!report_path.empty()) report_file.open(report_path);
  auto emit = [&](const std::string& text) {
    std::cout << text << std::flush;
    if (report_file) report_file << text << std::flush;
  };
  int failed = 0;
  for (const auto& [key, fn] : criteria) {
    if (!only.empty() && std::none_of(only.begin(), only.end(), [&](const std::string& w) { return key.find(w) != std::string::npos; }))
      continue;
    const bool needs_model = key == "learning" || key == "trends" || key == "latent";
    if (needs_model && !model) {
      try {
        loaded.emplace(harness::load_checkpoint(ck));
      } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 4;
      }
      model.emplace(loaded->net);
      desk.model = &*model;
    }
    const auto t0 = Clock::now();
    Verdict v = fn();
    emit(std::string(v.pass ? "PASS" : "FAIL") + "  " + v.name + "  (" + num(seconds_since(t0), 1) + " s)\n" +
         v.detail.str());
    failed += !v.pass;
  }
  emit(failed ? std::to_string(failed) + " criteria failed\n" : "all criteria passed\n");
  return strict && failed ? 1 : 0;
}
