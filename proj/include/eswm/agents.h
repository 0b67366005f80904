#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "eswm/episodic.h"
#include "eswm/predictor.h"

namespace eswm {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PlanConfig {
  int t_max = 20;
  double action_cost = 1.0;
};

struct ExploreConfig {
  double beta = 0.2;
  double gamma = 0.1;
  double confidence_threshold = 0.8;
  int lookahead_depth = 10;
};

void validate(const PlanConfig& cfg);
void validate(const ExploreConfig& cfg);

// ---------------------------------------------------------------------------
// Oracles

/// Exact dynamics of `env`; ignores the memory bank and never answers IDK.
/// Inverse queries (masked source or action) spread probability uniformly
/// over all consistent answers.
class GroundTruthPredictor final : public Predictor {
 public:
  GroundTruthPredictor(const Environment& env, bool idk_classes)
      : env_(env), idk_(idk_classes) {}
  std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> queries,
                                  bool capture_activations = false) const override;
  int state_vocab() const override { return env_.vocab_size(); }
  bool has_idk() const override { return idk_; }

 private:
  const Environment& env_;
  bool idk_;
};

/// Knows the layout of a reference environment but only the states present
/// in the bank: a move whose endpoints are not both known states is IDK.
/// Transitions stored in the bank take precedence over the layout, so
/// experienced collisions override a stale reference.
class BankOracle final : public Predictor {
 public:
  explicit BankOracle(const Environment& reference) : env_(reference) {}
  std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> queries,
                                  bool capture_activations = false) const override;
  int state_vocab() const override { return env_.vocab_size(); }
  bool has_idk() const override { return true; }

 private:
  const Environment& env_;
};

/// Shortest-path step counts from `from` over free cells (-1: unreachable).
std::vector<int> bfs_distances(const Environment& env, LocId from);

// ---------------------------------------------------------------------------
// Planning

/// Geodesic distances between (state, action) nodes.
class HeuristicTable {
 public:
  HeuristicTable() = default;
  HeuristicTable(std::vector<std::pair<StateId, ActionId>> nodes, Eigen::MatrixXd dist,
                 double radius);

  const std::vector<std::pair<StateId, ActionId>>& nodes() const { return nodes_; }
  const Eigen::MatrixXd& table() const { return dist_; }
  double radius() const { return radius_; }
  int node_index(StateId s, ActionId a) const;
  bool covers(StateId s) const;
  /// State-level distance: mean over all action-slot pairs of the finite
  /// node distances; kInf when none is finite.
  double state_distance(StateId x, StateId y) const;

 private:
  std::vector<std::pair<StateId, ActionId>> nodes_;
  Eigen::MatrixXd dist_;
  double radius_ = 0.0;
  std::vector<std::vector<int>> index_;  // [state][action] -> node
};

/// All (state, action) pairs over the bank's unique states.
std::vector<std::pair<StateId, ActionId>> state_action_pairs(const MemoryBank& bank);

/// Query-token activations of end-state predictions for every node. `layer`
/// is 1-based.
std::vector<Eigen::VectorXf> node_activations(const Predictor& model, const MemoryBank& bank,
                                              const std::vector<std::pair<StateId, ActionId>>& nodes,
                                              int layer);

Eigen::MatrixXd cosine_distances(const std::vector<Eigen::VectorXf>& points);

/// Graph with an edge wherever the distance is within `radius`, weighted by
/// that distance; all-pairs shortest paths fill the table.
HeuristicTable build_heuristic_table(const std::vector<std::pair<StateId, ActionId>>& nodes,
                                     const Eigen::MatrixXd& distances, double radius);

HeuristicTable compute_heuristic_table(const Predictor& model, const MemoryBank& bank,
                                       double radius, int layer);

/// Table whose state-level distance is the true shortest-path length.
HeuristicTable ground_truth_table(const Environment& env, const MemoryBank& bank);

struct PlanResult {
  bool success = false;
  std::vector<ActionId> actions;
  std::vector<StateId> states;  // predicted, starting with the start state
  int expansions = 0;
  double cost = 0.0;
};

/// Uniform-cost search over predicted transitions, or A* when a heuristic is
/// given (priority = cost + state-level distance to the goal; ties go to the
/// deeper node). Predicted IDK successors are never expanded.
PlanResult find_path(const Predictor& model, const MemoryBank& bank, StateId start, StateId goal,
                     const PlanConfig& cfg, const HeuristicTable* heuristic = nullptr);

struct NavResult {
  bool success = false;
  std::vector<ActionId> actions;
  std::vector<StateId> states;
  int steps() const { return static_cast<int>(actions.size()); }
};

/// Moves to the predicted successor closest to the goal under the table.
/// With `env` the moves are executed and the real observation is used;
/// without, the agent follows its own predictions.
NavResult greedy_navigate(const Predictor& model, const MemoryBank& bank,
                          const HeuristicTable& table, StateId start, StateId goal, int cap,
                          const Environment* env = nullptr);

struct RadiusScore {
  double radius = 0.0;
  double success = 0.0;
  double optimality = 0.0;
};

struct RadiusSelection {
  double radius = 0.0;
  std::vector<RadiusScore> scores;
};

using TableBuilder = std::function<HeuristicTable(double radius)>;

/// 20 evenly spaced radii over the 5th..95th percentile of the off-diagonal
/// distances.
std::vector<double> radius_grid(const Eigen::MatrixXd& distances, int count = 20);

/// Greedy navigation (cap 20) in `env` for each candidate; best success,
/// then optimality, then smaller radius.
RadiusSelection select_r_latent(const Predictor& model, const MemoryBank& bank,
                                const Environment& env, const std::vector<double>& candidates,
                                const std::vector<std::pair<StateId, StateId>>& pairs,
                                const TableBuilder& build, int cap = 20);

// ---------------------------------------------------------------------------
// Exploration

struct ExploreChoice {
  ActionId action = 0;
  double score = 0.0;
};

/// One step of uncertainty-driven exploration; nullopt when every action is
/// predicted confidently.
std::optional<ExploreChoice> explore_step(const Predictor& model, const MemoryBank& bank,
                                          StateId s, const ExploreConfig& cfg);

/// Scores the six end-state predictions; exposed for testing.
std::optional<ExploreChoice> choose_exploration_action(const std::vector<Prediction>& preds,
                                                       const ExploreConfig& cfg);

/// Plan to the nearest state (over confident predictions, up to the lookahead
/// depth) from which explore_step would act.
std::optional<std::vector<ActionId>> frontier_lookahead(const Predictor& model,
                                                        const MemoryBank& bank, StateId s,
                                                        const ExploreConfig& ecfg,
                                                        const PlanConfig& pcfg);

struct ExploreResult {
  MemoryBank bank;
  std::vector<LocId> trace;        // locations, starting with the start
  std::vector<int> unique_states;  // distinct states seen after each step
  bool saturated = false;
};

ExploreResult explore_episode(const Predictor& model, const Environment& env, LocId start,
                              int budget, const ExploreConfig& ecfg, const PlanConfig& pcfg,
                              MemoryBank initial = {});

/// Nearest-neighbour tour over the free cells, knowing the full layout
/// (TSP approximation).
ExploreResult oracle_explore(const Environment& env, LocId start, int budget);

// ---------------------------------------------------------------------------
// Adaptation

struct AdaptConfig {
  int local_explore_budget = 10;
  int global_budget = 100;
};

struct AdaptOutcome {
  bool success = false;
  int steps = 0;
  int replans = 0;
  int mismatches = 0;
  std::vector<LocId> trace;
};

/// Plans with the bank, executes in `env`; on a surprise, forgets every
/// memory mentioning the falsified observation, explores locally and
/// replans.
AdaptOutcome adaptive_navigate(const Predictor& model, const MemoryBank& bank,
                               const Environment& env, StateId start, StateId goal,
                               const PlanConfig& pcfg, const ExploreConfig& ecfg,
                               const AdaptConfig& acfg = {});

}  // namespace eswm
