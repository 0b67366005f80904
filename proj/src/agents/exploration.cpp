#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "eswm/agents.h"

namespace eswm {

namespace {

std::vector<Prediction> successors(const Predictor& model, const MemoryBank& bank, StateId s) {
  std::vector<MaskedQuery> queries;
  for (ActionId a = 0; a < kNumActions; ++a) queries.push_back({{s, a, kNoState}, Mask::End});
  return model.predict(bank, queries);
}

void record(ExploreResult& r, std::set<StateId>& seen, LocId loc, StateId s) {
  seen.insert(s);
  r.trace.push_back(loc);
  r.unique_states.push_back(static_cast<int>(seen.size()));
}

}  // namespace

std::optional<ExploreChoice> choose_exploration_action(const std::vector<Prediction>& preds,
                                                       const ExploreConfig& cfg) {
  std::optional<ExploreChoice> best;
  for (int a = 0; a < static_cast<int>(preds.size()); ++a) {
    const Prediction& p = preds[a];
    double score;
    if (p.idk) score = 1.0 - cfg.beta * p.entropy;
    else if (p.max_prob <= cfg.confidence_threshold) score = cfg.gamma * p.entropy;
    else continue;
    if (!best || score > best->score) best = ExploreChoice{a, score};
  }
  return best;
}

std::optional<ExploreChoice> explore_step(const Predictor& model, const MemoryBank& bank,
                                          StateId s, const ExploreConfig& cfg) {
  return choose_exploration_action(successors(model, bank, s), cfg);
}

std::optional<std::vector<ActionId>> frontier_lookahead(const Predictor& model,
                                                        const MemoryBank& bank, StateId s,
                                                        const ExploreConfig& ecfg,
                                                        const PlanConfig& pcfg) {
  if (ecfg.lookahead_depth <= 0) return std::nullopt;
  std::queue<std::pair<StateId, int>> frontier;
  std::set<StateId> visited{s};
  frontier.push({s, 0});
  while (!frontier.empty()) {
    const auto [u, depth] = frontier.front();
    frontier.pop();
    if (depth >= ecfg.lookahead_depth) continue;
    const auto preds = successors(model, bank, u);
    for (ActionId a = 0; a < kNumActions; ++a) {
      const Prediction& p = preds[a];
      if (p.idk || p.max_prob <= ecfg.confidence_threshold || p.top == u) continue;
      const StateId v = p.top;
      if (!visited.insert(v).second) continue;
      if (choose_exploration_action(successors(model, bank, v), ecfg)) {
        PlanConfig cfg = pcfg;
        cfg.t_max = std::max(cfg.t_max, depth + 1);
        const PlanResult plan = find_path(model, bank, s, v, cfg);
        if (plan.success && !plan.actions.empty()) return plan.actions;
      }
      frontier.push({v, depth + 1});
    }
  }
  return std::nullopt;
}

ExploreResult explore_episode(const Predictor& model, const Environment& env, LocId start,
                              int budget, const ExploreConfig& ecfg, const PlanConfig& pcfg,
                              MemoryBank initial) {
  validate(ecfg);
  if (budget < 0) throw std::invalid_argument("exploration budget must be >= 0");
  if (env.is_wall(start)) throw std::invalid_argument("exploration must start on a free cell");
  ExploreResult r;
  r.bank = std::move(initial);
  std::set<StateId> seen;
  LocId loc = start;
  StateId s = env.state_of(loc);
  record(r, seen, loc, s);

  int t = 0;
  while (t < budget) {
    std::vector<ActionId> actions;
    std::vector<StateId> expected;
    if (auto choice = explore_step(model, r.bank, s, ecfg)) {
      actions.push_back(choice->action);
    } else {
      auto plan = frontier_lookahead(model, r.bank, s, ecfg, pcfg);
      if (!plan) {
        r.saturated = true;
        break;
      }
      actions = *plan;
      // Predicted states along the plan, to detect deviations.
      StateId u = s;
      for (ActionId a : actions) {
        const auto p = model.predict_one(r.bank, {{u, a, kNoState}, Mask::End});
        u = p.top;
        expected.push_back(u);
      }
    }
    for (std::size_t i = 0; i < actions.size() && t < budget; ++i) {
      const LocId next = step(env, loc, actions[i]);
      const StateId ns = env.state_of(next);
      const Transition tr{s, actions[i], ns};
      if (std::find(r.bank.transitions.begin(), r.bank.transitions.end(), tr) ==
          r.bank.transitions.end()) {
        r.bank.transitions.push_back(tr);
      }
      ++t;
      loc = next;
      s = ns;
      record(r, seen, loc, s);
      if (!expected.empty() && expected[i] != ns) break;
    }
  }
  return r;
}

ExploreResult oracle_explore(const Environment& env, LocId start, int budget) {
  if (env.is_wall(start)) throw std::invalid_argument("exploration must start on a free cell");
  const int n = env.graph().num_locations();
  ExploreResult r;
  std::set<StateId> seen;
  std::vector<bool> visited(n, false);
  LocId loc = start;
  visited[loc] = true;
  record(r, seen, loc, env.state_of(loc));

  int t = 0;
  while (t < budget) {
    // BFS to the nearest unvisited free cell.
    std::vector<int> parent(n, -2), via(n, -1);
    std::queue<LocId> q;
    parent[loc] = -1;
    q.push(loc);
    LocId target = kNoLoc;
    while (!q.empty() && target == kNoLoc) {
      const LocId u = q.front();
      q.pop();
      for (ActionId a = 0; a < kNumActions; ++a) {
        const LocId v = step(env, u, a);
        if (parent[v] != -2) continue;
        parent[v] = u;
        via[v] = a;
        if (!visited[v]) {
          target = v;
          break;
        }
        q.push(v);
      }
    }
    if (target == kNoLoc) {
      r.saturated = true;
      break;
    }
    std::vector<ActionId> path;
    for (LocId v = target; v != loc; v = parent[v]) path.push_back(via[v]);
    std::reverse(path.begin(), path.end());
    for (ActionId a : path) {
      if (t >= budget) break;
      const LocId next = step(env, loc, a);
      const Transition tr{env.state_of(loc), a, env.state_of(next)};
      if (std::find(r.bank.transitions.begin(), r.bank.transitions.end(), tr) ==
          r.bank.transitions.end()) {
        r.bank.transitions.push_back(tr);
      }
      ++t;
      loc = next;
      visited[loc] = true;
      record(r, seen, loc, env.state_of(loc));
    }
  }
  return r;
}

AdaptOutcome adaptive_navigate(const Predictor& model, const MemoryBank& initial,
                               const Environment& env, StateId start, StateId goal,
                               const PlanConfig& pcfg, const ExploreConfig& ecfg,
                               const AdaptConfig& acfg) {
  validate(pcfg);
  validate(ecfg);
  AdaptOutcome out;
  MemoryBank bank = initial;
  LocId loc = env.loc_of_state(start);
  if (loc == kNoLoc || env.is_wall(loc)) throw std::invalid_argument("adaptive_navigate: bad start");
  StateId s = start;
  out.trace.push_back(loc);

  auto act = [&](ActionId a) {
    const LocId next = step(env, loc, a);
    const StateId ns = env.state_of(next);
    const Transition tr{s, a, ns};
    if (std::find(bank.transitions.begin(), bank.transitions.end(), tr) == bank.transitions.end()) {
      bank.transitions.push_back(tr);
    }
    loc = next;
    s = ns;
    ++out.steps;
    out.trace.push_back(loc);
  };
  // Returns true when anything was done.
  auto explore_locally = [&]() {
    bool moved = false;
    for (int k = 0; k < acfg.local_explore_budget && out.steps < acfg.global_budget && s != goal; ++k) {
      const auto choice = explore_step(model, bank, s, ecfg);
      if (choice) {
        act(choice->action);
      } else {
        const auto route = frontier_lookahead(model, bank, s, ecfg, pcfg);
        if (!route || route->empty()) break;
        act(route->front());
      }
      moved = true;
    }
    return moved;
  };

  while (s != goal && out.steps < acfg.global_budget) {
    const PlanResult plan = find_path(model, bank, s, goal, pcfg);
    if (!plan.success) {
      if (!explore_locally()) break;
      ++out.replans;
      continue;
    }
    bool surprised = false;
    for (std::size_t i = 0; i < plan.actions.size() && out.steps < acfg.global_budget; ++i) {
      const StateId predicted = plan.states[i + 1];
      const ActionId a = plan.actions[i];
      const LocId next = step(env, loc, a);
      const StateId ns = env.state_of(next);
      if (ns != predicted) {
        ++out.mismatches;
        std::erase_if(bank.transitions, [&](const Transition& m) {
          return m.source == predicted || m.end == predicted;
        });
        act(a);
        surprised = true;
        break;
      }
      act(a);
    }
    if (s == goal) break;
    if (surprised) {
      explore_locally();
      ++out.replans;
    }
  }
  out.success = s == goal;
  return out;
}

}  // namespace eswm
