#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "eswm/agents.h"

namespace eswm {

void validate(const PlanConfig& c) {
  if (c.t_max < 1) throw std::invalid_argument("agent.t_max must be >= 1");
  if (!(c.action_cost > 0.0)) throw std::invalid_argument("agent.action_cost must be > 0");
}

void validate(const ExploreConfig& c) {
  if (!(c.confidence_threshold > 0.0 && c.confidence_threshold < 1.0)) {
    throw std::invalid_argument("agent.confidence_threshold must lie in (0, 1)");
  }
  if (c.lookahead_depth < 0) throw std::invalid_argument("agent.lookahead_depth must be >= 0");
}

HeuristicTable::HeuristicTable(std::vector<std::pair<StateId, ActionId>> nodes,
                               Eigen::MatrixXd dist, double radius)
    : nodes_(std::move(nodes)), dist_(std::move(dist)), radius_(radius) {
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    const auto [s, a] = nodes_[i];
    if (s < 0 || a < 0 || a >= kNumActions) throw std::invalid_argument("bad heuristic node");
    if (s >= static_cast<int>(index_.size())) index_.resize(s + 1, std::vector<int>(kNumActions, -1));
    index_[s][a] = i;
  }
}

int HeuristicTable::node_index(StateId s, ActionId a) const {
  if (s < 0 || s >= static_cast<int>(index_.size()) || a < 0 || a >= kNumActions) return -1;
  return index_[s][a];
}

bool HeuristicTable::covers(StateId s) const {
  for (ActionId a = 0; a < kNumActions; ++a)
    if (node_index(s, a) >= 0) return true;
  return false;
}

double HeuristicTable::state_distance(StateId x, StateId y) const {
  if (x == y) return 0.0;
  double sum = 0.0;
  int n = 0;
  for (ActionId a = 0; a < kNumActions; ++a) {
    const int i = node_index(x, a);
    if (i < 0) continue;
    for (ActionId b = 0; b < kNumActions; ++b) {
      const int j = node_index(y, b);
      if (j < 0 || !std::isfinite(dist_(i, j))) continue;
      sum += dist_(i, j);
      ++n;
    }
  }
  return n ? sum / n : kInf;
}

std::vector<std::pair<StateId, ActionId>> state_action_pairs(const MemoryBank& bank) {
  std::vector<std::pair<StateId, ActionId>> out;
  for (StateId s : bank.unique_states())
    for (ActionId a = 0; a < kNumActions; ++a) out.push_back({s, a});
  return out;
}

std::vector<Eigen::VectorXf> node_activations(const Predictor& model, const MemoryBank& bank,
                                              const std::vector<std::pair<StateId, ActionId>>& nodes,
                                              int layer) {
  std::vector<MaskedQuery> queries;
  for (auto [s, a] : nodes) queries.push_back({{s, a, kNoState}, Mask::End});
  const auto preds = model.predict(bank, queries, true);
  std::vector<Eigen::VectorXf> out;
  for (const Prediction& p : preds) {
    if (layer < 1 || layer > static_cast<int>(p.activations.size())) {
      throw std::invalid_argument("activation layer " + std::to_string(layer) +
                                  " not available from this predictor");
    }
    out.push_back(p.activations[layer - 1]);
  }
  return out;
}

Eigen::MatrixXd cosine_distances(const std::vector<Eigen::VectorXf>& points) {
  const int n = static_cast<int>(points.size());
  std::vector<Eigen::VectorXd> unit;
  for (const auto& p : points) {
    Eigen::VectorXd v = p.cast<double>();
    const double norm = v.norm();
    unit.push_back(norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(v.size()));
  }
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::max(0.0, 1.0 - unit[i].dot(unit[j]));
  }
  return d;
}

HeuristicTable build_heuristic_table(const std::vector<std::pair<StateId, ActionId>>& nodes,
                                     const Eigen::MatrixXd& distances, double radius) {
  const int n = static_cast<int>(nodes.size());
  if (distances.rows() != n || distances.cols() != n) {
    throw std::invalid_argument("distance matrix does not match the node count");
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Constant(n, n, kInf);
  for (int i = 0; i < n; ++i) {
    g(i, i) = 0.0;
    for (int j = 0; j < n; ++j)
      if (i != j && distances(i, j) <= radius) g(i, j) = distances(i, j);
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double dik = g(i, k);
      if (!std::isfinite(dik)) continue;
      for (int j = 0; j < n; ++j) g(i, j) = std::min(g(i, j), dik + g(k, j));
    }
  return HeuristicTable(nodes, std::move(g), radius);
}

HeuristicTable compute_heuristic_table(const Predictor& model, const MemoryBank& bank,
                                       double radius, int layer) {
  if (bank.empty()) throw std::invalid_argument("heuristic table needs a non-empty bank");
  const auto nodes = state_action_pairs(bank);
  return build_heuristic_table(nodes, cosine_distances(node_activations(model, bank, nodes, layer)),
                               radius);
}

HeuristicTable ground_truth_table(const Environment& env, const MemoryBank& bank) {
  const auto nodes = state_action_pairs(bank);
  const int n = static_cast<int>(nodes.size());
  Eigen::MatrixXd d(n, n);
  std::unordered_map<StateId, std::vector<int>> cache;
  for (int i = 0; i < n; ++i) {
    const StateId x = nodes[i].first;
    auto it = cache.find(x);
    if (it == cache.end()) {
      const LocId l = env.loc_of_state(x);
      it = cache.emplace(x, l == kNoLoc ? std::vector<int>() : bfs_distances(env, l)).first;
    }
    for (int j = 0; j < n; ++j) {
      const LocId m = env.loc_of_state(nodes[j].first);
      const int dist = (it->second.empty() || m == kNoLoc) ? -1 : it->second[m];
      d(i, j) = dist < 0 ? kInf : dist;
    }
  }
  return HeuristicTable(nodes, std::move(d), 0.0);
}

PlanResult find_path(const Predictor& model, const MemoryBank& bank, StateId start, StateId goal,
                     const PlanConfig& cfg, const HeuristicTable* heuristic) {
  validate(cfg);
  struct Entry {
    double f, g;
    int depth;
    StateId u;
    long seq;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;
    return a.seq > b.seq;
  };
  auto h = [&](StateId v) {
    if (!heuristic || !heuristic->covers(v)) return 0.0;
    return heuristic->state_distance(v, goal);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  std::unordered_map<StateId, double> cost{{start, 0.0}};
  std::unordered_map<StateId, std::pair<StateId, ActionId>> parent;
  long seq = 0;
  open.push({h(start), 0.0, 0, start, seq++});

  PlanResult result;
  std::vector<MaskedQuery> queries(kNumActions);
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    if (e.g > cost[e.u]) continue;
    if (e.u == goal) {
      result.success = true;
      result.cost = e.g;
      for (StateId v = goal; v != start; v = parent[v].first) {
        result.actions.push_back(parent[v].second);
        result.states.push_back(v);
      }
      result.states.push_back(start);
      std::reverse(result.actions.begin(), result.actions.end());
      std::reverse(result.states.begin(), result.states.end());
      return result;
    }
    if (e.depth >= cfg.t_max) continue;
    ++result.expansions;
    for (ActionId a = 0; a < kNumActions; ++a) queries[a] = {{e.u, a, kNoState}, Mask::End};
    const auto preds = model.predict(bank, queries);
    for (ActionId a = 0; a < kNumActions; ++a) {
      if (preds[a].idk) continue;
      const StateId v = preds[a].top;
      const double c = e.g + cfg.action_cost;
      auto it = cost.find(v);
      if (it == cost.end() || c < it->second) {
        cost[v] = c;
        parent[v] = {e.u, a};
        open.push({c + h(v), c, e.depth + 1, v, seq++});
      }
    }
  }
  return result;
}

NavResult greedy_navigate(const Predictor& model, const MemoryBank& bank,
                          const HeuristicTable& table, StateId start, StateId goal, int cap,
                          const Environment* env) {
  NavResult nav;
  nav.states.push_back(start);
  StateId s = start;
  LocId loc = env ? env->loc_of_state(start) : kNoLoc;
  if (env && loc == kNoLoc) throw std::invalid_argument("greedy_navigate: start not in environment");
  std::vector<MaskedQuery> queries(kNumActions);
  for (int t = 0; t < cap && s != goal; ++t) {
    for (ActionId a = 0; a < kNumActions; ++a) queries[a] = {{s, a, kNoState}, Mask::End};
    const auto preds = model.predict(bank, queries);
    int best = -1;
    double best_h = kInf;
    for (ActionId a = 0; a < kNumActions; ++a) {
      if (preds[a].idk || preds[a].top == s) continue;
      const double hv = preds[a].top == goal ? -1.0 : table.state_distance(preds[a].top, goal);
      if (best < 0 || hv < best_h) {
        best = a;
        best_h = hv;
      }
    }
    if (best < 0) return nav;
    StateId next = preds[best].top;
    if (env) {
      loc = step(*env, loc, best);
      next = env->state_of(loc);
    }
    nav.actions.push_back(best);
    nav.states.push_back(next);
    s = next;
  }
  nav.success = s == goal;
  return nav;
}

std::vector<double> radius_grid(const Eigen::MatrixXd& distances, int count) {
  std::vector<double> values;
  for (Eigen::Index i = 0; i < distances.rows(); ++i)
    for (Eigen::Index j = i + 1; j < distances.cols(); ++j)
      if (std::isfinite(distances(i, j))) values.push_back(distances(i, j));
  if (values.empty() || count < 1) return {};
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(values.size() - 1, lo + 1);
    return values[lo] + (pos - lo) * (values[hi] - values[lo]);
  };
  const double lo = quantile(0.05), hi = quantile(0.95);
  if (count == 1 || hi <= lo) return {lo};
  std::vector<double> grid;
  for (int k = 0; k < count; ++k) grid.push_back(lo + (hi - lo) * k / (count - 1));
  return grid;
}

RadiusSelection select_r_latent(const Predictor& model, const MemoryBank& bank,
                                const Environment& env, const std::vector<double>& candidates,
                                const std::vector<std::pair<StateId, StateId>>& pairs,
                                const TableBuilder& build, int cap) {
  if (candidates.empty()) throw std::invalid_argument("select_r_latent: no candidate radii");
  RadiusSelection sel;
  if (candidates.size() == 1) {
    sel.radius = candidates.front();
    sel.scores.push_back({sel.radius, 0.0, 0.0});
    return sel;
  }
  std::unordered_map<StateId, std::vector<int>> dist_cache;
  auto true_distance = [&](StateId a, StateId b) {
    auto it = dist_cache.find(a);
    if (it == dist_cache.end()) it = dist_cache.emplace(a, bfs_distances(env, env.loc_of_state(a))).first;
    return it->second[env.loc_of_state(b)];
  };
  const RadiusScore* best = nullptr;
  sel.scores.reserve(candidates.size());
  for (double r : candidates) {
    const HeuristicTable table = build(r);
    int successes = 0;
    double optimality = 0.0;
    for (auto [s, g] : pairs) {
      const NavResult nav = greedy_navigate(model, bank, table, s, g, cap, &env);
      if (!nav.success) continue;
      ++successes;
      optimality += nav.steps() == 0 ? 1.0 : static_cast<double>(true_distance(s, g)) / nav.steps();
    }
    RadiusScore score{r, pairs.empty() ? 0.0 : static_cast<double>(successes) / pairs.size(),
                      successes ? optimality / successes : 0.0};
    sel.scores.push_back(score);
    const RadiusScore& cur = sel.scores.back();
    if (!best || cur.success > best->success ||
        (cur.success == best->success &&
         (cur.optimality > best->optimality ||
          (cur.optimality == best->optimality && cur.radius < best->radius)))) {
      best = &cur;
    }
  }
  sel.radius = best->radius;
  return sel;
}

}  // namespace eswm
