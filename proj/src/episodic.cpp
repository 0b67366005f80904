#include "eswm/episodic.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <unordered_map>

namespace eswm {

bool MemoryBank::contains(const Transition& t) const {
  return std::find(transitions.begin(), transitions.end(), t) != transitions.end();
}

std::vector<StateId> MemoryBank::unique_states() const {
  std::vector<StateId> out;
  for (const Transition& t : transitions) {
    out.push_back(t.source);
    out.push_back(t.end);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string to_string(Mask m) {
  switch (m) {
    case Mask::None: return "none";
    case Mask::Source: return "source";
    case Mask::Action: return "action";
    case Mask::End: return "end";
  }
  return "none";
}

std::string to_string(QueryKind k) {
  switch (k) {
    case QueryKind::Seen: return "seen";
    case QueryKind::Unseen: return "unseen";
    case QueryKind::Unsolvable: return "unsolvable";
  }
  return "unseen";
}

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

MemoryBank sample_memory_bank(const Environment& env, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "memory-bank"));
  const HexGraph& g = env.graph();
  MemoryBank bank;
  bank.env_id = env.id();

  struct Weighted {
    double w;
    int edge;
  };
  std::vector<Weighted> candidates;
  for (int e = 0; e < g.num_edges(); ++e) {
    const HexEdge he = g.edges()[e];
    // Weights are drawn for every edge so the stream does not depend on the
    // observable set.
    const double w = uniform01(rng);
    if (env.is_observable(he.lo) && env.is_observable(he.hi)) candidates.push_back({w, e});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Weighted& a, const Weighted& b) { return a.w < b.w; });

  DisjointSets sets(g.num_locations());
  for (const Weighted& c : candidates) {
    const HexEdge he = g.edges()[c.edge];
    if (sets.unite(he.lo, he.hi)) bank.transitions.push_back(directed_transition(env, c.edge));
  }
  std::shuffle(bank.transitions.begin(), bank.transitions.end(), rng);
  return bank;
}

QueryCandidates query_candidates(const Environment& env, const MemoryBank& bank) {
  const HexGraph& g = env.graph();
  QueryCandidates out;
  std::vector<bool> in_bank(g.num_edges(), false);
  for (int i = 0; i < static_cast<int>(bank.size()); ++i) {
    out.seen.push_back(i);
    const int e = transition_edge(env, bank.transitions[i]);
    if (e >= 0) in_bank[e] = true;
  }
  for (int e = 0; e < g.num_edges(); ++e) {
    const HexEdge he = g.edges()[e];
    const bool obs_lo = env.is_observable(he.lo), obs_hi = env.is_observable(he.hi);
    const bool wall_lo = env.is_wall(he.lo), wall_hi = env.is_wall(he.hi);
    const bool hid_lo = env.is_unobserved(he.lo), hid_hi = env.is_unobserved(he.hi);
    if ((obs_lo && (obs_hi || wall_hi)) || (obs_hi && wall_lo)) {
      if (!in_bank[e]) out.unseen.push_back(e);
    } else if ((obs_lo && hid_hi) || (obs_hi && hid_lo)) {
      out.unsolvable.push_back(e);
    }
  }
  return out;
}

Query sample_query(const Environment& env, const MemoryBank& bank,
                   const QueryCandidates& cand, const QueryMix& mix, Rng& rng) {
  if (mix.unseen < 0 || mix.seen < 0 || mix.unsolvable < 0 ||
      std::abs(mix.unseen + mix.seen + mix.unsolvable - 1.0) > 1e-9) {
    throw std::invalid_argument("query mix must be non-negative and sum to 1");
  }
  const double w_unseen = cand.unseen.empty() ? 0.0 : mix.unseen;
  const double w_seen = cand.seen.empty() ? 0.0 : mix.seen;
  const double w_unsolv = cand.unsolvable.empty() ? 0.0 : mix.unsolvable;
  const double total = w_unseen + w_seen + w_unsolv;
  if (total <= 0.0) throw std::invalid_argument("no query of any requested kind is available");

  const double u = uniform01(rng) * total;
  QueryKind kind = u < w_unseen                ? QueryKind::Unseen
                   : u < w_unseen + w_seen     ? QueryKind::Seen
                                               : QueryKind::Unsolvable;
  // Guard against u landing exactly on total with an empty last bucket.
  if (kind == QueryKind::Unsolvable && cand.unsolvable.empty()) {
    kind = w_seen > 0 ? QueryKind::Seen : QueryKind::Unseen;
  }

  Query q;
  q.kind = kind;
  auto pick = [&](const std::vector<int>& v) {
    return v[uniform_int(rng, 0, static_cast<int>(v.size()) - 1)];
  };
  switch (kind) {
    case QueryKind::Seen: q.transition = bank.transitions[pick(cand.seen)]; break;
    case QueryKind::Unseen: q.transition = directed_transition(env, pick(cand.unseen)); break;
    case QueryKind::Unsolvable: q.transition = directed_transition(env, pick(cand.unsolvable)); break;
  }
  q.mask = static_cast<Mask>(1 + uniform_int(rng, 0, 2));
  return q;
}

Query sample_query(const Environment& env, const MemoryBank& bank, const QueryMix& mix,
                   std::uint64_t seed) {
  Rng rng(derive_seed(seed, "query"));
  return sample_query(env, bank, query_candidates(env, bank), mix, rng);
}

std::optional<int> integration_path_length(const MemoryBank& bank, StateId from, StateId to) {
  if (from == to) return 0;
  std::unordered_map<StateId, std::vector<StateId>> adj;
  for (const Transition& t : bank.transitions) {
    if (t.source == t.end) continue;
    adj[t.source].push_back(t.end);
    adj[t.end].push_back(t.source);
  }
  std::unordered_map<StateId, int> dist{{from, 0}};
  std::queue<StateId> frontier;
  frontier.push(from);
  while (!frontier.empty()) {
    const StateId u = frontier.front();
    frontier.pop();
    auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (StateId v : it->second) {
      if (dist.count(v)) continue;
      dist[v] = dist[u] + 1;
      if (v == to) return dist[v];
      frontier.push(v);
    }
  }
  return std::nullopt;
}

std::optional<int> integration_path_length(const MemoryBank& bank, const Query& query) {
  return integration_path_length(bank, query.transition.source, query.transition.end);
}

bool walls_contiguous(const HexGraph& graph, const std::vector<bool>& walls) {
  std::vector<LocId> cells;
  for (LocId l = 0; l < graph.num_locations(); ++l)
    if (walls[l]) cells.push_back(l);
  if (cells.size() <= 1) return true;
  std::vector<bool> seen(graph.num_locations(), false);
  std::vector<LocId> stack{cells.front()};
  seen[cells.front()] = true;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const LocId l = stack.back();
    stack.pop_back();
    ++reached;
    for (ActionId a = 0; a < kNumActions; ++a) {
      const LocId m = graph.neighbor(l, a);
      if (m != kNoLoc && walls[m] && !seen[m]) {
        seen[m] = true;
        stack.push_back(m);
      }
    }
  }
  return reached == cells.size();
}

Environment apply_world_change(const Environment& env, const WallEdit& change) {
  const HexGraph& g = env.graph();
  std::vector<bool> walls(g.num_locations());
  for (LocId l = 0; l < g.num_locations(); ++l) walls[l] = env.is_wall(l);
  auto cell = [&](HexCoord c) {
    const LocId l = g.loc_of(c);
    if (l == kNoLoc) {
      throw std::invalid_argument("wall edit names a cell outside the graph (" +
                                  std::to_string(c.q) + "," + std::to_string(c.r) + ")");
    }
    return l;
  };
  std::vector<bool> added(g.num_locations(), false);
  for (HexCoord c : change.remove) walls[cell(c)] = false;
  for (HexCoord c : change.add) walls[cell(c)] = added[cell(c)] = true;
  if (!walls_contiguous(g, added)) throw std::invalid_argument("added wall cells are not contiguous");
  const auto free_cells = std::count(walls.begin(), walls.end(), false);
  if (free_cells < 2) throw std::invalid_argument("wall edit leaves fewer than two free cells");
  return env.with_walls(walls);
}

}  // namespace eswm
