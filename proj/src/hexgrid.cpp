#include "eswm/hexgrid.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace eswm {

int HexCoord::ring() const {
  return std::max({std::abs(q), std::abs(r), std::abs(q + r)});
}

int hex_distance(HexCoord a, HexCoord b) { return (a - b).ring(); }

const char* action_name(ActionId a) {
  static constexpr const char* kNames[kNumActions] = {"E", "NE", "NW",
                                                      "W", "SW", "SE"};
  if (a < 0 || a >= kNumActions) return "?";
  return kNames[a];
}

std::optional<ActionId> direction_of(HexCoord delta) {
  for (ActionId a = 0; a < kNumActions; ++a) {
    if (kDirections[a] == delta) return a;
  }
  return std::nullopt;
}

std::pair<double, double> cell_center(HexCoord c) {
  return {std::sqrt(3.0) * (c.q + 0.5 * c.r), 1.5 * c.r};
}

HexGraph::HexGraph(int radius) : radius_(radius) {
  if (radius < 0) throw std::invalid_argument("hex radius must be >= 0");
  for (int r = -radius; r <= radius; ++r) {
    for (int q = -radius; q <= radius; ++q) {
      HexCoord c{q, r};
      if (c.ring() <= radius) coords_.push_back(c);
    }
  }
  const int n = num_locations();
  neighbors_.assign(n, {});
  edge_of_.assign(n, {});
  for (LocId l = 0; l < n; ++l) {
    for (ActionId a = 0; a < kNumActions; ++a) {
      neighbors_[l][a] = loc_of(coords_[l] + kDirections[a]);
      edge_of_[l][a] = -1;
    }
  }
  for (LocId l = 0; l < n; ++l) {
    for (ActionId a = 0; a < kNumActions; ++a) {
      LocId m = neighbors_[l][a];
      if (m == kNoLoc || m < l) continue;
      edge_of_[l][a] = static_cast<int>(edges_.size());
      edge_of_[m][opposite(a)] = static_cast<int>(edges_.size());
      edges_.push_back({l, m});
    }
  }
}

LocId HexGraph::loc_of(HexCoord c) const {
  if (!contains(c)) return kNoLoc;
  // Rows r = -R..R; row r holds q in [max(-R, -R-r), min(R, R-r)].
  int index = 0;
  for (int r = -radius_; r < c.r; ++r) {
    index += 2 * radius_ + 1 - std::abs(r);
  }
  return index + c.q - std::max(-radius_, -radius_ - c.r);
}

int HexGraph::degree(LocId l) const {
  int d = 0;
  for (LocId m : neighbors_[l]) d += (m != kNoLoc);
  return d;
}

int HexGraph::edge_index(LocId a, LocId b) const {
  for (ActionId d = 0; d < kNumActions; ++d) {
    if (neighbors_[a][d] == b) return edge_of_[a][d];
  }
  return -1;
}

HexGraph build_hex_graph(int radius) { return HexGraph(radius); }

std::string to_string(EnvFamily f) {
  return f == EnvFamily::OpenArena ? "open_arena" : "random_wall";
}
std::string to_string(StateEncoding e) {
  return e == StateEncoding::Integer ? "integer" : "six_bit";
}
std::string to_string(StatePool p) {
  switch (p) {
    case StatePool::All: return "all";
    case StatePool::Train: return "train";
    case StatePool::Test: return "test";
  }
  return "all";
}

EnvFamily parse_env_family(const std::string& s) {
  if (s == "open_arena") return EnvFamily::OpenArena;
  if (s == "random_wall") return EnvFamily::RandomWall;
  throw std::invalid_argument("unknown environment family '" + s + "'");
}
StateEncoding parse_state_encoding(const std::string& s) {
  if (s == "integer") return StateEncoding::Integer;
  if (s == "six_bit") return StateEncoding::SixBit;
  throw std::invalid_argument("unknown state encoding '" + s + "'");
}
StatePool parse_state_pool(const std::string& s) {
  if (s == "all") return StatePool::All;
  if (s == "train") return StatePool::Train;
  if (s == "test") return StatePool::Test;
  throw std::invalid_argument("unknown state pool '" + s + "'");
}

EnvConfig EnvConfig::open_arena() {
  EnvConfig c;
  c.family = EnvFamily::OpenArena;
  c.radius = 2;
  c.vocab_size = 64;
  c.state_encoding = StateEncoding::SixBit;
  c.wall_len_min = 0;
  c.wall_len_max = 0;
  c.unobs_max_frac = 0.0;
  c.state_pool = StatePool::Train;
  return c;
}

EnvConfig EnvConfig::random_wall(int radius) {
  EnvConfig c;
  c.family = EnvFamily::RandomWall;
  c.radius = radius;
  // 36 states at radius 3 (at least one wall cell keeps this sufficient);
  // one state per cell otherwise.
  c.vocab_size = radius == 3 ? 36 : 3 * radius * radius + 3 * radius + 1;
  c.state_encoding = StateEncoding::Integer;
  c.wall_len_min = 2;
  c.wall_len_max = radius + 2;
  c.unobs_max_frac = 1.0 / 3.0;
  return c;
}

bool is_held_out_state(StateId s) {
  const int m = s % 8;
  return m == 1 || m == 4 || m == 6;
}

std::vector<StateId> state_pool_ids(int vocab_size, StatePool pool) {
  std::vector<StateId> ids;
  for (StateId s = 0; s < vocab_size; ++s) {
    if (pool == StatePool::All || (pool == StatePool::Test) == is_held_out_state(s)) {
      ids.push_back(s);
    }
  }
  return ids;
}

void validate(const EnvConfig& cfg) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (cfg.radius < 0) fail("env.radius must be >= 0");
  const int cells = 3 * cfg.radius * cfg.radius + 3 * cfg.radius + 1;
  if (cfg.state_encoding == StateEncoding::SixBit && cfg.vocab_size > 64) {
    fail("env.vocab_size must be <= 64 for six_bit encoding");
  }
  if (cfg.unobs_max_frac < 0.0 || cfg.unobs_max_frac >= 1.0) {
    fail("env.unobs_max_frac must lie in [0, 1)");
  }
  const int pool = static_cast<int>(state_pool_ids(cfg.vocab_size, cfg.state_pool).size());
  if (cfg.family == EnvFamily::OpenArena) {
    if (pool < cells) {
      fail("env.vocab_size too small: open arena needs " + std::to_string(cells) +
           " distinct states, pool has " + std::to_string(pool));
    }
  } else {
    if (cfg.wall_len_min < 1 || cfg.wall_len_max < cfg.wall_len_min) {
      fail("env.wall_len_min/max must satisfy 1 <= min <= max");
    }
    if (cells < 3) fail("random_wall needs radius >= 1");
    // At least one wall cell is always placed.
    if (pool < cells - 1) {
      fail("env.vocab_size too small: random wall needs " +
           std::to_string(cells - 1) + " distinct states, pool has " +
           std::to_string(pool));
    }
  }
}

LocId Environment::loc_of_state(StateId s) const {
  if (s < 0 || s >= static_cast<int>(loc_of_state_.size())) return kNoLoc;
  return loc_of_state_[s];
}

std::vector<LocId> Environment::walls() const {
  std::vector<LocId> out;
  for (LocId l = 0; l < graph_.num_locations(); ++l)
    if (wall_[l]) out.push_back(l);
  return out;
}

std::vector<LocId> Environment::observable() const {
  std::vector<LocId> out;
  for (LocId l = 0; l < graph_.num_locations(); ++l)
    if (is_observable(l)) out.push_back(l);
  return out;
}

std::vector<LocId> Environment::free_locations() const {
  std::vector<LocId> out;
  for (LocId l = 0; l < graph_.num_locations(); ++l)
    if (!wall_[l]) out.push_back(l);
  return out;
}

int Environment::num_walls() const {
  return static_cast<int>(std::count(wall_.begin(), wall_.end(), true));
}

void Environment::check_and_index() {
  const int n = graph_.num_locations();
  if (static_cast<int>(wall_.size()) != n || static_cast<int>(filter_.size()) != n ||
      static_cast<int>(state_of_.size()) != n ||
      static_cast<int>(forward_.size()) != graph_.num_edges()) {
    throw std::invalid_argument("environment parts do not match the graph size");
  }
  loc_of_state_.assign(vocab_size_, kNoLoc);
  for (LocId l = 0; l < n; ++l) {
    const StateId s = state_of_[l];
    if (s == kNoState) {
      if (!wall_[l]) throw std::invalid_argument("free cell without a state");
      continue;
    }
    if (s < 0 || s >= vocab_size_) throw std::invalid_argument("state id out of vocabulary");
    if (loc_of_state_[s] != kNoLoc) throw std::invalid_argument("observation map is not injective");
    loc_of_state_[s] = l;
  }
  // Wall cells keep their (dormant) state in state_of_ but are not reachable
  // through loc_of_state.
  for (LocId l = 0; l < n; ++l) {
    if (wall_[l] && state_of_[l] != kNoState) loc_of_state_[state_of_[l]] = kNoLoc;
  }
}

Environment Environment::with_walls(const std::vector<bool>& walls) const {
  Environment out = *this;
  out.wall_ = walls;
  std::vector<bool> used(vocab_size_, false);
  for (StateId s : state_of_)
    if (s != kNoState) used[s] = true;
  for (LocId l = 0; l < graph_.num_locations(); ++l) {
    if (walls[l] || out.state_of_[l] != kNoState) continue;
    auto it = std::find(used.begin(), used.end(), false);
    if (it == used.end()) {
      throw std::invalid_argument("no unused state left for a freed wall cell");
    }
    *it = true;
    out.state_of_[l] = static_cast<StateId>(it - used.begin());
  }
  out.check_and_index();
  return out;
}

Environment make_environment(const HexGraph& graph, const std::vector<bool>& walls,
                             const std::vector<bool>& filter,
                             const std::vector<StateId>& states,
                             const std::vector<bool>& forward, EnvFamily family,
                             StateEncoding encoding, int vocab_size) {
  Environment env;
  env.graph_ = graph;
  env.wall_ = walls;
  env.filter_ = filter;
  env.state_of_ = states;
  env.forward_ = forward;
  env.family_ = family;
  env.encoding_ = encoding;
  env.vocab_size_ = vocab_size;
  env.check_and_index();
  return env;
}

namespace {

// Wall shape: start cell, heading, length in [min, max]; each further cell
// continues straight with probability 0.8, otherwise turns +-60 degrees.
// Stops early when the next cell falls off the grid.
std::vector<bool> sample_wall(const HexGraph& g, const EnvConfig& cfg, Rng& rng) {
  std::vector<bool> wall(g.num_locations(), false);
  LocId cur = uniform_int(rng, 0, g.num_locations() - 1);
  ActionId heading = uniform_int(rng, 0, kNumActions - 1);
  const int length = uniform_int(rng, cfg.wall_len_min, cfg.wall_len_max);
  wall[cur] = true;
  for (int i = 1; i < length; ++i) {
    const double u = uniform01(rng);
    if (u >= 0.8) heading = (heading + (u < 0.9 ? 1 : kNumActions - 1)) % kNumActions;
    const LocId next = g.neighbor(cur, heading);
    if (next == kNoLoc) break;
    wall[next] = true;
    cur = next;
  }
  return wall;
}

// Contiguous blob of free cells grown from a random seed cell.
std::vector<bool> sample_unobserved(const HexGraph& g, const std::vector<bool>& wall,
                                    const EnvConfig& cfg, Rng& rng) {
  const int n = g.num_locations();
  std::vector<bool> hidden(n, false);
  std::vector<LocId> free;
  for (LocId l = 0; l < n; ++l)
    if (!wall[l]) free.push_back(l);
  const int max_size = std::min(static_cast<int>(std::floor(n * cfg.unobs_max_frac)),
                                static_cast<int>(free.size()) - 1);
  const int size = max_size > 0 ? uniform_int(rng, 0, max_size) : 0;
  if (size == 0) return hidden;
  const LocId seed = free[uniform_int(rng, 0, static_cast<int>(free.size()) - 1)];
  hidden[seed] = true;
  int count = 1;
  std::vector<LocId> frontier;
  auto push_neighbors = [&](LocId l) {
    for (ActionId a = 0; a < kNumActions; ++a) {
      const LocId m = g.neighbor(l, a);
      if (m != kNoLoc && !wall[m] && !hidden[m] &&
          std::find(frontier.begin(), frontier.end(), m) == frontier.end()) {
        frontier.push_back(m);
      }
    }
  };
  push_neighbors(seed);
  while (count < size && !frontier.empty()) {
    const int pick = uniform_int(rng, 0, static_cast<int>(frontier.size()) - 1);
    const LocId l = frontier[pick];
    frontier.erase(frontier.begin() + pick);
    hidden[l] = true;
    ++count;
    push_neighbors(l);
  }
  return hidden;
}

}  // namespace

Environment generate_environment(const EnvConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(derive_seed(seed, "environment"));
  Environment env;
  env.graph_ = HexGraph(cfg.radius);
  env.family_ = cfg.family;
  env.encoding_ = cfg.state_encoding;
  env.vocab_size_ = cfg.vocab_size;
  const HexGraph& g = env.graph_;
  const int n = g.num_locations();

  env.wall_.assign(n, false);
  env.filter_.assign(n, true);
  if (cfg.family == EnvFamily::RandomWall) {
    env.wall_ = sample_wall(g, cfg, rng);
    const auto hidden = sample_unobserved(g, env.wall_, cfg, rng);
    for (LocId l = 0; l < n; ++l) env.filter_[l] = !hidden[l];
  }

  // Uniform injective observation map. Wall cells also get a dormant state when
  // the vocabulary is large enough, so that removing walls later keeps every
  // cell labelled without touching the free cells.
  std::vector<StateId> pool = state_pool_ids(cfg.vocab_size, cfg.state_pool);
  std::shuffle(pool.begin(), pool.end(), rng);
  env.state_of_.assign(n, kNoState);
  std::size_t next = 0;
  for (LocId l = 0; l < n; ++l)
    if (!env.wall_[l]) env.state_of_[l] = pool[next++];
  for (LocId l = 0; l < n && next < pool.size(); ++l)
    if (env.wall_[l]) env.state_of_[l] = pool[next++];

  env.forward_.assign(g.num_edges(), true);
  for (int e = 0; e < g.num_edges(); ++e) env.forward_[e] = uniform01(rng) < 0.5;

  env.id_ = mix64(seed ^ (static_cast<std::uint64_t>(cfg.radius) << 32) ^
                  static_cast<std::uint64_t>(cfg.family));
  env.check_and_index();
  return env;
}

LocId step(const Environment& env, LocId loc, ActionId action) {
  const HexGraph& g = env.graph();
  if (loc < 0 || loc >= g.num_locations()) {
    throw std::invalid_argument("step: location outside the graph");
  }
  if (env.is_wall(loc)) throw std::invalid_argument("step: location is a wall cell");
  if (action < 0 || action >= kNumActions) throw std::invalid_argument("step: bad action");
  const LocId next = g.neighbor(loc, action);
  if (next == kNoLoc || env.is_wall(next)) return loc;
  return next;
}

DirectedMove oriented_move(const Environment& env, int edge) {
  const HexGraph& g = env.graph();
  if (edge < 0 || edge >= g.num_edges()) {
    throw std::invalid_argument("edge is not part of the graph");
  }
  const HexEdge e = g.edges()[edge];
  const LocId from = env.edge_forward(edge) ? e.lo : e.hi;
  const LocId to = env.edge_forward(edge) ? e.hi : e.lo;
  return {from, *direction_of(g.coord(to) - g.coord(from)), to};
}

Transition directed_transition(const Environment& env, int edge) {
  DirectedMove m = oriented_move(env, edge);
  if (env.is_wall(m.from) && env.is_wall(m.to)) {
    throw std::invalid_argument("edge lies inside the wall");
  }
  if (env.is_wall(m.from)) {
    // Orientation points out of the wall: the observable move is the reverse
    // one, which is blocked.
    return {env.state_of(m.to), opposite(m.action), env.state_of(m.to)};
  }
  if (env.is_wall(m.to)) return {env.state_of(m.from), m.action, env.state_of(m.from)};
  return {env.state_of(m.from), m.action, env.state_of(m.to)};
}

Transition directed_transition(const Environment& env, HexEdge edge) {
  const int e = env.graph().edge_index(edge.lo, edge.hi);
  if (e < 0) throw std::invalid_argument("edge is not part of the graph");
  return directed_transition(env, e);
}

int transition_edge(const Environment& env, const Transition& t) {
  const LocId from = env.loc_of_state(t.source);
  if (from == kNoLoc || t.action < 0 || t.action >= kNumActions) return -1;
  const LocId to = env.graph().neighbor(from, t.action);
  if (to == kNoLoc) return -1;
  return env.graph().edge_index(from, to);
}

}  // namespace eswm
