#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eswm/rng.h"

namespace eswm {

using LocId = int;
using StateId = int;
using ActionId = int;

constexpr int kNumActions = 6;
constexpr LocId kNoLoc = -1;
constexpr StateId kNoState = -1;

/// Axial hex coordinate (pointy-top layout).
struct HexCoord {
  int q = 0;
  int r = 0;

  friend bool operator==(HexCoord, HexCoord) = default;
  friend auto operator<=>(HexCoord, HexCoord) = default;

  HexCoord operator+(HexCoord o) const { return {q + o.q, r + o.r}; }
  HexCoord operator-(HexCoord o) const { return {q - o.q, r - o.r}; }

  /// Hex distance to the origin, max(|q|, |r|, |q+r|).
  int ring() const;
};

int hex_distance(HexCoord a, HexCoord b);

// Action order: 0 E, 1 NE, 2 NW, 3 W, 4 SW, 5 SE. Consecutive actions are 60
// degrees apart and opposite(a) = (a + 3) mod 6.
inline constexpr std::array<HexCoord, kNumActions> kDirections = {{
    {+1, 0}, {+1, -1}, {0, -1}, {-1, 0}, {-1, +1}, {0, +1}}};

constexpr ActionId opposite(ActionId a) { return (a + 3) % kNumActions; }
const char* action_name(ActionId a);

/// Direction index of a unit step, or nullopt if `delta` is not a unit step.
std::optional<ActionId> direction_of(HexCoord delta);

/// Cartesian centre of a cell with unit edge length. Used where a Euclidean
/// distance between cells is needed.
std::pair<double, double> cell_center(HexCoord c);

/// Unordered edge stored with lo < hi.
struct HexEdge {
  LocId lo = kNoLoc;
  LocId hi = kNoLoc;
  friend bool operator==(HexEdge, HexEdge) = default;
};

/// Fixed hexagon of cells within `radius` of the origin.
class HexGraph {
 public:
  HexGraph() = default;
  explicit HexGraph(int radius);

  int radius() const { return radius_; }
  int num_locations() const { return static_cast<int>(coords_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const std::vector<HexCoord>& coords() const { return coords_; }
  const std::vector<HexEdge>& edges() const { return edges_; }
  HexCoord coord(LocId l) const { return coords_.at(l); }

  bool contains(HexCoord c) const { return c.ring() <= radius_; }
  LocId loc_of(HexCoord c) const;
  /// Neighbour of `l` in direction `a`, or kNoLoc when off-grid.
  LocId neighbor(LocId l, ActionId a) const { return neighbors_[l][a]; }
  int degree(LocId l) const;
  /// Edge index joining two locations, or -1.
  int edge_index(LocId a, LocId b) const;

 private:
  int radius_ = 0;
  std::vector<HexCoord> coords_;
  std::vector<std::array<LocId, kNumActions>> neighbors_;
  std::vector<HexEdge> edges_;
  std::vector<std::array<int, kNumActions>> edge_of_;  // per loc, per dir
};

HexGraph build_hex_graph(int radius);

enum class EnvFamily { OpenArena, RandomWall };
enum class StateEncoding { Integer, SixBit };

/// Which part of the state vocabulary an environment draws its observations
/// from. Open Arena holds out a fixed subset for evaluation.
enum class StatePool { All, Train, Test };

std::string to_string(EnvFamily f);
std::string to_string(StateEncoding e);
std::string to_string(StatePool p);
EnvFamily parse_env_family(const std::string& s);
StateEncoding parse_state_encoding(const std::string& s);
StatePool parse_state_pool(const std::string& s);

struct EnvConfig {
  EnvFamily family = EnvFamily::RandomWall;
  int radius = 2;
  int vocab_size = 19;
  StateEncoding state_encoding = StateEncoding::Integer;
  int wall_len_min = 2;
  int wall_len_max = 4;  // radius + 2 by default
  double unobs_max_frac = 1.0 / 3.0;
  StatePool state_pool = StatePool::All;

  static EnvConfig open_arena();
  static EnvConfig random_wall(int radius);
};

/// States reserved for evaluation in the six-bit vocabulary: ids with
/// id mod 8 in {1, 4, 6}. 24 held-out, 40 for training.
bool is_held_out_state(StateId s);
std::vector<StateId> state_pool_ids(int vocab_size, StatePool pool);

/// A single room: graph, observability filter, wall set, observation map and
/// per-edge orientation.
class Environment {
 public:
  Environment() = default;

  const HexGraph& graph() const { return graph_; }
  EnvFamily family() const { return family_; }
  StateEncoding state_encoding() const { return encoding_; }
  int vocab_size() const { return vocab_size_; }

  bool is_wall(LocId l) const { return wall_[l]; }
  /// Observable and not a wall.
  bool is_observable(LocId l) const { return filter_[l] && !wall_[l]; }
  /// Free (non-wall) but hidden by the observability filter.
  bool is_unobserved(LocId l) const { return !filter_[l] && !wall_[l]; }
  /// Raw filter value g(l), independent of walls.
  bool filter(LocId l) const { return filter_[l]; }

  StateId state_of(LocId l) const { return state_of_[l]; }
  /// kNoLoc when the state is unused or belongs to a wall cell.
  LocId loc_of_state(StateId s) const;

  /// Orientation of edge e: true means lo -> hi.
  bool edge_forward(int e) const { return forward_[e]; }

  std::vector<LocId> walls() const;
  std::vector<LocId> observable() const;
  std::vector<LocId> free_locations() const;
  int num_walls() const;

  std::uint64_t id() const { return id_; }

  /// Copy with a replaced wall set. Observation map, filter and orientation are
  /// kept; freed cells without a state take the lowest unused state id.
  /// Throws std::invalid_argument if the vocabulary is exhausted.
  Environment with_walls(const std::vector<bool>& walls) const;

  friend Environment generate_environment(const EnvConfig&, std::uint64_t);
  friend Environment make_environment(const HexGraph&, const std::vector<bool>&,
                                      const std::vector<bool>&,
                                      const std::vector<StateId>&,
                                      const std::vector<bool>&, EnvFamily,
                                      StateEncoding, int);

 private:
  HexGraph graph_;
  EnvFamily family_ = EnvFamily::OpenArena;
  StateEncoding encoding_ = StateEncoding::Integer;
  int vocab_size_ = 0;
  std::vector<bool> wall_;
  std::vector<bool> filter_;
  std::vector<StateId> state_of_;  // kNoState for unassigned wall cells
  std::vector<bool> forward_;
  std::vector<LocId> loc_of_state_;
  std::uint64_t id_ = 0;

  void check_and_index();
};

/// Throws std::invalid_argument for inconsistent configs.
void validate(const EnvConfig& cfg);

/// Deterministic in (cfg, seed).
Environment generate_environment(const EnvConfig& cfg, std::uint64_t seed);

/// Assemble an environment from explicit parts (tests, hand-built scenarios).
Environment make_environment(const HexGraph& graph,
                             const std::vector<bool>& walls,
                             const std::vector<bool>& filter,
                             const std::vector<StateId>& states,
                             const std::vector<bool>& forward, EnvFamily family,
                             StateEncoding encoding, int vocab_size);

/// One move. Blocked moves (wall or off-grid) leave the agent in place.
/// Throws std::invalid_argument if `loc` is a wall or outside the graph.
LocId step(const Environment& env, LocId loc, ActionId action);

struct Transition {
  StateId source = kNoState;
  ActionId action = 0;
  StateId end = kNoState;
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Location-level oriented move along a graph edge.
struct DirectedMove {
  LocId from = kNoLoc;
  ActionId action = 0;
  LocId to = kNoLoc;
};

/// Orientation of `edge` as assigned by the environment (ignores walls).
DirectedMove oriented_move(const Environment& env, int edge);

/// Observation-level transition for an edge. Wall-bound moves become
/// self-loops at the free endpoint.
Transition directed_transition(const Environment& env, int edge);
Transition directed_transition(const Environment& env, HexEdge edge);

/// Location (and hence undirected edge) a transition travels along:
/// the source location and its neighbour in the transition's direction.
/// Returns -1 when the move points off-grid or the source is unknown.
int transition_edge(const Environment& env, const Transition& t);

}  // namespace eswm
