#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eswm/hexgrid.h"

namespace eswm {

/// Unordered set of one-step memories, stored in the (random) order the model
/// sees them.
struct MemoryBank {
  std::vector<Transition> transitions;
  std::uint64_t env_id = 0;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  bool contains(const Transition& t) const;
  /// Distinct states mentioned by any memory, ascending.
  std::vector<StateId> unique_states() const;
};

enum class Mask { None, Source, Action, End };
enum class QueryKind { Seen, Unseen, Unsolvable };

std::string to_string(Mask m);
std::string to_string(QueryKind k);

struct Query {
  Transition transition;
  Mask mask = Mask::End;
  QueryKind kind = QueryKind::Unseen;
};

/// Probabilities of drawing each query kind.
struct QueryMix {
  double unseen = 0.68;
  double seen = 0.17;
  double unsolvable = 0.15;

  static QueryMix random_wall() { return {}; }
  static QueryMix open_arena() { return {1.0, 0.0, 0.0}; }
  static QueryMix for_family(EnvFamily f) {
    return f == EnvFamily::OpenArena ? open_arena() : random_wall();
  }
};

/// Minimal spanning forest over the observable free cells with uniform random
/// edge weights (Kruskal), oriented by the environment, mapped to states,
/// wall-bound moves turned into self-loops, then uniformly permuted.
MemoryBank sample_memory_bank(const Environment& env, std::uint64_t seed);

/// Edges a query of each kind may be drawn from, given a bank.
struct QueryCandidates {
  std::vector<int> seen;        // indices into bank.transitions
  std::vector<int> unseen;      // graph edge ids
  std::vector<int> unsolvable;  // graph edge ids
};

QueryCandidates query_candidates(const Environment& env, const MemoryBank& bank);

/// Draws a kind from `mix` (renormalised over kinds that have candidates),
/// a uniform transition of that kind and a uniform mask.
/// Throws std::invalid_argument if the mix is invalid or no kind is available.
Query sample_query(const Environment& env, const MemoryBank& bank,
                   const QueryMix& mix, std::uint64_t seed);

/// Same draw with a caller-supplied generator (used when the candidate sets
/// are already known).
Query sample_query(const Environment& env, const MemoryBank& bank,
                   const QueryCandidates& candidates, const QueryMix& mix, Rng& rng);

/// Shortest path between the query's endpoint states over the undirected
/// graph of bank memories. nullopt means unreachable.
std::optional<int> integration_path_length(const MemoryBank& bank, const Query& query);
std::optional<int> integration_path_length(const MemoryBank& bank, StateId from,
                                           StateId to);

/// Cells to add to / remove from the wall.
struct WallEdit {
  std::vector<HexCoord> add;
  std::vector<HexCoord> remove;
};

/// New environment with edited walls; observation map, filter and edge
/// orientation are unchanged. The added cells form a new contiguous wall
/// segment (it may touch the existing wall or stand alone). Rejects
/// non-contiguous additions, edits leaving fewer than two free cells, and
/// cells off-grid.
Environment apply_world_change(const Environment& env, const WallEdit& change);

/// True when the wall cells form one connected group (or there are none).
bool walls_contiguous(const HexGraph& graph, const std::vector<bool>& walls);

}  // namespace eswm
