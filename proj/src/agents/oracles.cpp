#include <algorithm>
#include <queue>
#include <set>

#include "eswm/agents.h"
#include "eswm/model/model.h"

namespace eswm {

namespace {

Prediction spread(Mask mask, int classes, const std::vector<int>& answers, int idk_class) {
  Prediction p;
  p.mask = mask;
  p.probs.assign(classes, 0.0);
  if (answers.empty()) {
    // Nothing consistent: uniform over the non-IDK classes.
    const int n = idk_class >= 0 ? classes - 1 : classes;
    for (int k = 0; k < n; ++k) p.probs[k] = 1.0 / n;
  } else {
    for (int a : answers) p.probs[a] += 1.0 / answers.size();
  }
  finalize_prediction(p, idk_class);
  return p;
}

Prediction certain(Mask mask, int classes, int answer, int idk_class) {
  return spread(mask, classes, {answer}, idk_class);
}

}  // namespace

std::vector<Prediction> GroundTruthPredictor::predict(const MemoryBank&,
                                                      std::span<const MaskedQuery> queries,
                                                      bool) const {
  const int state_classes = state_vocab() + (idk_ ? 1 : 0);
  const int action_classes = kNumActions + (idk_ ? 1 : 0);
  const HexGraph& g = env_.graph();
  std::vector<Prediction> out;
  for (const MaskedQuery& q : queries) {
    const Transition& t = q.transition;
    std::vector<int> answers;
    switch (q.mask) {
      case Mask::End: {
        const LocId from = env_.loc_of_state(t.source);
        if (from != kNoLoc) answers.push_back(env_.state_of(step(env_, from, t.action)));
        out.push_back(spread(q.mask, state_classes, answers, state_idk_class()));
        break;
      }
      case Mask::Action: {
        const LocId from = env_.loc_of_state(t.source), to = env_.loc_of_state(t.end);
        if (from != kNoLoc && to != kNoLoc) {
          for (ActionId a = 0; a < kNumActions; ++a)
            if (step(env_, from, a) == to) answers.push_back(a);
        }
        out.push_back(spread(q.mask, action_classes, answers, action_idk_class()));
        break;
      }
      case Mask::Source:
      case Mask::None: {
        const LocId to = env_.loc_of_state(t.end);
        if (to != kNoLoc) {
          for (LocId l = 0; l < g.num_locations(); ++l)
            if (!env_.is_wall(l) && step(env_, l, t.action) == to) answers.push_back(env_.state_of(l));
        }
        out.push_back(spread(q.mask, state_classes, answers, state_idk_class()));
        break;
      }
    }
  }
  return out;
}

std::vector<Prediction> BankOracle::predict(const MemoryBank& bank,
                                            std::span<const MaskedQuery> queries, bool) const {
  const int state_classes = state_vocab() + 1;
  const int action_classes = kNumActions + 1;
  const int s_idk = state_idk_class(), a_idk = action_idk_class();
  const std::vector<StateId> known_list = bank.unique_states();
  const std::set<StateId> known(known_list.begin(), known_list.end());
  auto free_loc = [&](StateId s) -> LocId {
    if (!known.count(s)) return kNoLoc;
    const LocId l = env_.loc_of_state(s);
    return l != kNoLoc && !env_.is_wall(l) ? l : kNoLoc;
  };

  std::vector<Prediction> out;
  for (const MaskedQuery& q : queries) {
    const Transition& t = q.transition;
    // Latest matching memory wins.
    std::optional<Transition> memory;
    for (const Transition& m : bank.transitions) {
      const bool match = (q.mask == Mask::End && m.source == t.source && m.action == t.action) ||
                         (q.mask == Mask::Action && m.source == t.source && m.end == t.end) ||
                         (q.mask == Mask::Source && m.action == t.action && m.end == t.end);
      if (match) memory = m;
    }
    switch (q.mask) {
      case Mask::End: {
        if (memory) { out.push_back(certain(q.mask, state_classes, memory->end, s_idk)); break; }
        const LocId from = free_loc(t.source);
        StateId answer = s_idk;
        if (from != kNoLoc) {
          const StateId s = env_.state_of(step(env_, from, t.action));
          if (known.count(s)) answer = s;
        }
        out.push_back(certain(q.mask, state_classes, answer, s_idk));
        break;
      }
      case Mask::Action: {
        if (memory) { out.push_back(certain(q.mask, action_classes, memory->action, a_idk)); break; }
        const LocId from = free_loc(t.source), to = free_loc(t.end);
        std::vector<int> answers;
        if (from != kNoLoc && to != kNoLoc) {
          for (ActionId a = 0; a < kNumActions; ++a)
            if (step(env_, from, a) == to) answers.push_back(a);
        }
        if (answers.empty()) answers.push_back(a_idk);
        out.push_back(spread(q.mask, action_classes, answers, a_idk));
        break;
      }
      case Mask::Source:
      case Mask::None: {
        if (memory) { out.push_back(certain(q.mask, state_classes, memory->source, s_idk)); break; }
        const LocId to = free_loc(t.end);
        std::vector<int> answers;
        if (to != kNoLoc) {
          for (LocId l = 0; l < env_.graph().num_locations(); ++l) {
            if (env_.is_wall(l) || !known.count(env_.state_of(l))) continue;
            if (step(env_, l, t.action) == to) answers.push_back(env_.state_of(l));
          }
        }
        if (answers.empty()) answers.push_back(s_idk);
        out.push_back(spread(q.mask, state_classes, answers, s_idk));
        break;
      }
    }
  }
  return out;
}

std::vector<int> bfs_distances(const Environment& env, LocId from) {
  std::vector<int> dist(env.graph().num_locations(), -1);
  if (env.is_wall(from)) return dist;
  std::queue<LocId> q;
  dist[from] = 0;
  q.push(from);
  while (!q.empty()) {
    const LocId l = q.front();
    q.pop();
    for (ActionId a = 0; a < kNumActions; ++a) {
      const LocId m = step(env, l, a);
      if (dist[m] < 0) {
        dist[m] = dist[l] + 1;
        q.push(m);
      }
    }
  }
  return dist;
}

}  // namespace eswm
