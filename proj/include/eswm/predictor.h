#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "eswm/episodic.h"

namespace eswm {

/// A transition with one component hidden.
struct MaskedQuery {
  Transition transition;
  Mask mask = Mask::End;
};

/// Distribution over the masked component. For states the classes are the
/// state ids followed by IDK (when enabled); for actions, the six actions
/// followed by IDK.
struct Prediction {
  Mask mask = Mask::End;
  std::vector<double> probs;
  int top = 0;
  bool idk = false;
  double max_prob = 0.0;
  double entropy = 0.0;  // natural log
  /// Query-token activation after each layer; filled only on request.
  std::vector<Eigen::VectorXf> activations;
};

/// Fills top, idk, max_prob and entropy from probs. `idk_class` is -1 when
/// there is no IDK class.
void finalize_prediction(Prediction& p, int idk_class);

/// Anything that answers masked queries given a memory bank: the trained
/// network, or the oracles used as baselines and in tests.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<Prediction> predict(const MemoryBank& bank,
                                          std::span<const MaskedQuery> queries,
                                          bool capture_activations = false) const = 0;
  Prediction predict_one(const MemoryBank& bank, const MaskedQuery& q) const {
    return predict(bank, std::span<const MaskedQuery>(&q, 1)).front();
  }
  virtual int state_vocab() const = 0;
  virtual bool has_idk() const = 0;
  int state_idk_class() const { return has_idk() ? state_vocab() : -1; }
  int action_idk_class() const { return has_idk() ? kNumActions : -1; }
};

}  // namespace eswm
