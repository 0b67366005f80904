#pragma once

#include "eswm/model/network.h"
#include "eswm/predictor.h"

namespace eswm {

/// Training targets for a query. The masked component of an unsolvable query
/// targets IDK on its head; every other component targets its true value.
HeadTargets make_targets(const ModelConfig& cfg, const Query& q);

/// Per-head loss weights after applying the configured loss scope.
LossWeights scoped_weights(const ModelConfig& cfg, const LossWeights& base, Mask mask);

/// Masked-head distribution from one column of a forward pass.
Prediction prediction_from_logits(const ModelConfig& cfg, const ForwardResult<float>& out,
                                  int sample, Mask mask);

/// Predictor backed by a network. Holds a reference; the network must
/// outlive it.
class ModelPredictor final : public Predictor {
 public:
  explicit ModelPredictor(const Network<float>& net, int max_batch = 64)
      : net_(net), max_batch_(max_batch) {}

  std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> queries,
                                  bool capture_activations = false) const override;
  int state_vocab() const override { return net_.config().state_vocab; }
  bool has_idk() const override { return net_.config().idk_enabled; }

  const Network<float>& network() const { return net_; }

 private:
  const Network<float>& net_;
  int max_batch_;
};

}  // namespace eswm
