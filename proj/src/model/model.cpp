#include "eswm/model/model.h"

#include <algorithm>
#include <cmath>

namespace eswm {

void finalize_prediction(Prediction& p, int idk_class) {
  p.top = static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  p.max_prob = p.probs[p.top];
  p.idk = p.top == idk_class;
  p.entropy = 0.0;
  for (double x : p.probs)
    if (x > 0.0) p.entropy -= x * std::log(x);
}

HeadTargets make_targets(const ModelConfig& cfg, const Query& q) {
  HeadTargets t{q.transition.source, q.transition.action, q.transition.end};
  if (q.kind == QueryKind::Unsolvable && cfg.idk_enabled) {
    switch (q.mask) {
      case Mask::Source: t.source = cfg.state_idk_class(); break;
      case Mask::Action: t.action = cfg.action_idk_class(); break;
      case Mask::End: t.end = cfg.state_idk_class(); break;
      case Mask::None: break;
    }
  }
  return t;
}

LossWeights scoped_weights(const ModelConfig& cfg, const LossWeights& base, Mask mask) {
  if (cfg.loss_scope == LossScope::AllHeads) return base;
  return {mask == Mask::Source ? base.source : 0.0, mask == Mask::Action ? base.action : 0.0,
          mask == Mask::End ? base.end : 0.0};
}

Prediction prediction_from_logits(const ModelConfig& cfg, const ForwardResult<float>& out,
                                  int sample, Mask mask) {
  Prediction p;
  p.mask = mask;
  if (mask == Mask::Action) {
    const auto col = out.action_logits.col(sample).cast<double>();
    const double m = col.maxCoeff();
    double z = 0.0;
    p.probs.resize(col.size());
    for (Eigen::Index k = 0; k < col.size(); ++k) z += p.probs[k] = std::exp(col(k) - m);
    for (double& x : p.probs) x /= z;
    finalize_prediction(p, cfg.idk_enabled ? cfg.action_idk_class() : -1);
    return p;
  }
  const Mat<float>& logits = mask == Mask::Source ? out.source_logits : out.end_logits;
  const auto col = logits.col(sample).cast<double>();
  if (cfg.six_bit()) {
    // Independent bits; the joint is their product.
    double bit_p[6];
    for (int k = 0; k < 6; ++k) bit_p[k] = 1.0 / (1.0 + std::exp(-col(k)));
    p.probs.assign(cfg.state_vocab, 0.0);
    double z = 0.0;
    for (int s = 0; s < cfg.state_vocab; ++s) {
      double prob = 1.0;
      for (int k = 0; k < 6; ++k) prob *= ((s >> k) & 1) ? bit_p[k] : 1.0 - bit_p[k];
      z += p.probs[s] = prob;
    }
    for (double& x : p.probs) x /= z;
    finalize_prediction(p, -1);
    int decided = 0;
    for (int k = 0; k < 6; ++k) decided |= (bit_p[k] > 0.5 ? 1 : 0) << k;
    if (decided < cfg.state_vocab) p.top = decided;
    p.max_prob = p.probs[p.top];
    return p;
  }
  const double m = col.maxCoeff();
  double z = 0.0;
  p.probs.resize(col.size());
  for (Eigen::Index k = 0; k < col.size(); ++k) z += p.probs[k] = std::exp(col(k) - m);
  for (double& x : p.probs) x /= z;
  finalize_prediction(p, cfg.idk_enabled ? cfg.state_idk_class() : -1);
  return p;
}

std::vector<Prediction> ModelPredictor::predict(const MemoryBank& bank,
                                                std::span<const MaskedQuery> queries,
                                                bool capture_activations) const {
  std::vector<Prediction> out;
  out.reserve(queries.size());
  const std::span<const Transition> memories(bank.transitions);
  for (std::size_t begin = 0; begin < queries.size(); begin += max_batch_) {
    const std::size_t end = std::min(queries.size(), begin + static_cast<std::size_t>(max_batch_));
    std::vector<ModelInput> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back({memories, queries[i].transition, queries[i].mask});
    }
    const ForwardResult<float> fwd = net_.forward(batch);
    for (std::size_t i = begin; i < end; ++i) {
      const int col = static_cast<int>(i - begin);
      Prediction p = prediction_from_logits(net_.config(), fwd, col, queries[i].mask);
      if (capture_activations) {
        for (const Mat<float>& layer : fwd.layer_acts) p.activations.push_back(layer.col(col));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace eswm
