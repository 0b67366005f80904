#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "eswm/episodic.h"
#include "eswm/model/config.h"
#include "eswm/model/params.h"
#include "eswm/rng.h"

namespace eswm {

/// One (memory bank, masked query) pair.
struct ModelInput {
  std::span<const Transition> bank;
  Transition query;
  Mask mask = Mask::End;
};

/// Class targets for the three heads. For six-bit states the state target is
/// the state id and is expanded to bits by the loss.
struct HeadTargets {
  int source = 0;
  int action = 0;
  int end = 0;
};

struct LossWeights {
  double source = 1.0;
  double action = 1.0;
  double end = 1.0;
};

/// Token layout of a batch: sample i occupies columns [offsets[i], offsets[i+1])
/// and its query is the last of them.
struct BatchLayout {
  std::vector<int> offsets;
  int batch() const { return static_cast<int>(offsets.size()) - 1; }
  int tokens() const { return offsets.back(); }
  int begin(int i) const { return offsets[i]; }
  int end(int i) const { return offsets[i + 1]; }
  int query(int i) const { return offsets[i + 1] - 1; }
};

template <typename T>
struct EncoderCache {
  virtual ~EncoderCache() = default;
};

/// Maps a token sequence to a representation at each sample's query position.
/// Implementations: Transformer (order-free), LSTM (left to right). New
/// sequence models plug in here.
template <typename T>
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;

  struct Output {
    Mat<T> query_repr;               // d x B
    std::vector<Mat<T>> layer_acts;  // per layer, d x B
    std::unique_ptr<EncoderCache<T>> cache;
  };

  /// `dropout_rng` may be null when not training.
  virtual Output forward(const Mat<T>& tokens, const BatchLayout& layout, bool train,
                         Rng* dropout_rng) const = 0;
  /// Accumulates parameter gradients; returns d loss / d tokens.
  virtual Mat<T> backward(const EncoderCache<T>& cache, const Mat<T>& d_query_repr) = 0;
};

template <typename T>
struct ForwardResult {
  Mat<T> source_logits;  // C_s x B
  Mat<T> action_logits;  // C_a x B
  Mat<T> end_logits;     // C_s x B
  std::vector<Mat<T>> layer_acts;

  // Backward state.
  BatchLayout layout;
  std::vector<ModelInput> inputs;
  Mat<T> final_xhat;
  Vec<T> final_rstd;
  Mat<T> final_norm;
  std::unique_ptr<EncoderCache<T>> encoder_cache;
};

struct LossBreakdown {
  double total = 0.0;
  double source = 0.0;
  double action = 0.0;
  double end = 0.0;
};

/// Embedding, sequence encoder and three linear read-out heads.
template <typename T>
class Network {
 public:
  Network(const ModelConfig& cfg, std::uint64_t init_seed);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Token for one transition. The masked component is replaced by its
  /// learned mask vector; the three component embeddings are averaged.
  /// Throws std::out_of_range for components outside the vocabulary.
  Vec<T> embed_transition(const Transition& t, Mask mask) const;

  ForwardResult<T> forward(std::span<const ModelInput> batch, bool train = false,
                           Rng* dropout_rng = nullptr) const;

  /// Mean over the batch of the weighted head losses. Fills d_logits for
  /// backward when requested.
  LossBreakdown loss(const ForwardResult<T>& out, std::span<const HeadTargets> targets,
                     std::span<const LossWeights> weights, Mat<T>* d_source = nullptr,
                     Mat<T>* d_action = nullptr, Mat<T>* d_end = nullptr) const;

  /// Accumulates gradients into params().
  void backward(const ForwardResult<T>& out, const Mat<T>& d_source,
                const Mat<T>& d_action, const Mat<T>& d_end);

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::unique_ptr<SequenceEncoder<T>> encoder_;

  Param<T>* src_w_;
  Param<T>* src_b_;
  Param<T>* act_w_;
  Param<T>* act_b_;
  Param<T>* end_w_;
  Param<T>* end_b_;
  Param<T>* mask_src_;
  Param<T>* mask_act_;
  Param<T>* mask_end_;
  Param<T>* norm_g_;
  Param<T>* norm_b_;
  Param<T>* head_src_w_;
  Param<T>* head_src_b_;
  Param<T>* head_act_w_;
  Param<T>* head_act_b_;
  Param<T>* head_end_w_;
  Param<T>* head_end_b_;

  void embed_state(const Param<T>& w, const Param<T>& b, StateId s,
                   Eigen::Ref<Vec<T>> out) const;
  void embed_state_backward(Param<T>& w, Param<T>& b, StateId s,
                            const Eigen::Ref<const Vec<T>>& d) const;
};

/// Per-layer activations at the query position (layer index 0-based).
template <typename T>
Vec<T> query_activation(const ForwardResult<T>& out, int layer, int sample) {
  return out.layer_acts.at(layer).col(sample);
}

extern template class Network<float>;
extern template class Network<double>;

}  // namespace eswm
