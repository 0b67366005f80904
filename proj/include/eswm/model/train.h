#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "eswm/episodic.h"
#include "eswm/model/network.h"

namespace eswm {

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 32;
  double base_lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global norm; 0 disables
  std::uint64_t seed = 1;
  EnvConfig env = EnvConfig::random_wall(2);
  QueryMix mix = QueryMix::random_wall();
  LossWeights loss_weights;
  int log_every = 100;
  int checkpoint_every = 0;  // 0: only at the end
};

void validate(const TrainConfig& cfg);

/// Cosine decay from base_lr at iteration 0 to 0 at `iterations`.
double cosine_lr(double base_lr, int iteration, int iterations);

/// One meta-training sample: a fresh environment, bank and query.
struct TrainingSample {
  Environment env;
  MemoryBank bank;
  Query query;
};

/// Batch content is a pure function of (seed, iteration).
std::vector<TrainingSample> sample_batch(const TrainConfig& cfg, int iteration);

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;
  double loss_source = 0.0;
  double loss_action = 0.0;
  double loss_end = 0.0;
  // Masked-head accuracy over the logging window, per masked component.
  double acc_source = 0.0;
  double acc_action = 0.0;
  double acc_end = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
};

/// Decoupled weight decay Adam. Decay applies to weight matrices only.
class AdamW {
 public:
  AdamW(ParameterSet<float>& params, const TrainConfig& cfg);
  void step(double lr);

 private:
  struct Slot {
    Param<float>* p;
    Mat<float> m, v;
    bool decay;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  /// Called with the number of completed iterations.
  std::function<void(const Network<float>&, int)> on_checkpoint;
};

/// Runs the meta-training loop on `net`. Throws std::runtime_error on a
/// non-finite loss.
void train(Network<float>& net, const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace eswm
