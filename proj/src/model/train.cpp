#include "eswm/model/train.h"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "eswm/model/model.h"

namespace eswm {

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.iterations < 1) fail("train.iterations must be >= 1");
  if (c.batch_size < 1) fail("train.batch_size must be >= 1");
  if (!(c.base_lr > 0.0)) fail("train.base_lr must be > 0");
  if (c.weight_decay < 0.0) fail("train.weight_decay must be >= 0");
  if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0) {
    fail("train.beta1/beta2 must lie in [0, 1)");
  }
  if (c.grad_clip < 0.0) fail("train.grad_clip must be >= 0");
  if (c.log_every < 1) fail("train.log_every must be >= 1");
  if (c.checkpoint_every < 0) fail("train.checkpoint_every must be >= 0");
  validate(c.env);
}

double cosine_lr(double base_lr, int iteration, int iterations) {
  const double progress = std::min(1.0, static_cast<double>(iteration) / iterations);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<TrainingSample> sample_batch(const TrainConfig& cfg, int iteration) {
  std::vector<TrainingSample> batch;
  batch.reserve(cfg.batch_size);
  const std::uint64_t env_root = derive_seed(cfg.seed, "env");
  const std::uint64_t bank_root = derive_seed(cfg.seed, "bank");
  const std::uint64_t query_root = derive_seed(cfg.seed, "query");
  for (int b = 0; b < cfg.batch_size; ++b) {
    const std::uint64_t index =
        static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(cfg.batch_size) + b;
    TrainingSample s;
    s.env = generate_environment(cfg.env, derive_seed(env_root, index));
    s.bank = sample_memory_bank(s.env, derive_seed(bank_root, index));
    s.query = sample_query(s.env, s.bank, cfg.mix, derive_seed(query_root, index));
    batch.push_back(std::move(s));
  }
  return batch;
}

AdamW::AdamW(ParameterSet<float>& params, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), wd_(cfg.weight_decay) {
  for (auto& [name, p] : params) {
    slots_.push_back({&p, Mat<float>::Zero(p.value.rows(), p.value.cols()),
                      Mat<float>::Zero(p.value.rows(), p.value.cols()), p.value.cols() > 1});
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr / c1);
  const float vscale = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  for (Slot& s : slots_) {
    auto& g = s.p->grad;
    s.m = b1 * s.m + (1.0f - b1) * g;
    s.v = b2 * s.v + (1.0f - b2) * g.cwiseProduct(g);
    if (s.decay && wd_ > 0.0) s.p->value *= static_cast<float>(1.0 - lr * wd_);
    s.p->value.array() -= step * s.m.array() / ((s.v.array() * vscale).sqrt() + eps);
  }
}

void train(Network<float>& net, const TrainConfig& cfg, const TrainHooks& hooks) {
  validate(cfg);
  check_compatible(net.config(), cfg.env);
  const ModelConfig& mcfg = net.config();
  AdamW opt(net.params(), cfg);
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const auto t0 = std::chrono::steady_clock::now();

  TrainRecord window;
  int window_iters = 0;
  int hits[3] = {0, 0, 0}, counts[3] = {0, 0, 0};

  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<TrainingSample> samples = sample_batch(cfg, it);
    std::vector<ModelInput> inputs;
    std::vector<HeadTargets> targets;
    std::vector<LossWeights> weights;
    for (const TrainingSample& s : samples) {
      inputs.push_back({s.bank.transitions, s.query.transition, s.query.mask});
      targets.push_back(make_targets(mcfg, s.query));
      weights.push_back(scoped_weights(mcfg, cfg.loss_weights, s.query.mask));
    }
    net.params().zero_grad();
    const ForwardResult<float> out = net.forward(inputs, true, &dropout_rng);
    Mat<float> ds, da, de;
    const LossBreakdown lb = net.loss(out, targets, weights, &ds, &da, &de);
    if (!std::isfinite(lb.total)) {
      throw std::runtime_error("non-finite loss at iteration " + std::to_string(it));
    }
    net.backward(out, ds, da, de);

    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& [_, p] : net.params()) sq += p.grad.cast<double>().squaredNorm();
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) {
        throw std::runtime_error("non-finite gradient at iteration " + std::to_string(it));
      }
      if (norm > cfg.grad_clip) {
        const float scale = static_cast<float>(cfg.grad_clip / norm);
        for (auto& [_, p] : net.params()) p.grad *= scale;
      }
    }
    const double lr = cosine_lr(cfg.base_lr, it, cfg.iterations);
    opt.step(lr);

    window.loss += lb.total;
    window.loss_source += lb.source;
    window.loss_action += lb.action;
    window.loss_end += lb.end;
    ++window_iters;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
      const Mask m = samples[i].query.mask;
      const int h = m == Mask::Source ? 0 : m == Mask::Action ? 1 : 2;
      const Prediction p = prediction_from_logits(mcfg, out, i, m);
      const int target = h == 0 ? targets[i].source : h == 1 ? targets[i].action : targets[i].end;
      hits[h] += p.top == target;
      ++counts[h];
    }

    const int done = it + 1;
    if (done % cfg.log_every == 0 || done == cfg.iterations) {
      TrainRecord r;
      r.iteration = done;
      r.loss = window.loss / window_iters;
      r.loss_source = window.loss_source / window_iters;
      r.loss_action = window.loss_action / window_iters;
      r.loss_end = window.loss_end / window_iters;
      r.acc_source = counts[0] ? static_cast<double>(hits[0]) / counts[0] : 0.0;
      r.acc_action = counts[1] ? static_cast<double>(hits[1]) / counts[1] : 0.0;
      r.acc_end = counts[2] ? static_cast<double>(hits[2]) / counts[2] : 0.0;
      r.lr = lr;
      r.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (hooks.on_record) hooks.on_record(r);
      window = {};
      window_iters = 0;
      std::fill(std::begin(hits), std::end(hits), 0);
      std::fill(std::begin(counts), std::end(counts), 0);
    }
    if (hooks.on_checkpoint &&
        ((cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) ||
         done == cfg.iterations)) {
      hooks.on_checkpoint(net, done);
    }
  }
}

}  // namespace eswm
