#include "eswm/model/network.h"

#include <cmath>
#include <stdexcept>

#include "encoders.h"
#include "ops.h"

namespace eswm {

template <typename T>
Network<T>::Network(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  validate(cfg_);
  Rng rng(derive_seed(init_seed, "init"));
  const int d = cfg_.embed_dim;
  if (cfg_.six_bit()) {
    const int chunk = d / 6;
    src_w_ = params_.add("embed.source.w", chunk, 1);
    src_b_ = params_.add("embed.source.b", chunk, 1);
    end_w_ = params_.add("embed.end.w", chunk, 1);
    end_b_ = params_.add("embed.end.b", chunk, 1);
    for (Param<T>* p : {src_w_, src_b_, end_w_, end_b_}) ops::init_uniform(*p, 1.0, rng);
  } else {
    src_w_ = params_.add("embed.source.w", d, cfg_.state_vocab);
    src_b_ = params_.add("embed.source.b", d, 1);
    end_w_ = params_.add("embed.end.w", d, cfg_.state_vocab);
    end_b_ = params_.add("embed.end.b", d, 1);
    for (Param<T>* p : {src_w_, src_b_, end_w_, end_b_}) ops::init_uniform(*p, cfg_.state_vocab, rng);
  }
  act_w_ = params_.add("embed.action.w", d, cfg_.action_vocab);
  act_b_ = params_.add("embed.action.b", d, 1);
  ops::init_uniform(*act_w_, cfg_.action_vocab, rng);
  ops::init_uniform(*act_b_, cfg_.action_vocab, rng);
  mask_src_ = params_.add("embed.mask.source", d, 1);
  mask_act_ = params_.add("embed.mask.action", d, 1);
  mask_end_ = params_.add("embed.mask.end", d, 1);
  for (Param<T>* p : {mask_src_, mask_act_, mask_end_}) ops::init_normal(*p, 0.5, rng);

  encoder_ = cfg_.arch == Arch::Transformer ? make_transformer_encoder<T>(cfg_, params_, rng)
                                            : make_lstm_encoder<T>(cfg_, params_, rng);

  norm_g_ = params_.add("head.norm.gamma", d, 1);
  norm_b_ = params_.add("head.norm.beta", d, 1);
  norm_g_->value.setOnes();
  head_src_w_ = params_.add("head.source.w", cfg_.state_classes(), d);
  head_src_b_ = params_.add("head.source.b", cfg_.state_classes(), 1);
  head_act_w_ = params_.add("head.action.w", cfg_.action_classes(), d);
  head_act_b_ = params_.add("head.action.b", cfg_.action_classes(), 1);
  head_end_w_ = params_.add("head.end.w", cfg_.state_classes(), d);
  head_end_b_ = params_.add("head.end.b", cfg_.state_classes(), 1);
  for (Param<T>* p : {head_src_w_, head_act_w_, head_end_w_}) ops::init_uniform(*p, d, rng);
}

template <typename T>
void Network<T>::embed_state(const Param<T>& w, const Param<T>& b, StateId s,
                             Eigen::Ref<Vec<T>> out) const {
  if (s < 0 || s >= cfg_.state_vocab) {
    throw std::out_of_range("state id " + std::to_string(s) + " outside the vocabulary");
  }
  if (cfg_.six_bit()) {
    const int chunk = cfg_.embed_dim / 6;
    for (int k = 0; k < 6; ++k) {
      const T bit = static_cast<T>((s >> k) & 1);
      out.segment(k * chunk, chunk) = w.value.col(0) * bit + b.value.col(0);
    }
  } else {
    out = w.value.col(s) + b.value.col(0);
  }
}

template <typename T>
void Network<T>::embed_state_backward(Param<T>& w, Param<T>& b, StateId s,
                                      const Eigen::Ref<const Vec<T>>& d) const {
  if (cfg_.six_bit()) {
    const int chunk = cfg_.embed_dim / 6;
    for (int k = 0; k < 6; ++k) {
      const T bit = static_cast<T>((s >> k) & 1);
      w.grad.col(0) += d.segment(k * chunk, chunk) * bit;
      b.grad.col(0) += d.segment(k * chunk, chunk);
    }
  } else {
    w.grad.col(s) += d;
    b.grad.col(0) += d;
  }
}

template <typename T>
Vec<T> Network<T>::embed_transition(const Transition& t, Mask mask) const {
  const int d = cfg_.embed_dim;
  Vec<T> src(d), act(d), end(d);
  if (mask == Mask::Source) src = mask_src_->value.col(0);
  else embed_state(*src_w_, *src_b_, t.source, src);
  if (mask == Mask::End) end = mask_end_->value.col(0);
  else embed_state(*end_w_, *end_b_, t.end, end);
  if (mask == Mask::Action) {
    act = mask_act_->value.col(0);
  } else {
    if (t.action < 0 || t.action >= cfg_.action_vocab) {
      throw std::out_of_range("action id outside the vocabulary");
    }
    act = act_w_->value.col(t.action) + act_b_->value.col(0);
  }
  return (src + act + end) / T(3);
}

template <typename T>
ForwardResult<T> Network<T>::forward(std::span<const ModelInput> batch, bool train,
                                     Rng* dropout_rng) const {
  ForwardResult<T> out;
  out.inputs.assign(batch.begin(), batch.end());
  out.layout.offsets.assign(1, 0);
  for (const ModelInput& in : batch) {
    out.layout.offsets.push_back(out.layout.offsets.back() + static_cast<int>(in.bank.size()) + 1);
  }
  Mat<T> tokens(cfg_.embed_dim, out.layout.tokens());
  for (int i = 0; i < out.layout.batch(); ++i) {
    const ModelInput& in = batch[i];
    int col = out.layout.begin(i);
    for (const Transition& t : in.bank) tokens.col(col++) = embed_transition(t, Mask::None);
    tokens.col(col) = embed_transition(in.query, in.mask);
  }

  auto enc = encoder_->forward(tokens, out.layout, train, dropout_rng);
  out.layer_acts = std::move(enc.layer_acts);
  out.encoder_cache = std::move(enc.cache);
  ops::LayerNormCache<T> ln;
  out.final_norm = ops::layer_norm(enc.query_repr, *norm_g_, *norm_b_, &ln);
  out.final_xhat = std::move(ln.xhat);
  out.final_rstd = std::move(ln.rstd);

  out.source_logits = head_src_w_->value * out.final_norm;
  out.source_logits.colwise() += head_src_b_->value.col(0);
  out.action_logits = head_act_w_->value * out.final_norm;
  out.action_logits.colwise() += head_act_b_->value.col(0);
  out.end_logits = head_end_w_->value * out.final_norm;
  out.end_logits.colwise() += head_end_b_->value.col(0);
  return out;
}

namespace {

// Cross-entropy of one column; writes (softmax - onehot) * scale into grad.
template <typename T>
double softmax_xent(const Eigen::Ref<const Vec<T>>& logits, int target, double scale,
                    Eigen::Ref<Vec<T>> grad, bool want_grad) {
  const T m = logits.maxCoeff();
  Vec<T> e = (logits.array() - m).exp().matrix();
  const T z = e.sum();
  const double loss = -(static_cast<double>(logits(target) - m) - std::log(static_cast<double>(z)));
  if (want_grad) {
    grad = e / z * static_cast<T>(scale);
    grad(target) -= static_cast<T>(scale);
  }
  return loss;
}

// Mean binary cross-entropy over six bits of `target`.
template <typename T>
double bits_xent(const Eigen::Ref<const Vec<T>>& logits, int target, double scale,
                 Eigen::Ref<Vec<T>> grad, bool want_grad) {
  double loss = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double z = static_cast<double>(logits(k));
    const double y = (target >> k) & 1;
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (want_grad) {
      const double sig = 1.0 / (1.0 + std::exp(-z));
      grad(k) = static_cast<T>((sig - y) * scale / 6.0);
    }
  }
  return loss / 6.0;
}

}  // namespace

template <typename T>
LossBreakdown Network<T>::loss(const ForwardResult<T>& out, std::span<const HeadTargets> targets,
                               std::span<const LossWeights> weights, Mat<T>* d_source,
                               Mat<T>* d_action, Mat<T>* d_end) const {
  const int batch = out.layout.batch();
  if (static_cast<int>(targets.size()) != batch || static_cast<int>(weights.size()) != batch) {
    throw std::invalid_argument("loss: targets/weights do not match the batch");
  }
  const bool want = d_source && d_action && d_end;
  if (want) {
    d_source->setZero(out.source_logits.rows(), batch);
    d_action->setZero(out.action_logits.rows(), batch);
    d_end->setZero(out.end_logits.rows(), batch);
  }
  Vec<T> scratch_s(out.source_logits.rows()), scratch_a(out.action_logits.rows()),
      scratch_e(out.end_logits.rows());
  LossBreakdown lb;
  for (int i = 0; i < batch; ++i) {
    const HeadTargets& t = targets[i];
    const LossWeights& w = weights[i];
    const double inv = 1.0 / batch;
    auto state_loss = [&](const Mat<T>& logits, int target, double weight, Mat<T>* grad,
                          Vec<T>& scratch) {
      const double l = cfg_.six_bit()
                           ? bits_xent<T>(logits.col(i), target, weight * inv, scratch, want)
                           : softmax_xent<T>(logits.col(i), target, weight * inv, scratch, want);
      if (want) grad->col(i) = scratch;
      return l;
    };
    const double ls = state_loss(out.source_logits, t.source, w.source, d_source, scratch_s);
    const double le = state_loss(out.end_logits, t.end, w.end, d_end, scratch_e);
    const double la =
        softmax_xent<T>(out.action_logits.col(i), t.action, w.action * inv, scratch_a, want);
    if (want) d_action->col(i) = scratch_a;
    lb.source += ls * inv;
    lb.action += la * inv;
    lb.end += le * inv;
    lb.total += (w.source * ls + w.action * la + w.end * le) * inv;
  }
  return lb;
}

template <typename T>
void Network<T>::backward(const ForwardResult<T>& out, const Mat<T>& d_source,
                          const Mat<T>& d_action, const Mat<T>& d_end) {
  head_src_w_->grad.noalias() += d_source * out.final_norm.transpose();
  head_src_b_->grad.col(0) += d_source.rowwise().sum();
  head_act_w_->grad.noalias() += d_action * out.final_norm.transpose();
  head_act_b_->grad.col(0) += d_action.rowwise().sum();
  head_end_w_->grad.noalias() += d_end * out.final_norm.transpose();
  head_end_b_->grad.col(0) += d_end.rowwise().sum();

  Mat<T> dz = head_src_w_->value.transpose() * d_source;
  dz.noalias() += head_act_w_->value.transpose() * d_action;
  dz.noalias() += head_end_w_->value.transpose() * d_end;
  ops::LayerNormCache<T> ln{out.final_xhat, out.final_rstd};
  const Mat<T> d_repr = ops::layer_norm_backward(dz, ln, *norm_g_, *norm_b_);
  const Mat<T> d_tokens = encoder_->backward(*out.encoder_cache, d_repr);

  const T third = T(1) / T(3);
  for (int i = 0; i < out.layout.batch(); ++i) {
    const ModelInput& in = out.inputs[i];
    int col = out.layout.begin(i);
    auto token_backward = [&](const Transition& t, Mask mask, const Vec<T>& d) {
      if (mask == Mask::Source) mask_src_->grad.col(0) += d;
      else embed_state_backward(*src_w_, *src_b_, t.source, d);
      if (mask == Mask::End) mask_end_->grad.col(0) += d;
      else embed_state_backward(*end_w_, *end_b_, t.end, d);
      if (mask == Mask::Action) {
        mask_act_->grad.col(0) += d;
      } else {
        act_w_->grad.col(t.action) += d;
        act_b_->grad.col(0) += d;
      }
    };
    for (const Transition& t : in.bank) {
      token_backward(t, Mask::None, Vec<T>(d_tokens.col(col++) * third));
    }
    token_backward(in.query, in.mask, Vec<T>(d_tokens.col(col) * third));
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace eswm
