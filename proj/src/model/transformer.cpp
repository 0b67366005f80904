#include <cmath>
#include <string>

#include "encoders.h"
#include "ops.h"

namespace eswm {
namespace {

template <typename T>
struct LayerParams {
  Param<T>* ln1_g;
  Param<T>* ln1_b;
  Param<T>* wq;
  Param<T>* bq;
  Param<T>* wk;
  Param<T>* bk;
  Param<T>* wv;
  Param<T>* bv;
  Param<T>* wo;
  Param<T>* bo;
  Param<T>* ln2_g;
  Param<T>* ln2_b;
  Param<T>* w1;
  Param<T>* b1;
  Param<T>* w2;
  Param<T>* b2;
};

template <typename T>
struct LayerCache {
  bool query_only = false;
  std::vector<int> qcols;  // query-only: X column of each sample's query
  Mat<T> x;
  ops::LayerNormCache<T> ln1;
  Mat<T> z1;
  Mat<T> zq;  // query-only: gathered z1 columns
  Mat<T> q, k, v;
  std::vector<Mat<T>> probs;  // [sample * heads + head], nk x nq
  Mat<T> o;
  Mat<T> drop1;
  Mat<T> h;
  ops::LayerNormCache<T> ln2;
  Mat<T> z2;
  Mat<T> u;
  Mat<T> r;
  Mat<T> drop2;
};

template <typename T>
struct TransformerCache : EncoderCache<T> {
  BatchLayout layout;
  std::vector<LayerCache<T>> layers;
};

template <typename T>
Mat<T> gather_columns(const Mat<T>& x, const std::vector<int>& cols) {
  Mat<T> out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(i) = x.col(cols[i]);
  return out;
}

template <typename T>
class TransformerEncoder final : public SequenceEncoder<T> {
 public:
  using typename SequenceEncoder<T>::Output;

  TransformerEncoder(const ModelConfig& cfg, ParameterSet<T>& params, Rng& rng)
      : d_(cfg.embed_dim), heads_(cfg.heads), ff_(cfg.ff_dim), dropout_(cfg.dropout) {
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      LayerParams<T> lp;
      lp.ln1_g = params.add(p + "norm1.gamma", d_, 1);
      lp.ln1_b = params.add(p + "norm1.beta", d_, 1);
      lp.wq = params.add(p + "attn.wq", d_, d_);
      lp.bq = params.add(p + "attn.bq", d_, 1);
      lp.wk = params.add(p + "attn.wk", d_, d_);
      lp.bk = params.add(p + "attn.bk", d_, 1);
      lp.wv = params.add(p + "attn.wv", d_, d_);
      lp.bv = params.add(p + "attn.bv", d_, 1);
      lp.wo = params.add(p + "attn.wo", d_, d_);
      lp.bo = params.add(p + "attn.bo", d_, 1);
      lp.ln2_g = params.add(p + "norm2.gamma", d_, 1);
      lp.ln2_b = params.add(p + "norm2.beta", d_, 1);
      lp.w1 = params.add(p + "ff.w1", ff_, d_);
      lp.b1 = params.add(p + "ff.b1", ff_, 1);
      lp.w2 = params.add(p + "ff.w2", d_, ff_);
      lp.b2 = params.add(p + "ff.b2", d_, 1);
      lp.ln1_g->value.setOnes();
      lp.ln2_g->value.setOnes();
      for (Param<T>* w : {lp.wq, lp.wk, lp.wv, lp.wo, lp.w1}) ops::init_uniform(*w, d_, rng);
      ops::init_uniform(*lp.w2, ff_, rng);
      layers_.push_back(lp);
    }
  }

  Output forward(const Mat<T>& tokens, const BatchLayout& layout, bool train,
                 Rng* rng) const override {
    auto cache = std::make_unique<TransformerCache<T>>();
    cache->layout = layout;
    Output out;
    Mat<T> x = tokens;
    std::vector<int> qcols(layout.batch());
    for (int i = 0; i < layout.batch(); ++i) qcols[i] = layout.query(i);

    for (std::size_t l = 0; l < layers_.size(); ++l) {
      LayerCache<T> c;
      c.query_only = (l + 1 == layers_.size());
      if (c.query_only) c.qcols = qcols;
      Mat<T> y = layer_forward(layers_[l], x, layout, c, train, rng);
      out.layer_acts.push_back(c.query_only ? y : gather_columns(y, qcols));
      cache->layers.push_back(std::move(c));
      x = std::move(y);
    }
    out.query_repr = out.layer_acts.back();
    out.cache = std::move(cache);
    return out;
  }

  Mat<T> backward(const EncoderCache<T>& base, const Mat<T>& d_query) override {
    const auto& cache = static_cast<const TransformerCache<T>&>(base);
    Mat<T> dy = d_query;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      dy = layer_backward(layers_[l], cache.layers[l], cache.layout, dy);
    }
    return dy;
  }

 private:
  int d_, heads_, ff_;
  double dropout_;
  std::vector<LayerParams<T>> layers_;

  int head_dim() const { return d_ / heads_; }

  // Query range (columns of q/o) for sample i.
  std::pair<int, int> query_range(const LayerCache<T>& c, const BatchLayout& layout,
                                  int i) const {
    if (c.query_only) return {i, 1};
    return {layout.begin(i), layout.end(i) - layout.begin(i)};
  }

  Mat<T> layer_forward(const LayerParams<T>& p, const Mat<T>& x, const BatchLayout& layout,
                       LayerCache<T>& c, bool train, Rng* rng) const {
    const int dh = head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    c.x = x;
    c.z1 = ops::layer_norm(x, *p.ln1_g, *p.ln1_b, &c.ln1);
    if (c.query_only) c.zq = gather_columns(c.z1, c.qcols);
    const Mat<T>& zq = c.query_only ? c.zq : c.z1;

    c.q.noalias() = p.wq->value * zq;
    c.q.colwise() += p.bq->value.col(0);
    c.k.noalias() = p.wk->value * c.z1;
    c.k.colwise() += p.bk->value.col(0);
    c.v.noalias() = p.wv->value * c.z1;
    c.v.colwise() += p.bv->value.col(0);

    c.o = Mat<T>::Zero(d_, c.q.cols());
    c.probs.resize(static_cast<std::size_t>(layout.batch()) * heads_);
    for (int i = 0; i < layout.batch(); ++i) {
      const int k0 = layout.begin(i), nk = layout.end(i) - k0;
      const auto [q0, nq] = query_range(c, layout, i);
      for (int h = 0; h < heads_; ++h) {
        Mat<T>& pr = c.probs[static_cast<std::size_t>(i) * heads_ + h];
        pr.noalias() = c.k.block(h * dh, k0, dh, nk).transpose() * c.q.block(h * dh, q0, dh, nq);
        pr *= scale;
        ops::softmax_columns<T>(pr);
        c.o.block(h * dh, q0, dh, nq).noalias() = c.v.block(h * dh, k0, dh, nk) * pr;
      }
    }

    Mat<T> attn = p.wo->value * c.o;
    attn.colwise() += p.bo->value.col(0);
    c.drop1 = ops::dropout_mask<T>(attn.rows(), attn.cols(), dropout_, train, rng);
    ops::apply_mask(attn, c.drop1);
    c.h = c.query_only ? gather_columns(x, c.qcols) : x;
    c.h += attn;

    c.z2 = ops::layer_norm(c.h, *p.ln2_g, *p.ln2_b, &c.ln2);
    c.u.noalias() = p.w1->value * c.z2;
    c.u.colwise() += p.b1->value.col(0);
    c.r = c.u.cwiseMax(T(0));
    Mat<T> f = p.w2->value * c.r;
    f.colwise() += p.b2->value.col(0);
    c.drop2 = ops::dropout_mask<T>(f.rows(), f.cols(), dropout_, train, rng);
    ops::apply_mask(f, c.drop2);
    return c.h + f;
  }

  Mat<T> layer_backward(LayerParams<T>& p, const LayerCache<T>& c, const BatchLayout& layout,
                        const Mat<T>& dy) {
    const int dh = head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    // Feed-forward block.
    Mat<T> df = dy;
    ops::apply_mask(df, c.drop2);
    p.w2->grad.noalias() += df * c.r.transpose();
    p.b2->grad.col(0) += df.rowwise().sum();
    Mat<T> du = p.w2->value.transpose() * df;
    du.array() *= (c.u.array() > T(0)).template cast<T>();
    p.w1->grad.noalias() += du * c.z2.transpose();
    p.b1->grad.col(0) += du.rowwise().sum();
    const Mat<T> dz2 = p.w1->value.transpose() * du;
    Mat<T> dh_res = dy + ops::layer_norm_backward(dz2, c.ln2, *p.ln2_g, *p.ln2_b);

    // Attention block.
    Mat<T> dattn = dh_res;
    ops::apply_mask(dattn, c.drop1);
    p.wo->grad.noalias() += dattn * c.o.transpose();
    p.bo->grad.col(0) += dattn.rowwise().sum();
    const Mat<T> d_o = p.wo->value.transpose() * dattn;

    Mat<T> dq = Mat<T>::Zero(c.q.rows(), c.q.cols());
    Mat<T> dk = Mat<T>::Zero(c.k.rows(), c.k.cols());
    Mat<T> dv = Mat<T>::Zero(c.v.rows(), c.v.cols());
    for (int i = 0; i < layout.batch(); ++i) {
      const int k0 = layout.begin(i), nk = layout.end(i) - k0;
      const auto [q0, nq] = query_range(c, layout, i);
      for (int h = 0; h < heads_; ++h) {
        const Mat<T>& pr = c.probs[static_cast<std::size_t>(i) * heads_ + h];
        const auto d_oh = d_o.block(h * dh, q0, dh, nq);
        dv.block(h * dh, k0, dh, nk).noalias() += d_oh * pr.transpose();
        Mat<T> dp = c.v.block(h * dh, k0, dh, nk).transpose() * d_oh;
        // Softmax Jacobian, column by column.
        const Eigen::Matrix<T, 1, Eigen::Dynamic> inner =
            (pr.array() * dp.array()).colwise().sum();
        Mat<T> ds = (pr.array() * (dp.array().rowwise() - inner.array())).matrix();
        ds *= scale;
        dq.block(h * dh, q0, dh, nq).noalias() += c.k.block(h * dh, k0, dh, nk) * ds;
        dk.block(h * dh, k0, dh, nk).noalias() +=
            c.q.block(h * dh, q0, dh, nq) * ds.transpose();
      }
    }

    const Mat<T>& zq = c.query_only ? c.zq : c.z1;
    p.wq->grad.noalias() += dq * zq.transpose();
    p.bq->grad.col(0) += dq.rowwise().sum();
    p.wk->grad.noalias() += dk * c.z1.transpose();
    p.bk->grad.col(0) += dk.rowwise().sum();
    p.wv->grad.noalias() += dv * c.z1.transpose();
    p.bv->grad.col(0) += dv.rowwise().sum();

    Mat<T> dz1 = p.wk->value.transpose() * dk;
    dz1.noalias() += p.wv->value.transpose() * dv;
    const Mat<T> dzq = p.wq->value.transpose() * dq;
    if (c.query_only) {
      for (std::size_t i = 0; i < c.qcols.size(); ++i) dz1.col(c.qcols[i]) += dzq.col(i);
    } else {
      dz1 += dzq;
    }

    Mat<T> dx = ops::layer_norm_backward(dz1, c.ln1, *p.ln1_g, *p.ln1_b);
    if (c.query_only) {
      for (std::size_t i = 0; i < c.qcols.size(); ++i) dx.col(c.qcols[i]) += dh_res.col(i);
    } else {
      dx += dh_res;
    }
    return dx;
  }
};

}  // namespace

template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_transformer_encoder(const ModelConfig& cfg,
                                                             ParameterSet<T>& params,
                                                             Rng& init_rng) {
  return std::make_unique<TransformerEncoder<T>>(cfg, params, init_rng);
}

template std::unique_ptr<SequenceEncoder<float>> make_transformer_encoder(
    const ModelConfig&, ParameterSet<float>&, Rng&);
template std::unique_ptr<SequenceEncoder<double>> make_transformer_encoder(
    const ModelConfig&, ParameterSet<double>&, Rng&);

}  // namespace eswm
