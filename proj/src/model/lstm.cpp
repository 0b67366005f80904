#include <cmath>
#include <string>

#include "encoders.h"
#include "ops.h"

namespace eswm {
namespace {

template <typename T>
struct LstmLayerParams {
  Param<T>* wx;
  Param<T>* wh;
  Param<T>* b;
};

// Per sample, per layer.
template <typename T>
struct LstmStepCache {
  Mat<T> x;      // d_in x n
  Mat<T> gates;  // 4H x n, post-nonlinearity (i, f, g, o)
  Mat<T> c;      // H x n
  Mat<T> tanh_c; // H x n
  Mat<T> h;      // H x n
};

template <typename T>
struct LstmCache : EncoderCache<T> {
  BatchLayout layout;
  std::vector<std::vector<LstmStepCache<T>>> samples;  // [sample][layer]
};

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
class LstmEncoder final : public SequenceEncoder<T> {
 public:
  using typename SequenceEncoder<T>::Output;

  LstmEncoder(const ModelConfig& cfg, ParameterSet<T>& params, Rng& rng)
      : hidden_(cfg.embed_dim) {
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = "encoder.lstm" + std::to_string(l) + ".";
      LstmLayerParams<T> lp;
      lp.wx = params.add(p + "wx", 4 * hidden_, cfg.embed_dim);
      lp.wh = params.add(p + "wh", 4 * hidden_, hidden_);
      lp.b = params.add(p + "b", 4 * hidden_, 1);
      ops::init_uniform(*lp.wx, hidden_, rng);
      ops::init_uniform(*lp.wh, hidden_, rng);
      ops::init_uniform(*lp.b, hidden_, rng);
      layers_.push_back(lp);
    }
  }

  Output forward(const Mat<T>& tokens, const BatchLayout& layout, bool /*train*/,
                 Rng* /*rng*/) const override {
    auto cache = std::make_unique<LstmCache<T>>();
    cache->layout = layout;
    const int batch = layout.batch();
    Output out;
    out.layer_acts.assign(layers_.size(), Mat<T>(hidden_, batch));
    cache->samples.resize(batch);
    for (int i = 0; i < batch; ++i) {
      Mat<T> x = tokens.middleCols(layout.begin(i), layout.end(i) - layout.begin(i));
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        LstmStepCache<T> c = run_layer(layers_[l], x);
        out.layer_acts[l].col(i) = c.h.col(c.h.cols() - 1);
        x = c.h;
        cache->samples[i].push_back(std::move(c));
      }
    }
    out.query_repr = out.layer_acts.back();
    out.cache = std::move(cache);
    return out;
  }

  Mat<T> backward(const EncoderCache<T>& base, const Mat<T>& d_query) override {
    const auto& cache = static_cast<const LstmCache<T>&>(base);
    const BatchLayout& layout = cache.layout;
    Mat<T> d_tokens = Mat<T>::Zero(layers_[0].wx->value.cols(), layout.tokens());
    for (int i = 0; i < layout.batch(); ++i) {
      const int n = layout.end(i) - layout.begin(i);
      Mat<T> dh_seq = Mat<T>::Zero(hidden_, n);
      dh_seq.col(n - 1) = d_query.col(i);
      for (std::size_t l = layers_.size(); l-- > 0;) {
        dh_seq = layer_backward(layers_[l], cache.samples[i][l], dh_seq);
      }
      d_tokens.middleCols(layout.begin(i), n) = dh_seq;
    }
    return d_tokens;
  }

 private:
  int hidden_;
  std::vector<LstmLayerParams<T>> layers_;

  LstmStepCache<T> run_layer(const LstmLayerParams<T>& p, const Mat<T>& x) const {
    const int n = static_cast<int>(x.cols());
    const int H = hidden_;
    LstmStepCache<T> c;
    c.x = x;
    c.gates.noalias() = p.wx->value * x;
    c.gates.colwise() += p.b->value.col(0);
    c.c.resize(H, n);
    c.tanh_c.resize(H, n);
    c.h.resize(H, n);
    Vec<T> h_prev = Vec<T>::Zero(H), c_prev = Vec<T>::Zero(H);
    for (int t = 0; t < n; ++t) {
      auto a = c.gates.col(t);
      a.noalias() += p.wh->value * h_prev;
      for (int j = 0; j < H; ++j) {
        a(j) = sigmoid(a(j));
        a(H + j) = sigmoid(a(H + j));
        a(2 * H + j) = std::tanh(a(2 * H + j));
        a(3 * H + j) = sigmoid(a(3 * H + j));
      }
      c.c.col(t) = a.segment(H, H).cwiseProduct(c_prev) +
                   a.segment(0, H).cwiseProduct(a.segment(2 * H, H));
      c.tanh_c.col(t) = c.c.col(t).array().tanh().matrix();
      c.h.col(t) = a.segment(3 * H, H).cwiseProduct(c.tanh_c.col(t));
      h_prev = c.h.col(t);
      c_prev = c.c.col(t);
    }
    return c;
  }

  // Returns d loss / d x for the layer input sequence.
  Mat<T> layer_backward(LstmLayerParams<T>& p, const LstmStepCache<T>& c, const Mat<T>& dh_ext) {
    const int n = static_cast<int>(c.h.cols());
    const int H = hidden_;
    Mat<T> da(4 * H, n);
    Vec<T> dh_next = Vec<T>::Zero(H), dc_next = Vec<T>::Zero(H);
    for (int t = n - 1; t >= 0; --t) {
      const auto g = c.gates.col(t);
      const Vec<T> dh = dh_ext.col(t) + dh_next;
      const Vec<T> c_prev = t > 0 ? Vec<T>(c.c.col(t - 1)) : Vec<T>::Zero(H);
      Vec<T> dc = dc_next;
      for (int j = 0; j < H; ++j) {
        const T i_g = g(j), f_g = g(H + j), g_g = g(2 * H + j), o_g = g(3 * H + j);
        const T tc = c.tanh_c(j, t);
        dc(j) += dh(j) * o_g * (T(1) - tc * tc);
        da(j, t) = dc(j) * g_g * i_g * (T(1) - i_g);
        da(H + j, t) = dc(j) * c_prev(j) * f_g * (T(1) - f_g);
        da(2 * H + j, t) = dc(j) * i_g * (T(1) - g_g * g_g);
        da(3 * H + j, t) = dh(j) * tc * o_g * (T(1) - o_g);
        dc_next(j) = dc(j) * f_g;
      }
      dh_next.noalias() = p.wh->value.transpose() * da.col(t);
    }
    p.wx->grad.noalias() += da * c.x.transpose();
    p.b->grad.col(0) += da.rowwise().sum();
    if (n > 1) {
      p.wh->grad.noalias() += da.rightCols(n - 1) * c.h.leftCols(n - 1).transpose();
    }
    return p.wx->value.transpose() * da;
  }
};

}  // namespace

template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_lstm_encoder(const ModelConfig& cfg,
                                                      ParameterSet<T>& params,
                                                      Rng& init_rng) {
  return std::make_unique<LstmEncoder<T>>(cfg, params, init_rng);
}

template std::unique_ptr<SequenceEncoder<float>> make_lstm_encoder(const ModelConfig&,
                                                                   ParameterSet<float>&, Rng&);
template std::unique_ptr<SequenceEncoder<double>> make_lstm_encoder(const ModelConfig&,
                                                                    ParameterSet<double>&, Rng&);

}  // namespace eswm
