#pragma once

// Column-wise numeric kernels shared by the encoders. Every matrix stores one
// token per column.

#include <cmath>

#include "eswm/model/params.h"
#include "eswm/rng.h"

namespace eswm::ops {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Param<T>& gamma, const Param<T>& beta,
                  LayerNormCache<T>* cache) {
  const Eigen::Index d = x.rows();
  Mat<T> xhat(x.rows(), x.cols());
  Vec<T> rstd(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const T mean = x.col(j).mean();
    const T var = (x.col(j).array() - mean).square().sum() / static_cast<T>(d);
    rstd(j) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.col(j) = (x.col(j).array() - mean) * rstd(j);
  }
  Mat<T> y = (xhat.array().colwise() * gamma.value.col(0).array()).colwise() +
             beta.value.col(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& c, Param<T>& gamma,
                           Param<T>& beta) {
  gamma.grad.col(0) += (dy.array() * c.xhat.array()).rowwise().sum().matrix();
  beta.grad.col(0) += dy.rowwise().sum();
  const Mat<T> dxhat = dy.array().colwise() * gamma.value.col(0).array();
  const T d = static_cast<T>(dy.rows());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    const T sum = dxhat.col(j).sum();
    const T dot = dxhat.col(j).dot(c.xhat.col(j));
    dx.col(j) = (c.rstd(j) / d) *
                (d * dxhat.col(j).array() - sum - c.xhat.col(j).array() * dot).matrix();
  }
  return dx;
}

/// Softmax of each column, in place.
template <typename T>
void softmax_columns(Eigen::Ref<Mat<T>> s) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const T m = s.col(j).maxCoeff();
    s.col(j) = (s.col(j).array() - m).exp().matrix();
    s.col(j) /= s.col(j).sum();
  }
}

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, bool train, Rng* rng) {
  if (!train || p <= 0.0 || rng == nullptr) return {};
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  std::bernoulli_distribution drop(p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = drop(*rng) ? T(0) : keep;
  return m;
}

template <typename T>
void apply_mask(Mat<T>& x, const Mat<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual linear-layer initialisation.
template <typename T>
void init_uniform(Param<T>& p, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(u(rng));
}

template <typename T>
void init_normal(Param<T>& p, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(n(rng));
}

}  // namespace eswm::ops
