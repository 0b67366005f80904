#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "eswm/analysis.h"

namespace eswm {

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double sample_variance(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired samples differ in length");
}

}  // namespace

Interval wilson_interval(int successes, int n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double binomial_upper_tail(int k, int n, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::binomial(n, p), k - 1));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  Correlation c;
  c.n = static_cast<int>(x.size());
  const double rho = c.n >= 2 ? pearson(ranks(x), ranks(y)) : std::numeric_limits<double>::quiet_NaN();
  if (std::isnan(rho)) {
    c.degenerate = true;
    c.rho = rho;
    return c;
  }
  c.rho = rho;
  if (c.n <= 2) return c;
  if (std::abs(rho) >= 1.0) {
    c.p_value = 0.0;
    return c;
  }
  const double t = rho * std::sqrt((c.n - 2) / (1.0 - rho * rho));
  boost::math::students_t dist(c.n - 2);
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

TTest two_sample_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs two samples of size >= 2");
  TTest r;
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  const double va = sample_variance(a, r.mean_a) / a.size();
  const double vb = sample_variance(b, r.mean_b) / b.size();
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.t = r.mean_a == r.mean_b ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(),
                                                     r.mean_a - r.mean_b);
    r.df = a.size() + b.size() - 2.0;
    r.p_value = r.mean_a == r.mean_b ? 1.0 : 0.0;
    return r;
  }
  r.t = (r.mean_a - r.mean_b) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  LinearFit f;
  f.n = static_cast<int>(x.size());
  if (f.n < 2) throw std::invalid_argument("linear fit needs at least two points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  if (syy == 0.0) {
    f.r2 = 1.0;
    return f;
  }
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = 1.0 - ss_res / syy;
  return f;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions differ in support");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  return std::max(0.0, kl);
}

}  // namespace eswm
