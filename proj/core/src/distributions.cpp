#include "cvrl/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Var DiagGaussianVar::log_prob(const Var& x) const {
  // -0.5 * [ ((x - mu)/sigma)^2 + 2 log sigma + log 2pi ] per dimension
  Var z = (x - mean) / stddev;
  Var per_dim = -0.5 * (square_(z) + 2.0 * log_(stddev) + kLog2Pi);
  return sum_rows(per_dim);
}

Var gaussian_kl(const DiagGaussianVar& q, const DiagGaussianVar& p) {
  if (q.dim() != p.dim() || q.batch() != p.batch())
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  Var ratio = q.stddev / p.stddev;
  Var md = (q.mean - p.mean) / p.stddev;
  Var per_dim = 0.5 * (square_(ratio) + square_(md) - 1.0) - log_(ratio);
  return sum_rows(per_dim);
}

double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mean.size() != p.mean.size())
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  NoGradGuard ng;
  DiagGaussianVar qv{Var(Mat(q.mean)), Var(Mat(q.stddev))};
  DiagGaussianVar pv{Var(Mat(p.mean)), Var(Mat(p.stddev))};
  return gaussian_kl(qv, pv).item();
}

double gaussian_log_prob(const DiagGaussian& g, const Vec& x) {
  NoGradGuard ng;
  DiagGaussianVar gv{Var(Mat(g.mean)), Var(Mat(g.stddev))};
  return gv.log_prob(Var(Mat(x))).item();
}

Vec sample_gaussian(const DiagGaussian& g, Rng& rng) {
  Vec out(g.mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + g.stddev[i] * rng.normal();
  return out;
}

Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat m(rows, cols);
  // column-major fill so the draw order matches storage order
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace cvrl
