#pragma once

#include "cvrl/random.hpp"
#include "cvrl/tensor.hpp"

namespace cvrl {

// Diagonal Gaussian with batched parameters, one distribution per column.
// stddev entries are kept strictly positive by construction at the call
// sites (softplus + floor); the ops here assume it.
struct DiagGaussianVar {
  Var mean;    // (D x B)
  Var stddev;  // (D x B)

  Eigen::Index dim() const { return mean.rows(); }
  Eigen::Index batch() const { return mean.cols(); }

  // mean + stddev .* eps, differentiable through both parameters
  Var rsample(const Mat& eps) const { return mean + stddev * Var(eps); }

  // per-column log density, summed over dimensions -> (1 x B)
  Var log_prob(const Var& x) const;
};

// closed-form KL(q || p) per column, summed over dimensions -> (1 x B)
Var gaussian_kl(const DiagGaussianVar& q, const DiagGaussianVar& p);

// Plain-value counterpart used at module boundaries and in tests.
struct DiagGaussian {
  Vec mean;
  Vec stddev;
};

// scalar closed-form KL, summed over dimensions
double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

double gaussian_log_prob(const DiagGaussian& g, const Vec& x);

Vec sample_gaussian(const DiagGaussian& g, Rng& rng);

// Draws a (rows x cols) matrix of iid standard normals.
Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace cvrl
