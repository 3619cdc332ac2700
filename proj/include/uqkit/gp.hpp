#pragma once

#include <span>
#include <string>
#include <vector>

#include "uqkit/dataset.hpp"
#include "uqkit/linalg.hpp"

namespace uq {

// Squared-exponential covariance s^2 exp(-|x - x'|^2 / (2 l^2)).
struct SqExpKernel {
  double lengthscale = 0.2;
  double signal_variance = 1.0;

  void validate() const;
};

double kernel_value(const SqExpKernel& k, std::span<const double> a, std::span<const double> b);

struct GpModel {
  SqExpKernel kernel;
  double sigma_u2 = 0.0;
  int x_dim = 1;
  // Train inputs, one row per point.
  DenseMatrix x;
  // (K + sigma_u2 I)^{-1} U.
  std::vector<double> alpha;
  // Lower Cholesky factor of K + sigma_u2 I plus any jitter that was needed.
  DenseMatrix chol;
  double jitter = 0.0;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(x.rows); }
  std::span<const double> input(int i) const { return {x.row(i), static_cast<std::size_t>(x_dim)}; }
};

// Factorizes the noisy train covariance and precomputes the solve against the
// observations. A failing factorization walks a jitter ladder from 1e-12 to
// 1e-6 (warning recorded); failure at every rung raises std::runtime_error.
GpModel gp_fit(const Dataset& train, const SqExpKernel& kernel, double sigma_u2);

struct GpPrediction {
  std::vector<double> mean;
  // Epistemic covariance of the latent function at the query points.
  DenseMatrix covariance;
  // Diagonal of the covariance (clamped at zero) plus the noise variance.
  std::vector<double> total_variance;
};

// Query points are passed flat, model.x_dim coordinates per point.
GpPrediction gp_predict(const GpModel& model, std::span<const double> xs);

struct GpGridResult {
  SqExpKernel kernel;
  double val_mpl = 0.0;
  GpModel model;
};

// Fits every (lengthscale, signal variance) pair on the train split and keeps
// the one with the highest mean Gaussian log-likelihood of the validation
// observations under the total predictive variance.
GpGridResult gp_grid_search(const Dataset& train, const Dataset& val,
                            std::span<const double> lengthscales,
                            std::span<const double> signal_variances, double sigma_u2);

}  // namespace uq
