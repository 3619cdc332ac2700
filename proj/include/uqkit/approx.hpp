#pragma once

#include <span>
#include <string>
#include <vector>

#include "uqkit/dataset.hpp"
#include "uqkit/linalg.hpp"
#include "uqkit/mcmc.hpp"
#include "uqkit/mlp.hpp"
#include "uqkit/probmodel.hpp"
#include "uqkit/rng.hpp"

namespace uq {

// Factorized Gaussian over the parameter vector; the stdev of coordinate j is
// softplus(rho_j), so every admissible rho encodes a positive spread.
struct MeanFieldPosterior {
  ParamVector mu;
  ParamVector rho;

  int dim() const { return static_cast<int>(mu.size()); }
  double sigma(int j) const { return ad::softplus(rho[j]); }
};

// Sum over coordinates of KL(N(mu_j, sigma_j^2) vs N(0, sigma_theta2)).
double kl_mean_field(const MeanFieldPosterior& q, double sigma_theta2);

// Monte Carlo evidence lower bound: the mean over n_mc reparametrized draws
// of the data log-likelihood, minus the closed-form KL against the iid
// Gaussian prior. An empty dataset contributes zero log-likelihood.
double elbo(const MlpModel& m, const MeanFieldPosterior& q, const Dataset& data,
            const GaussianLikelihood& lik, double sigma_theta2, int n_mc, CounterRng& rng);

// One reparametrized realization with the noise vector held fixed:
// theta_j = mu_j + softplus(rho_j) * z_j. Returns the realized bound and
// fills the gradients with respect to mu and rho. lik_scale multiplies the
// likelihood term (N over batch size for minibatch estimates, 1 otherwise).
double elbo_value_grad(const MlpModel& m, std::span<const double> mu, std::span<const double> rho,
                       std::span<const double> z, const Dataset& data,
                       const GaussianLikelihood& lik, double sigma_theta2,
                       std::span<double> grad_mu, std::span<double> grad_rho,
                       double lik_scale = 1.0);

struct MfviConfig {
  double lr = 1e-3;
  int steps = 20000;
  int batch = 32;  // 0 means full batch
  double rho_init = -6.0;
  // When set, training tracks the held-out data log-likelihood at the
  // variational mean every eval_every steps and stops after `patience`
  // consecutive checks without improvement, restoring the best state.
  const Dataset* validation = nullptr;
  int eval_every = 50;
  int patience = 10;
  bool cosine_decay = true;  // one half-cosine from lr toward zero over steps

  void validate() const;
};

// Maximizes the one-sample reparametrized bound with Adam. Throws
// std::runtime_error naming the step index if the objective turns non-finite.
MeanFieldPosterior mfvi_fit(const MlpModel& m, const Dataset& train, const GaussianLikelihood& lik,
                            double sigma_theta2, const MfviConfig& cfg, CounterRng& rng);

// Independent reparametrized draws; method tag "mfvi".
PosteriorEnsemble mfvi_sample(const MeanFieldPosterior& q, int n_samples, CounterRng& rng);

// ---------------------------------------------------------------------------

struct McdConfig {
  double rate = 0.05;
  double lr = 1e-3;
  int steps = 20000;
  int batch = 32;  // 0 means full batch
  double weight_decay = 0.0;

  void validate() const;
};

int hidden_unit_count(const MlpModel& m);

// Keep/drop mask over the hidden units, layer by layer; entries are 1 with
// probability 1 - rate.
std::vector<int> draw_hidden_mask(const MlpModel& m, double rate, CounterRng& rng);

// Zeroes the outgoing weights of every hidden unit whose mask entry is 0, so
// the standard forward pass reproduces the masked network exactly. Dropped
// activations are not rescaled.
ParamVector apply_hidden_mask(const MlpModel& m, std::span<const double> theta,
                              std::span<const int> mask);

// Mean squared error training with a fresh dropout mask per step.
ParamVector mcd_train(const MlpModel& m, const Dataset& train, const McdConfig& cfg,
                      CounterRng& rng);

// n_samples stochastic forward passes at one input, each under a fresh
// Bernoulli(rate) mask of the hidden units.
std::vector<double> mcd_predict(const MlpModel& m, std::span<const double> theta, double rate,
                                std::span<const double> x, int n_samples, CounterRng& rng);

// n_samples masked parameter vectors as an ensemble; method tag "mcd".
PosteriorEnsemble mcd_ensemble(const MlpModel& m, std::span<const double> theta, double rate,
                               int n_samples, CounterRng& rng);

// ---------------------------------------------------------------------------

// Gaussian fit around a mode: curvature is the generalized Gauss-Newton
// matrix of the data term plus the prior precision, and chol its lower
// Cholesky factor (computed with the recorded diagonal jitter when the plain
// factorization fails).
struct LaplaceFit {
  ParamVector theta_hat;
  DenseMatrix curvature;
  DenseMatrix chol;
  double jitter = 0.0;
  std::vector<std::string> warnings;

  int dim() const { return static_cast<int>(theta_hat.size()); }
};

struct MapConfig {
  double lr = 1e-2;
  int steps = 30000;
  bool cosine_decay = true;

  void validate() const;
};

// Curvature assembly at a given point: sum over data of the outer product of
// the output gradient, divided by the noise variance, plus the prior
// precision. Homoscedastic Gaussian likelihoods only.
LaplaceFit laplace_fit_at(const MlpModel& m, std::span<const double> theta_hat,
                          const Dataset& data, const GaussianLikelihood& lik,
                          double sigma_theta2);

// MAP training with Adam followed by the curvature assembly at the optimum.
LaplaceFit laplace_fit(const MlpModel& m, const Dataset& data, const GaussianLikelihood& lik,
                       double sigma_theta2, const MapConfig& cfg, CounterRng& rng);

// Variance of the linearized prediction at x: g^T curvature^{-1} g with g the
// parameter gradient of the output at theta_hat.
double laplace_predict_var(const LaplaceFit& fit, const MlpModel& m, std::span<const double> x);

// Gaussian draws around theta_hat with covariance curvature^{-1}; the result
// carries linear_base = theta_hat so downstream prediction uses the
// linearized model. Method tag "la".
PosteriorEnsemble laplace_sample(const LaplaceFit& fit, int n_samples, CounterRng& rng);

// Laplace approximation of the log model evidence at the fitted mode.
double laplace_log_evidence(const LaplaceFit& fit, const MlpModel& m, const Dataset& data,
                            const GaussianLikelihood& lik, double sigma_theta2);

// Offline grid search over the prior spread and the noise level, maximizing
// the evidence approximation; refits at every pair.
struct LaplaceGridResult {
  double sigma_theta2 = 1.0;
  double sigma_u = 0.1;
  double log_evidence = 0.0;
  LaplaceFit fit;
};

LaplaceGridResult laplace_grid_search(const MlpModel& m, const Dataset& data,
                                      std::span<const double> sigma_theta2_grid,
                                      std::span<const double> sigma_u_grid, const MapConfig& cfg,
                                      CounterRng& rng);

}  // namespace uq
