#pragma once

#include <functional>
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

// Benchmark fields for the nonlinear diffusion-reaction problem with steep
// boundary layers on x in [-1,1], t in [0,1].
double steep_lambda(double x);
double steep_source(double x);
double initial_profile(double x);

// 1D diffusion-reaction problem d_t u = D d^2_x u - lambda(x) u^3 + f(x) with
// Dirichlet boundaries u(+-1, t) = boundary_value and initial profile ic_fn.
// Defaults describe the steep-boundary benchmark.
struct PdeProblem {
  double diffusion = 0.01;
  double boundary_value = 1.0;
  double t_end = 1.0;
  std::function<double(double)> lambda_fn = steep_lambda;
  std::function<double(double)> source_fn = steep_source;
  std::function<double(double)> ic_fn = initial_profile;

  void validate() const;
};

// One observation channel; inputs are flattened with x_dim coordinates per
// point ((t, x) for the field channels, x alone for the reaction rate).
struct PinnChannel {
  std::vector<double> x;
  std::vector<double> value;
  double sigma = 0.05;
  int x_dim = 2;

  int size() const { return static_cast<int>(value.size()); }
  std::span<const double> input(int i) const {
    return std::span<const double>(x.data() + static_cast<std::size_t>(i) * x_dim, x_dim);
  }
  void validate(const std::string& name) const;
};

struct PinnDataset {
  PinnChannel source;    // residual channel, inputs (t, x)
  PinnChannel boundary;  // boundary and initial conditions, inputs (t, x)
  PinnChannel solution;  // direct observations of u, inputs (t, x)
  PinnChannel rate;      // observations of lambda, input x

  void validate() const;
  int total_points() const;
};

enum class PinnNoise { Known, LearnedHetero };

// Two-network model: a solution net on (t, x) and a reaction-rate net on x.
// The flat parameter vector holds the solution net block first. With
// lambda_known the rate net is unused and the problem's closed-form lambda
// enters the residual instead. LearnedHetero adds a second solution-net
// output holding the raw (pre-softplus) observation variance of u.
struct PinnModel {
  PdeProblem problem;
  MlpModel u_net;
  MlpModel lam_net;
  bool lambda_known = false;
  PinnNoise noise = PinnNoise::Known;

  int param_count() const { return u_net.param_count() + lam_net.param_count(); }
  std::span<const double> u_params(std::span<const double> theta) const;
  std::span<const double> lam_params(std::span<const double> theta) const;
  void validate() const;
};

PinnModel make_steep_model(PinnNoise noise = PinnNoise::Known);

// Pointwise evaluations at one location.
double pinn_u(const PinnModel& m, std::span<const double> theta, double t, double x);
double pinn_lambda(const PinnModel& m, std::span<const double> theta, double x);
// Learned observation variance of u (softplus of the second output head).
double pinn_u_variance(const PinnModel& m, std::span<const double> theta, double t, double x);

// The residual formula itself, usable with derivatives from any source.
inline double residual_value(double du_dt, double d2u_dx2, double u, double lam,
                             double diffusion) {
  return du_dt - diffusion * d2u_dx2 + lam * u * u * u;
}

// PDE residual at (t, x) from input jets of the solution net: the predicted
// source channel.
double pinn_residual(const PinnModel& m, std::span<const double> theta, double t, double x);

// Sum of the four Gaussian channel log-likelihoods, normalization included.
double pinn_log_likelihood(const PinnModel& m, std::span<const double> theta,
                           const PinnDataset& d);
double pinn_log_likelihood_grad(const PinnModel& m, std::span<const double> theta,
                                const PinnDataset& d, std::span<double> grad);

struct PinnWeights {
  double source = 1.0;
  double boundary = 1.0;
  double solution = 1.0;
  double rate = 1.0;

  void validate() const;
};

// Weighted sum of per-channel mean squared errors; empty channels contribute
// nothing.
double pinn_point_loss(const PinnModel& m, std::span<const double> theta, const PinnDataset& d,
                       const PinnWeights& w);

// Training objective: weighted channel loss plus 0.5 * weight_decay |theta|^2.
PointObjective make_pinn_objective(const PinnModel& m, const PinnDataset& d,
                                   const PinnWeights& w, double weight_decay);

// Tempered log posterior with an iid Gaussian prior, for gradient samplers.
GradFn make_pinn_posterior(const PinnModel& m, const PinnDataset& d, double sigma_theta2,
                           double temperature = 1.0);

// ---- Reference solver: method of lines on a uniform space grid with
// second-order central differences and adaptive trapezoidal time stepping. ----

struct MolConfig {
  int nx = 1024;     // space intervals; nodes are nx + 1
  int nt_out = 256;  // stored time slices after t = 0
  double tol = 1e-9;
  double dt_init = 1e-3;
  double dt_min = 1e-12;
  int max_newton = 25;

  void validate() const;
};

struct MolSolution {
  std::vector<double> x;  // nx + 1 nodes
  std::vector<double> t;  // nt_out + 1 slices including t = 0
  DenseMatrix u;          // t.size() rows, x.size() cols

  double interpolate(double ti, double xi) const;
};

MolSolution reference_solve(const PdeProblem& problem, const MolConfig& cfg);

// ---- Benchmark dataset generation from a reference solution. ----

struct PinnDataConfig {
  int n_source = 13;
  int n_solution = 60;
  int n_boundary = 40;
  int n_rate = 20;
  double sigma_source = 0.05;
  double sigma_solution = 0.05;
  double sigma_boundary = 0.05;
  double sigma_rate = 0.05;
  bool noisy_boundary = false;

  void validate() const;
};

PinnDataset make_steep_dataset(const PdeProblem& problem, const MolSolution& ref,
                               const PinnDataConfig& cfg, CounterRng& rng);

}  // namespace uq
