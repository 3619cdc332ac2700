#pragma once

#include <functional>
#include <span>

#include "uqkit/dataset.hpp"
#include "uqkit/mlp.hpp"
#include "uqkit/rng.hpp"

namespace uq {

enum class NoiseMode { HomoscedasticKnown, HomoscedasticLearned, Heteroscedastic };

struct GaussianLikelihood {
  NoiseMode mode = NoiseMode::HomoscedasticKnown;
  double sigma_u = 0.1;  // homoscedastic noise stdev
  int head_index = 1;    // heteroscedastic: output slot holding the raw variance head
};

struct PriorSpec {
  enum class Kind { IidGaussian, Hierarchical };
  Kind kind = Kind::IidGaussian;
  double sigma_theta2 = 1.0;
  double h1 = 2.0, h2 = 0.25;  // inverse-gamma hyperprior on sigma_theta2
  double h3 = 2.0, h4 = 10.0;  // inverse-gamma hyperprior on sigma_u2
};

// Predicted noise variance of one heteroscedastic forward output vector.
double hetero_variance(std::span<const double> net_out, int head_index);

double log_likelihood(const MlpModel& m, std::span<const double> theta, const Dataset& data,
                      const GaussianLikelihood& lik);

double log_prior_iid(std::span<const double> theta, double sigma_theta2);

// Tape builders so samplers and variational fits share one likelihood
// definition.
ad::Var log_likelihood_tape(const MlpModel& m, ad::Tape& tape, std::span<const ad::Var> theta,
                            const Dataset& data, const GaussianLikelihood& lik);
ad::Var log_prior_iid_tape(ad::Tape& tape, std::span<const ad::Var> theta, double sigma_theta2);

// Tempered log-posterior of a network regression model. `value_grad` returns
// (log_lik + log_prior) / temperature and fills the matching gradient; a
// non-finite evaluation returns -infinity with a zero gradient so samplers
// can reject the state.
struct LogPosterior {
  const MlpModel* model = nullptr;
  const Dataset* data = nullptr;
  GaussianLikelihood lik;
  double sigma_theta2 = 1.0;
  double temperature = 1.0;

  int dim() const { return model->param_count(); }
  double value(std::span<const double> theta) const;
  double value_grad(std::span<const double> theta, std::span<double> grad) const;
};

// Scalar objective with gradient, the common currency of the trainers.
struct PointObjective {
  int dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> loss_grad;
};

// 0.5 * mean squared residual + 0.5 * weight_decay * |theta|^2.
PointObjective make_regression_objective(const MlpModel& m, const Dataset& data,
                                         double weight_decay);

// Negative tempered log-posterior, for MAP training.
PointObjective make_map_objective(const MlpModel& m, const Dataset& data,
                                  const GaussianLikelihood& lik, double sigma_theta2);

double mean_squared_error(const MlpModel& m, std::span<const double> theta, const Dataset& data);

// Conjugate inverse-gamma draws for the hierarchical model.
double gibbs_update_sigma_theta(std::span<const double> theta, double h1, double h2,
                                CounterRng& rng);
double gibbs_update_sigma_u_from_residuals(double resid_sq_sum, int n, double h3, double h4,
                                           CounterRng& rng);
double gibbs_update_sigma_u(const MlpModel& m, std::span<const double> theta, const Dataset& data,
                            double h3, double h4, CounterRng& rng);

}  // namespace uq
