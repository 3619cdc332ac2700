#include "uqkit/probmodel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "uqkit/stats.hpp"

namespace uq {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

double hetero_variance(std::span<const double> net_out, int head_index) {
  if (head_index < 0 || head_index >= static_cast<int>(net_out.size()))
    throw std::invalid_argument("heteroscedastic head index out of range");
  double var = ad::softplus(net_out[head_index]);
  if (!(var > 0.0))
    throw std::runtime_error("predicted noise variance is not positive: " + std::to_string(var));
  return var;
}

double log_likelihood(const MlpModel& m, std::span<const double> theta, const Dataset& data,
                      const GaussianLikelihood& lik) {
  if (data.size() == 0) throw std::invalid_argument("log_likelihood: empty dataset");
  double ll = 0.0;
  if (lik.mode == NoiseMode::Heteroscedastic) {
    for (int i = 0; i < data.size(); ++i) {
      auto out = mlp_forward(m, theta, data.input(i));
      double var = hetero_variance(out, lik.head_index);
      double r = data.u[i] - out[0];
      ll += -0.5 * (kLog2Pi + std::log(var)) - 0.5 * r * r / var;
    }
  } else {
    const double var = lik.sigma_u * lik.sigma_u;
    if (!(var > 0.0)) throw std::invalid_argument("log_likelihood: sigma_u must be positive");
    for (int i = 0; i < data.size(); ++i) {
      auto out = mlp_forward(m, theta, data.input(i));
      double r = data.u[i] - out[0];
      ll += -0.5 * (kLog2Pi + std::log(var)) - 0.5 * r * r / var;
    }
  }
  return ll;
}

double log_prior_iid(std::span<const double> theta, double sigma_theta2) {
  if (!(sigma_theta2 > 0.0)) throw std::invalid_argument("log_prior: sigma_theta2 must be positive");
  double sumsq = 0.0;
  for (double t : theta) sumsq += t * t;
  const double k = static_cast<double>(theta.size());
  return -0.5 * k * (kLog2Pi + std::log(sigma_theta2)) - 0.5 * sumsq / sigma_theta2;
}

ad::Var log_likelihood_tape(const MlpModel& m, ad::Tape& tape, std::span<const ad::Var> theta,
                            const Dataset& data, const GaussianLikelihood& lik) {
  if (data.size() == 0) throw std::invalid_argument("log_likelihood: empty dataset");
  ad::Var ll = ad::make_var(tape, 0.0);
  if (lik.mode == NoiseMode::Heteroscedastic) {
    for (int i = 0; i < data.size(); ++i) {
      auto out = mlp_forward_tape(m, tape, theta, data.input(i));
      ad::Var var = ad::softplus(out[lik.head_index]);
      ad::Var r = out[0] - data.u[i];
      ll = ll - 0.5 * kLog2Pi - 0.5 * ad::log(var) - (r * r) / (var * 2.0);
    }
  } else {
    const double var = lik.sigma_u * lik.sigma_u;
    if (!(var > 0.0)) throw std::invalid_argument("log_likelihood: sigma_u must be positive");
    const double c = -0.5 * (kLog2Pi + std::log(var));
    const double inv2var = 0.5 / var;
    for (int i = 0; i < data.size(); ++i) {
      auto out = mlp_forward_tape(m, tape, theta, data.input(i));
      ad::Var r = out[0] - data.u[i];
      ll = ll + c - (r * r) * inv2var;
    }
  }
  return ll;
}

ad::Var log_prior_iid_tape(ad::Tape& tape, std::span<const ad::Var> theta, double sigma_theta2) {
  if (!(sigma_theta2 > 0.0)) throw std::invalid_argument("log_prior: sigma_theta2 must be positive");
  ad::Var sumsq = ad::make_var(tape, 0.0);
  for (const ad::Var& t : theta) sumsq = sumsq + t * t;
  const double k = static_cast<double>(theta.size());
  return sumsq * (-0.5 / sigma_theta2) - 0.5 * k * (kLog2Pi + std::log(sigma_theta2));
}

double LogPosterior::value(std::span<const double> theta) const {
  double v = log_likelihood(*model, theta, *data, lik) + log_prior_iid(theta, sigma_theta2);
  return v / temperature;
}

double LogPosterior::value_grad(std::span<const double> theta, std::span<double> grad) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  try {
    double v = grad_scalar(
        theta,
        [&](ad::Tape& tape, std::span<const ad::Var> th) {
          return log_likelihood_tape(*model, tape, th, *data, lik) +
                 log_prior_iid_tape(tape, th, sigma_theta2);
        },
        grad);
    const double inv_tau = 1.0 / temperature;
    for (double& g : grad) g *= inv_tau;
    return v * inv_tau;
  } catch (const std::runtime_error&) {
    for (double& g : grad) g = 0.0;
    return -std::numeric_limits<double>::infinity();
  }
}

PointObjective make_regression_objective(const MlpModel& m, const Dataset& data,
                                         double weight_decay) {
  PointObjective obj;
  obj.dim = m.param_count();
  const MlpModel* model = &m;
  const Dataset* d = &data;
  obj.loss_grad = [model, d, weight_decay](std::span<const double> theta,
                                           std::span<double> grad) {
    return grad_scalar(
        theta,
        [&](ad::Tape& tape, std::span<const ad::Var> th) {
          ad::Var acc = ad::make_var(tape, 0.0);
          for (int i = 0; i < d->size(); ++i) {
            auto out = mlp_forward_tape(*model, tape, th, d->input(i));
            ad::Var r = out[0] - d->u[i];
            acc = acc + r * r;
          }
          acc = acc * (0.5 / d->size());
          if (weight_decay > 0.0) {
            ad::Var sq = ad::make_var(tape, 0.0);
            for (const ad::Var& t : th) sq = sq + t * t;
            acc = acc + sq * (0.5 * weight_decay);
          }
          return acc;
        },
        grad);
  };
  return obj;
}

PointObjective make_map_objective(const MlpModel& m, const Dataset& data,
                                  const GaussianLikelihood& lik, double sigma_theta2) {
  PointObjective obj;
  obj.dim = m.param_count();
  const MlpModel* model = &m;
  const Dataset* d = &data;
  obj.loss_grad = [model, d, lik, sigma_theta2](std::span<const double> theta,
                                                std::span<double> grad) {
    double v = grad_scalar(
        theta,
        [&](ad::Tape& tape, std::span<const ad::Var> th) {
          return log_likelihood_tape(*model, tape, th, *d, lik) * -1.0 -
                 log_prior_iid_tape(tape, th, sigma_theta2);
        },
        grad);
    return v;
  };
  return obj;
}

double mean_squared_error(const MlpModel& m, std::span<const double> theta, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("mean_squared_error: empty dataset");
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    auto out = mlp_forward(m, theta, data.input(i));
    double r = out[0] - data.u[i];
    acc += r * r;
  }
  return acc / data.size();
}

double gibbs_update_sigma_theta(std::span<const double> theta, double h1, double h2,
                                CounterRng& rng) {
  if (!(h1 > 0.0 && h2 > 0.0)) throw std::invalid_argument("hyperprior constants must be positive");
  double sumsq = 0.0;
  for (double t : theta) sumsq += t * t;
  const double shape = h1 + 0.5 * static_cast<double>(theta.size());
  const double rate = 1.0 / h2 + 0.5 * sumsq;
  return rng.inverse_gamma(shape, rate);
}

double gibbs_update_sigma_u_from_residuals(double resid_sq_sum, int n, double h3, double h4,
                                           CounterRng& rng) {
  if (!(h3 > 0.0 && h4 > 0.0)) throw std::invalid_argument("hyperprior constants must be positive");
  if (n < 0 || resid_sq_sum < 0.0)
    throw std::invalid_argument("residual sum and count must be nonnegative");
  const double shape = h3 + 0.5 * static_cast<double>(n);
  const double rate = 1.0 / h4 + 0.5 * resid_sq_sum;
  return rng.inverse_gamma(shape, rate);
}

double gibbs_update_sigma_u(const MlpModel& m, std::span<const double> theta, const Dataset& data,
                            double h3, double h4, CounterRng& rng) {
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    auto out = mlp_forward(m, theta, data.input(i));
    double r = data.u[i] - out[0];
    acc += r * r;
  }
  return gibbs_update_sigma_u_from_residuals(acc, data.size(), h3, h4, rng);
}

}  // namespace uq
