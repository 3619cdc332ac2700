#include "uqkit/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace uq {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Dual-averaging step-size controller driven toward a target acceptance
// statistic.
// Two-phase step-size controller for the adaptation window. The first half
// runs dual averaging on the per-proposal acceptance probability, which
// locates the right scale from an arbitrary start. Near an integrator
// stability boundary that statistic is a mixture of moderate values and hard
// zeros from divergent excursions, so its fixed point sits below the step
// size whose divergence-free acceptance matches the target. The second half
// therefore switches to windowed matching: the mean acceptance measured over
// each window of proposals at a held step size nudges log eps by the gap
// against the target, and the frozen step size averages the window estimates
// after a short settling prefix. That is the statistic the post-adaptation
// chain actually reproduces.
class StepSizeController {
 public:
  StepSizeController(double eps_init, double target_accept, int adapt_total)
      : mu_(std::log(10.0 * eps_init)), log_eps_(std::log(eps_init)),
        log_eps_bar_(std::log(eps_init)), target_(target_accept), phase_one_(adapt_total / 2) {
    const int span = adapt_total - phase_one_;
    window_ = std::max(10, span / 12);
  }

  double current() const { return std::exp(log_eps_); }

  double frozen() const {
    if (n_avg_ > 0) return std::exp(sum_log_eps_ / n_avg_);
    return std::exp(log_eps_bar_);
  }

  void update(double alpha) {
    ++m_;
    if (m_ <= phase_one_) {
      h_bar_ = (1.0 - 1.0 / (m_ + t0_)) * h_bar_ + (1.0 / (m_ + t0_)) * (target_ - alpha);
      log_eps_ = mu_ - std::sqrt(static_cast<double>(m_)) / gamma_ * h_bar_;
      const double w = std::pow(static_cast<double>(m_), -kappa_);
      log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
      if (m_ == phase_one_) log_eps_ = log_eps_bar_;
      return;
    }
    window_alpha_ += alpha;
    if (++window_fill_ < window_) return;
    const double window_mean = window_alpha_ / window_;
    window_alpha_ = 0.0;
    window_fill_ = 0;
    log_eps_ += gain_ * (window_mean - target_);
    if (++windows_done_ > settle_) {
      sum_log_eps_ += log_eps_;
      ++n_avg_;
    }
  }

 private:
  double mu_, log_eps_, log_eps_bar_, target_;
  double h_bar_ = 0.0;
  double gamma_ = 0.05, t0_ = 10.0, kappa_ = 0.75;
  double gain_ = 0.5;
  double window_alpha_ = 0.0, sum_log_eps_ = 0.0;
  int m_ = 0, phase_one_, window_, window_fill_ = 0, windows_done_ = 0, n_avg_ = 0;
  int settle_ = 3;
};

// Trajectory length drawn uniformly from the upper half of [1, max_steps].
// Randomizing the length breaks the resonances a fixed-length trajectory
// develops on near-quadratic targets, where the acceptance statistic would
// otherwise depend on the oscillation phase instead of the step size.
int draw_leapfrog_steps(int max_steps, CounterRng& rng) {
  if (max_steps <= 1) return max_steps;
  const int lo = (max_steps + 1) / 2;
  const int span = max_steps - lo + 1;
  int pick = lo + static_cast<int>(rng.uniform() * span);
  return std::min(pick, max_steps);
}

// Acceptance probability of one trial proposal from theta at step size eps.
double probe_alpha(const GradFn& grad_fn, std::span<const double> theta, double logp, double eps,
                   const HmcConfig& cfg, CounterRng& rng) {
  std::vector<double> mom(theta.size());
  for (auto& mj : mom) mj = rng.normal();
  const double h0 = -logp + 0.5 * sq_norm(mom);
  ParamVector prop(theta.begin(), theta.end());
  double lp = 0.0;
  const int steps = draw_leapfrog_steps(cfg.leapfrog_steps, rng);
  if (!leapfrog(prop, mom, eps, steps, grad_fn, lp)) return 0.0;
  const double dh = (-lp + 0.5 * sq_norm(mom)) - h0;
  if (!std::isfinite(dh) || std::abs(dh) > cfg.divergence_threshold) return 0.0;
  return std::min(1.0, std::exp(-dh));
}

// Bracket and bisect the step size whose acceptance sits at the target, so
// dual averaging starts near its fixed point. Starting far away would leave a
// long transient of extreme acceptance values inside the controller's
// averaged statistic and bias the frozen step size.
double find_initial_step(const GradFn& grad_fn, std::span<const double> theta, double logp,
                         const HmcConfig& cfg, CounterRng& rng) {
  auto alpha_at = [&](double e) {
    return 0.5 * (probe_alpha(grad_fn, theta, logp, e, cfg, rng) +
                  probe_alpha(grad_fn, theta, logp, e, cfg, rng));
  };
  double lo = cfg.eps0, hi = cfg.eps0;
  double a = alpha_at(cfg.eps0);
  if (a > cfg.target_accept) {
    for (int i = 0; i < 40 && a > cfg.target_accept && hi < 1e6; ++i) {
      lo = hi;
      hi *= 2.0;
      a = alpha_at(hi);
    }
    if (a > cfg.target_accept) return hi;
  } else {
    for (int i = 0; i < 40 && a <= cfg.target_accept && lo > 1e-8; ++i) {
      hi = lo;
      lo *= 0.5;
      a = alpha_at(lo);
    }
    if (a <= cfg.target_accept) return lo;
  }
  for (int i = 0; i < 10; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (alpha_at(mid) > cfg.target_accept)
      lo = mid;
    else
      hi = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace

void HmcConfig::validate() const {
  if (!(eps0 > 0.0)) throw std::invalid_argument("hmc: eps0 must be positive");
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc: leapfrog_steps must be >= 1");
  if (samples < 1) throw std::invalid_argument("hmc: samples must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("hmc: burn_in must be >= 0");
  if (lag < 1) throw std::invalid_argument("hmc: lag must be >= 1");
  if (!(adapt_fraction >= 0.0 && adapt_fraction <= 1.0))
    throw std::invalid_argument("hmc: adapt_fraction must lie in [0,1]");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("hmc: target_accept must lie in (0,1)");
}

void LdConfig::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("ld: eps must be positive");
  if (samples < 1) throw std::invalid_argument("ld: samples must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("ld: burn_in must be >= 0");
  if (lag < 1) throw std::invalid_argument("ld: lag must be >= 1");
}

bool leapfrog(std::span<double> theta, std::span<double> momentum, double eps, int steps,
              const GradFn& grad_fn, double& logp_out) {
  const std::size_t k = theta.size();
  std::vector<double> grad(k);
  double logp = grad_fn(theta, grad);
  if (!std::isfinite(logp) || !all_finite(grad)) return false;
  for (std::size_t j = 0; j < k; ++j) momentum[j] += 0.5 * eps * grad[j];
  for (int s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < k; ++j) theta[j] += eps * momentum[j];
    if (!all_finite(theta)) return false;
    logp = grad_fn(theta, grad);
    if (!std::isfinite(logp) || !all_finite(grad)) return false;
    const double scale = (s + 1 < steps) ? eps : 0.5 * eps;
    for (std::size_t j = 0; j < k; ++j) momentum[j] += scale * grad[j];
  }
  logp_out = logp;
  return true;
}

PosteriorEnsemble hmc_sample(const GradFn& grad_fn, std::span<const double> theta0,
                             const HmcConfig& cfg, CounterRng& rng) {
  cfg.validate();
  const std::size_t k = theta0.size();
  PosteriorEnsemble ens;
  ens.method = "hmc";
  ens.members.reserve(cfg.samples);

  ParamVector theta(theta0.begin(), theta0.end());
  std::vector<double> grad(k);
  double logp = grad_fn(theta, grad);
  if (!std::isfinite(logp))
    throw std::invalid_argument("hmc: log-posterior is not finite at the initial point");

  const int adapt_until = static_cast<int>(cfg.adapt_fraction * cfg.burn_in);
  const double eps_init =
      adapt_until > 0 ? find_initial_step(grad_fn, theta, logp, cfg, rng) : cfg.eps0;
  StepSizeController adapter(eps_init, cfg.target_accept, adapt_until);
  double eps_frozen = eps_init;
  bool frozen = adapt_until == 0;

  const int total = cfg.burn_in + cfg.samples * cfg.lag;
  ParamVector prop(k);
  std::vector<double> mom(k);
  int accepted_sampling = 0, proposals_sampling = 0;

  for (int iter = 0; iter < total; ++iter) {
    if (!frozen && iter >= adapt_until) {
      eps_frozen = adapter.frozen();
      frozen = true;
    }
    const double eps = frozen ? eps_frozen : adapter.current();

    for (std::size_t j = 0; j < k; ++j) mom[j] = rng.normal();
    const double h0 = -logp + 0.5 * sq_norm(mom);
    std::copy(theta.begin(), theta.end(), prop.begin());
    double logp_prop = 0.0;
    const int steps = draw_leapfrog_steps(cfg.leapfrog_steps, rng);
    bool finite = leapfrog(prop, mom, eps, steps, grad_fn, logp_prop);

    double alpha = 0.0;
    if (finite) {
      const double h1 = -logp_prop + 0.5 * sq_norm(mom);
      const double dh = h1 - h0;
      if (std::abs(dh) > cfg.divergence_threshold) {
        if (frozen) ++ens.divergences;
      } else {
        alpha = std::min(1.0, std::exp(-dh));
      }
    } else {
      if (frozen) ++ens.divergences;
    }

    const bool accepted = rng.uniform() < alpha;
    if (accepted) {
      theta.swap(prop);
      logp = logp_prop;
    }

    if (!frozen) adapter.update(alpha);

    if (iter >= cfg.burn_in) {
      ++proposals_sampling;
      if (accepted) ++accepted_sampling;
      const int since = iter - cfg.burn_in;
      if ((since + 1) % cfg.lag == 0) ens.members.push_back(theta);
    }
  }
  ens.final_step_size = frozen ? eps_frozen : adapter.current();
  ens.acceptance_rate =
      proposals_sampling > 0 ? static_cast<double>(accepted_sampling) / proposals_sampling : 0.0;
  if (ens.acceptance_rate < 0.05)
    ens.warnings.push_back("acceptance rate below 0.05; chain is likely stuck");
  return ens;
}

void langevin_step(std::span<double> theta, double eps, std::span<const double> grad,
                   CounterRng& rng) {
  const double noise_scale = std::sqrt(eps);
  for (std::size_t j = 0; j < theta.size(); ++j)
    theta[j] += 0.5 * eps * grad[j] + noise_scale * rng.normal();
}

PosteriorEnsemble ld_sample(const GradFn& grad_fn, std::span<const double> theta0,
                            const LdConfig& cfg, CounterRng& rng) {
  cfg.validate();
  const std::size_t k = theta0.size();
  PosteriorEnsemble ens;
  ens.method = "ld";
  ens.members.reserve(cfg.samples);
  ParamVector theta(theta0.begin(), theta0.end());
  std::vector<double> grad(k);
  const int total = cfg.burn_in + cfg.samples * cfg.lag;
  for (int iter = 0; iter < total; ++iter) {
    double logp = grad_fn(theta, grad);
    if (!std::isfinite(logp) || !all_finite(grad))
      throw std::runtime_error("ld: log-posterior became non-finite at step " +
                               std::to_string(iter));
    langevin_step(theta, cfg.eps, grad, rng);
    if (iter >= cfg.burn_in) {
      const int since = iter - cfg.burn_in;
      if ((since + 1) % cfg.lag == 0) ens.members.push_back(theta);
    }
  }
  ens.final_step_size = cfg.eps;
  return ens;
}

GradFn make_sgld_gradient(const MlpModel& m, const Dataset& data, const GaussianLikelihood& lik,
                          double sigma_theta2, int batch, CounterRng rng) {
  if (batch < 0 || batch > data.size())
    throw std::invalid_argument("sgld: batch must lie in [0, N]");
  const MlpModel* model = &m;
  const Dataset* d = &data;
  auto rng_state = std::make_shared<CounterRng>(rng);
  return [model, d, lik, sigma_theta2, batch, rng_state](std::span<const double> theta,
                                                         std::span<double> grad) {
    const int n = d->size();
    const int bs = (batch == 0) ? n : batch;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (bs < n) {
      for (int i = 0; i < bs; ++i) {
        int j = i + static_cast<int>(rng_state->uniform() * (n - i));
        if (j >= n) j = n - 1;
        std::swap(idx[i], idx[j]);
      }
    }
    Dataset sub;
    sub.x_dim = d->x_dim;
    for (int i = 0; i < bs; ++i) {
      auto xi = d->input(idx[i]);
      sub.x.insert(sub.x.end(), xi.begin(), xi.end());
      sub.u.push_back(d->u[idx[i]]);
    }
    const double scale = static_cast<double>(n) / bs;
    try {
      return grad_scalar(
          theta,
          [&](ad::Tape& tape, std::span<const ad::Var> th) {
            return log_likelihood_tape(*model, tape, th, sub, lik) * scale +
                   log_prior_iid_tape(tape, th, sigma_theta2);
          },
          grad);
    } catch (const std::runtime_error&) {
      for (double& g : grad) g = 0.0;
      return -std::numeric_limits<double>::infinity();
    }
  };
}

PosteriorEnsemble hierarchical_hmc_sample(const MlpModel& m, const Dataset& data,
                                          const HierarchicalConfig& cfg,
                                          std::span<const double> theta0, CounterRng& rng) {
  cfg.hmc.validate();
  const std::size_t k = theta0.size();
  PosteriorEnsemble ens;
  ens.method = "hmc_gibbs";
  ens.members.reserve(cfg.hmc.samples);

  LogPosterior post;
  post.model = &m;
  post.data = &data;
  post.lik.mode = NoiseMode::HomoscedasticLearned;
  post.lik.sigma_u = std::sqrt(cfg.sigma_u2_init);
  post.sigma_theta2 = cfg.sigma_theta2_init;

  GradFn grad_fn = [&post](std::span<const double> th, std::span<double> g) {
    return post.value_grad(th, g);
  };

  ParamVector theta(theta0.begin(), theta0.end());
  std::vector<double> grad(k), mom(k);
  ParamVector prop(k);
  double logp = grad_fn(theta, grad);
  if (!std::isfinite(logp))
    throw std::invalid_argument("hierarchical hmc: non-finite log-posterior at start");

  const int adapt_until = static_cast<int>(cfg.hmc.adapt_fraction * cfg.hmc.burn_in);
  const double eps_init =
      adapt_until > 0 ? find_initial_step(grad_fn, theta, logp, cfg.hmc, rng) : cfg.hmc.eps0;
  StepSizeController adapter(eps_init, cfg.hmc.target_accept, adapt_until);
  double eps_frozen = eps_init;
  bool frozen = adapt_until == 0;
  const int total = cfg.hmc.burn_in + cfg.hmc.samples * cfg.hmc.lag;
  int accepted_sampling = 0, proposals_sampling = 0;

  for (int iter = 0; iter < total; ++iter) {
    // Conjugate sweep conditioned on the current parameters.
    double sig_t2 = gibbs_update_sigma_theta(theta, cfg.h1, cfg.h2, rng);
    double sig_u2 = gibbs_update_sigma_u(m, theta, data, cfg.h3, cfg.h4, rng);
    post.sigma_theta2 = sig_t2;
    post.lik.sigma_u = std::sqrt(sig_u2);
    logp = grad_fn(theta, grad);

    if (!frozen && iter >= adapt_until) {
      eps_frozen = adapter.frozen();
      frozen = true;
    }
    const double eps = frozen ? eps_frozen : adapter.current();

    for (std::size_t j = 0; j < k; ++j) mom[j] = rng.normal();
    const double h0 = -logp + 0.5 * sq_norm(mom);
    std::copy(theta.begin(), theta.end(), prop.begin());
    double logp_prop = 0.0;
    const int steps = draw_leapfrog_steps(cfg.hmc.leapfrog_steps, rng);
    bool finite = leapfrog(prop, mom, eps, steps, grad_fn, logp_prop);

    double alpha = 0.0;
    if (finite) {
      const double dh = (-logp_prop + 0.5 * sq_norm(mom)) - h0;
      if (std::abs(dh) > cfg.hmc.divergence_threshold) {
        if (frozen) ++ens.divergences;
      } else {
        alpha = std::min(1.0, std::exp(-dh));
      }
    } else {
      if (frozen) ++ens.divergences;
    }
    bool accepted = rng.uniform() < alpha;
    if (accepted) {
      theta.swap(prop);
      logp = logp_prop;
    }
    if (!frozen) adapter.update(alpha);

    if (iter >= cfg.hmc.burn_in) {
      ++proposals_sampling;
      if (accepted) ++accepted_sampling;
      const int since = iter - cfg.hmc.burn_in;
      if ((since + 1) % cfg.hmc.lag == 0) {
        ens.members.push_back(theta);
        ens.sigma_theta2_trace.push_back(sig_t2);
        ens.sigma_u2_trace.push_back(sig_u2);
      }
    }
  }
  ens.final_step_size = frozen ? eps_frozen : adapter.current();
  ens.acceptance_rate =
      proposals_sampling > 0 ? static_cast<double>(accepted_sampling) / proposals_sampling : 0.0;
  if (ens.acceptance_rate < 0.05)
    ens.warnings.push_back("acceptance rate below 0.05; chain is likely stuck");
  return ens;
}

}  // namespace uq
