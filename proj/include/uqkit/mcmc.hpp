#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "uqkit/linalg.hpp"
#include "uqkit/probmodel.hpp"
#include "uqkit/rng.hpp"

namespace uq {

// Gradient oracle: returns the log-density and fills its gradient. A return
// of -infinity (gradient ignored) marks an invalid state.
using GradFn = std::function<double(std::span<const double>, std::span<double>)>;

struct PosteriorEnsemble {
  std::vector<ParamVector> members;
  std::string method;
  std::uint64_t seed = 0;
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
  int divergences = 0;
  double final_step_size = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
  // When nonempty, predictions use the first-order expansion around this
  // point instead of forward passes at each member.
  ParamVector linear_base;
  // Hierarchical traces, one entry per retained sample.
  std::vector<double> sigma_theta2_trace;
  std::vector<double> sigma_u2_trace;

  int count() const { return static_cast<int>(members.size()); }
  int dim() const { return members.empty() ? 0 : static_cast<int>(members.front().size()); }
};

// leapfrog_steps is the per-proposal maximum: each proposal integrates for a
// length drawn uniformly from the upper half of [1, leapfrog_steps], which
// breaks the resonances fixed-length trajectories develop on near-quadratic
// targets. The step size adapts over the first adapt_fraction of burn_in
// proposals (warm start, dual averaging, then windowed acceptance matching
// toward target_accept) and stays frozen afterwards; divergences are counted
// from the freeze point on. With adapt_fraction = 0 the chain runs at eps0
// throughout.
struct HmcConfig {
  double eps0 = 0.1;
  int leapfrog_steps = 50;
  int burn_in = 2000;
  int samples = 1000;
  int lag = 1;
  double adapt_fraction = 0.8;
  double target_accept = 0.6;
  double divergence_threshold = 1000.0;

  void validate() const;
};

// T kick-drift-kick steps on H = -logpost(theta) + |m|^2/2. Returns false if
// any position, gradient, or log-density turns non-finite mid-trajectory;
// theta and momentum then hold the last finite state. logp_out receives the
// log-density at the final point.
bool leapfrog(std::span<double> theta, std::span<double> momentum, double eps, int steps,
              const GradFn& grad_fn, double& logp_out);

PosteriorEnsemble hmc_sample(const GradFn& grad_fn, std::span<const double> theta0,
                             const HmcConfig& cfg, CounterRng& rng);

struct LdConfig {
  double eps = 1e-4;
  int burn_in = 5000;
  int samples = 1000;
  int lag = 1;

  void validate() const;
};

// One unadjusted Langevin update: theta += (eps/2) grad + N(0, eps I).
void langevin_step(std::span<double> theta, double eps, std::span<const double> grad,
                   CounterRng& rng);

PosteriorEnsemble ld_sample(const GradFn& grad_fn, std::span<const double> theta0,
                            const LdConfig& cfg, CounterRng& rng);

// Minibatch log-posterior gradient for SGLD: log-likelihood over a random
// batch rescaled by N/|S|, plus the full prior. batch = 0 means full batch.
GradFn make_sgld_gradient(const MlpModel& m, const Dataset& data, const GaussianLikelihood& lik,
                          double sigma_theta2, int batch, CounterRng rng);

struct HierarchicalConfig {
  HmcConfig hmc;
  double h1 = 2.0, h2 = 0.25;
  double h3 = 2.0, h4 = 10.0;
  double sigma_theta2_init = 1.0;
  double sigma_u2_init = 1.0;
};

// Alternates one HMC proposal on theta with conjugate inverse-gamma draws of
// the prior and noise variances.
PosteriorEnsemble hierarchical_hmc_sample(const MlpModel& m, const Dataset& data,
                                          const HierarchicalConfig& cfg,
                                          std::span<const double> theta0, CounterRng& rng);

}  // namespace uq
