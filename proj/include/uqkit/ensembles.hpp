#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uqkit/dataset.hpp"
#include "uqkit/linalg.hpp"
#include "uqkit/mcmc.hpp"
#include "uqkit/mlp.hpp"
#include "uqkit/optimizer.hpp"
#include "uqkit/probmodel.hpp"
#include "uqkit/rng.hpp"

namespace uq {

// Draws a fresh parameter initialization for one training attempt.
using InitFn = std::function<ParamVector(CounterRng&)>;

struct EnsembleTrainConfig {
  double lr = 1e-4;
  int steps = 20000;
  double weight_decay = 5e-4;
  int max_retries = 3;  // fresh-initialization restarts on non-finite loss

  void validate() const;
};

// Adam minimization of obj starting from theta0. Throws std::runtime_error
// when the loss or an iterate turns non-finite.
ParamVector minimize_adam(const PointObjective& obj, ParamVector theta0, double lr, int steps);

// One ensemble member: draw an initialization, train, and retry with a fresh
// draw on divergence, up to cfg.max_retries restarts.
ParamVector fit_member(const PointObjective& obj, const InitFn& init,
                       const EnsembleTrainConfig& cfg, CounterRng& rng);

// n_members (at least 2) independent optima from distinct initializations.
// Member j draws everything from rng.stream(j), so the result does not depend
// on execution order; setting the UQ_THREADS environment variable to an
// integer above 1 trains members concurrently.
PosteriorEnsemble deep_ensemble_fit_objective(const PointObjective& obj, const InitFn& init,
                                              int n_members, const EnsembleTrainConfig& cfg,
                                              CounterRng& rng);

// Deep ensemble on the weight-decay regression loss with Xavier-normal
// initializations.
PosteriorEnsemble deep_ensemble_fit(const MlpModel& m, const Dataset& train, int n_members,
                                    const EnsembleTrainConfig& cfg, CounterRng& rng);

// One trajectory under the cyclical cosine schedule; the parameter vector at
// the end of each of the last t_used cycles becomes an ensemble member. The
// optimizer moments reset at each cycle start so the raised learning rate can
// carry the iterate into a different basin. A non-finite loss restarts the
// whole trajectory from a fresh initialization, up to max_retries times.
PosteriorEnsemble snapshot_ensemble_fit_objective(const PointObjective& obj, const InitFn& init,
                                                  const CyclicalSchedule& schedule,
                                                  CounterRng& rng, int max_retries = 3);

PosteriorEnsemble snapshot_ensemble_fit(const MlpModel& m, const Dataset& train,
                                        const CyclicalSchedule& schedule, CounterRng& rng);

// Gaussian fit to trajectory snapshots: mean and elementwise second moment
// over the banked snapshots plus the last `rank` deviations from the mean.
struct SwagFit {
  ParamVector mean;
  ParamVector second_moment;
  std::vector<ParamVector> deviation_bank;
  std::vector<std::string> warnings;

  int dim() const { return static_cast<int>(mean.size()); }
  int rank() const { return static_cast<int>(deviation_bank.size()); }
};

// Elementwise second_moment - mean^2, clamped at zero. Fitting records a
// warning when any coordinate needs the clamp.
ParamVector swag_diag_variance(const SwagFit& fit);

// Moments over all snapshots; the bank keeps the last q snapshots' deviations
// from that mean. Needs q >= 2 and q <= snapshots.size().
SwagFit swag_fit_from_snapshots(const std::vector<ParamVector>& snapshots, int q);

// Dense sampling covariance: half the diagonal fit plus half the low-rank
// bank covariance (deviation outer products over rank - 1).
DenseMatrix swag_covariance(const SwagFit& fit);

SwagFit swag_fit_objective(const PointObjective& obj, const InitFn& init,
                           const CyclicalSchedule& schedule, int q, CounterRng& rng,
                           int max_retries = 3);

SwagFit swag_fit(const MlpModel& m, const Dataset& train, const CyclicalSchedule& schedule, int q,
                 CounterRng& rng);

// theta = mean + sqrt(diag/2) z1 + Bank z2 / sqrt(2 (rank - 1)). The mean
// itself is the weight-averaged point prediction; a zero-covariance fit
// returns it for every sample.
PosteriorEnsemble swag_sample(const SwagFit& fit, int n_samples, CounterRng& rng);

}  // namespace uq
