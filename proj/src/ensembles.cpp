#include "uqkit/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace uq {

namespace {

bool finite_all(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_objective(const PointObjective& obj) {
  if (obj.dim < 1) throw std::invalid_argument("ensemble: objective dimension must be positive");
  if (!obj.loss_grad) throw std::invalid_argument("ensemble: objective has no loss_grad");
}

ParamVector draw_init(const PointObjective& obj, const InitFn& init, CounterRng& rng) {
  if (!init) throw std::invalid_argument("ensemble: empty initializer");
  ParamVector theta = init(rng);
  if (static_cast<int>(theta.size()) != obj.dim)
    throw std::invalid_argument("ensemble: initializer dimension does not match the objective");
  return theta;
}

int thread_count_from_env(int n_members) {
  const char* s = std::getenv("UQ_THREADS");
  if (s == nullptr) return 1;
  return std::clamp(std::atoi(s), 1, n_members);
}

// All cycle-end parameter vectors of the last t_used cycles; restarts the
// trajectory from a fresh initialization when the loss or iterate diverges.
std::vector<ParamVector> run_cyclical_trajectory(const PointObjective& obj, const InitFn& init,
                                                 const CyclicalSchedule& sched, CounterRng& rng,
                                                 int max_retries) {
  sched.validate();
  check_objective(obj);
  if (max_retries < 0) throw std::invalid_argument("ensemble: max_retries must be nonnegative");
  const int cycle = sched.cycle_length();

  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    ParamVector theta = draw_init(obj, init, rng);
    Adam opt(obj.dim, AdamConfig{sched.eps_init, 0.9, 0.999, 1e-8});
    std::vector<double> grad(obj.dim);
    std::vector<ParamVector> snaps;
    bool failed = false;

    for (int step = 0; step < sched.steps_total; ++step) {
      if (step % cycle == 0) opt.reset();
      opt.set_lr(cosine_lr(step, sched));
      double loss;
      try {
        loss = obj.loss_grad(theta, grad);
      } catch (const std::runtime_error&) {
        failed = true;
        break;
      }
      if (!std::isfinite(loss)) {
        failed = true;
        break;
      }
      opt.step(theta, grad);
      if (!finite_all(theta)) {
        failed = true;
        break;
      }
      if ((step + 1) % cycle == 0) {
        const int cycle_idx = (step + 1) / cycle - 1;
        if (cycle_idx >= sched.t_cycles - sched.t_used) snaps.push_back(theta);
      }
    }
    if (!failed) return snaps;
  }
  throw std::runtime_error("cyclical trajectory diverged after " + std::to_string(max_retries) +
                           " restarts");
}

}  // namespace

void EnsembleTrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("ensemble: lr must be positive");
  if (steps < 1) throw std::invalid_argument("ensemble: steps must be at least 1");
  if (weight_decay < 0.0)
    throw std::invalid_argument("ensemble: weight_decay must be nonnegative");
  if (max_retries < 0) throw std::invalid_argument("ensemble: max_retries must be nonnegative");
}

ParamVector minimize_adam(const PointObjective& obj, ParamVector theta0, double lr, int steps) {
  check_objective(obj);
  if (static_cast<int>(theta0.size()) != obj.dim)
    throw std::invalid_argument("minimize_adam: starting point does not match the objective");
  Adam opt(obj.dim, AdamConfig{lr, 0.9, 0.999, 1e-8});
  std::vector<double> grad(obj.dim);
  for (int step = 0; step < steps; ++step) {
    const double loss = obj.loss_grad(theta0, grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("minimize_adam: loss became non-finite at step " +
                               std::to_string(step));
    opt.step(theta0, grad);
    if (!finite_all(theta0))
      throw std::runtime_error("minimize_adam: iterate became non-finite at step " +
                               std::to_string(step));
  }
  return theta0;
}

ParamVector fit_member(const PointObjective& obj, const InitFn& init,
                       const EnsembleTrainConfig& cfg, CounterRng& rng) {
  cfg.validate();
  check_objective(obj);
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    ParamVector theta0 = draw_init(obj, init, rng);
    try {
      return minimize_adam(obj, std::move(theta0), cfg.lr, cfg.steps);
    } catch (const std::runtime_error&) {
    }
  }
  throw std::runtime_error("ensemble member diverged after " + std::to_string(cfg.max_retries) +
                           " restarts");
}

PosteriorEnsemble deep_ensemble_fit_objective(const PointObjective& obj, const InitFn& init,
                                              int n_members, const EnsembleTrainConfig& cfg,
                                              CounterRng& rng) {
  cfg.validate();
  check_objective(obj);
  if (n_members < 2)
    throw std::invalid_argument("deep ensemble needs at least 2 members");

  std::vector<ParamVector> members(n_members);
  std::vector<std::exception_ptr> errors(n_members);
  auto run_range = [&](int lo, int hi) {
    for (int j = lo; j < hi; ++j) {
      try {
        CounterRng member_rng = rng.stream(static_cast<std::uint64_t>(j));
        members[j] = fit_member(obj, init, cfg, member_rng);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };

  const int n_threads = thread_count_from_env(n_members);
  if (n_threads <= 1) {
    run_range(0, n_members);
  } else {
    std::vector<std::thread> pool;
    const int block = (n_members + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int lo = t * block;
      const int hi = std::min(n_members, lo + block);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorEnsemble ens;
  ens.method = "dens";
  ens.members = std::move(members);
  return ens;
}

PosteriorEnsemble deep_ensemble_fit(const MlpModel& m, const Dataset& train, int n_members,
                                    const EnsembleTrainConfig& cfg, CounterRng& rng) {
  if (train.size() == 0) throw std::invalid_argument("deep_ensemble_fit: empty dataset");
  const PointObjective obj = make_regression_objective(m, train, cfg.weight_decay);
  const InitFn init = [&m](CounterRng& r) { return init_xavier_normal(m, r); };
  return deep_ensemble_fit_objective(obj, init, n_members, cfg, rng);
}

PosteriorEnsemble snapshot_ensemble_fit_objective(const PointObjective& obj, const InitFn& init,
                                                  const CyclicalSchedule& schedule,
                                                  CounterRng& rng, int max_retries) {
  PosteriorEnsemble ens;
  ens.method = "sens";
  ens.members = run_cyclical_trajectory(obj, init, schedule, rng, max_retries);
  return ens;
}

PosteriorEnsemble snapshot_ensemble_fit(const MlpModel& m, const Dataset& train,
                                        const CyclicalSchedule& schedule, CounterRng& rng) {
  if (train.size() == 0) throw std::invalid_argument("snapshot_ensemble_fit: empty dataset");
  const PointObjective obj = make_regression_objective(m, train, 0.0);
  const InitFn init = [&m](CounterRng& r) { return init_xavier_normal(m, r); };
  return snapshot_ensemble_fit_objective(obj, init, schedule, rng);
}

ParamVector swag_diag_variance(const SwagFit& fit) {
  ParamVector diag(fit.dim());
  for (int i = 0; i < fit.dim(); ++i)
    diag[i] = std::max(0.0, fit.second_moment[i] - fit.mean[i] * fit.mean[i]);
  return diag;
}

SwagFit swag_fit_from_snapshots(const std::vector<ParamVector>& snapshots, int q) {
  if (q < 2) throw std::invalid_argument("swag: rank must be at least 2");
  if (static_cast<int>(snapshots.size()) < q)
    throw std::invalid_argument("swag: rank exceeds the snapshot count");
  const std::size_t k = snapshots.front().size();
  for (const auto& s : snapshots)
    if (s.size() != k) throw std::invalid_argument("swag: snapshot dimensions differ");

  SwagFit fit;
  fit.mean.assign(k, 0.0);
  fit.second_moment.assign(k, 0.0);
  const double inv = 1.0 / snapshots.size();
  for (const auto& s : snapshots)
    for (std::size_t i = 0; i < k; ++i) {
      fit.mean[i] += s[i] * inv;
      fit.second_moment[i] += s[i] * s[i] * inv;
    }

  bool clamped = false;
  for (std::size_t i = 0; i < k; ++i)
    if (fit.second_moment[i] - fit.mean[i] * fit.mean[i] < 0.0) clamped = true;
  if (clamped)
    fit.warnings.push_back("swag: negative diagonal variance clamped to zero");

  fit.deviation_bank.reserve(q);
  for (std::size_t j = snapshots.size() - q; j < snapshots.size(); ++j) {
    ParamVector dev(k);
    for (std::size_t i = 0; i < k; ++i) dev[i] = snapshots[j][i] - fit.mean[i];
    fit.deviation_bank.push_back(std::move(dev));
  }
  return fit;
}

DenseMatrix swag_covariance(const SwagFit& fit) {
  const int k = fit.dim();
  if (fit.rank() < 2) throw std::invalid_argument("swag: bank rank must be at least 2");
  DenseMatrix cov(k, k);
  const ParamVector diag = swag_diag_variance(fit);
  for (int i = 0; i < k; ++i) cov(i, i) = 0.5 * diag[i];
  const double w = 0.5 / (fit.rank() - 1.0);
  for (const auto& d : fit.deviation_bank)
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) cov(r, c) += w * d[r] * d[c];
  return cov;
}

SwagFit swag_fit_objective(const PointObjective& obj, const InitFn& init,
                           const CyclicalSchedule& schedule, int q, CounterRng& rng,
                           int max_retries) {
  const std::vector<ParamVector> snaps =
      run_cyclical_trajectory(obj, init, schedule, rng, max_retries);
  return swag_fit_from_snapshots(snaps, q);
}

SwagFit swag_fit(const MlpModel& m, const Dataset& train, const CyclicalSchedule& schedule, int q,
                 CounterRng& rng) {
  if (train.size() == 0) throw std::invalid_argument("swag_fit: empty dataset");
  const PointObjective obj = make_regression_objective(m, train, 0.0);
  const InitFn init = [&m](CounterRng& r) { return init_xavier_normal(m, r); };
  return swag_fit_objective(obj, init, schedule, q, rng);
}

PosteriorEnsemble swag_sample(const SwagFit& fit, int n_samples, CounterRng& rng) {
  if (n_samples < 1) throw std::invalid_argument("swag_sample: n_samples must be at least 1");
  if (fit.rank() < 2) throw std::invalid_argument("swag_sample: bank rank must be at least 2");
  const int k = fit.dim();
  const ParamVector diag = swag_diag_variance(fit);
  ParamVector scale(k);
  for (int i = 0; i < k; ++i) scale[i] = std::sqrt(0.5 * diag[i]);
  const double bank_scale = 1.0 / std::sqrt(2.0 * (fit.rank() - 1.0));

  PosteriorEnsemble ens;
  ens.method = "swag";
  ens.warnings = fit.warnings;
  ens.members.reserve(n_samples);
  for (int t = 0; t < n_samples; ++t) {
    ParamVector theta = fit.mean;
    for (int i = 0; i < k; ++i) theta[i] += scale[i] * rng.normal();
    for (const auto& d : fit.deviation_bank) {
      const double z = bank_scale * rng.normal();
      for (int i = 0; i < k; ++i) theta[i] += z * d[i];
    }
    ens.members.push_back(std::move(theta));
  }
  return ens;
}

}  // namespace uq
