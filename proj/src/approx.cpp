#include "uqkit/approx.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "uqkit/optimizer.hpp"
#include "uqkit/stats.hpp"

namespace uq {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Dataset gather_batch(const Dataset& data, int batch, CounterRng& rng) {
  Dataset out;
  out.x_dim = data.x_dim;
  out.x.reserve(static_cast<std::size_t>(batch) * data.x_dim);
  out.u.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    const int i = std::min(data.size() - 1, static_cast<int>(rng.uniform() * data.size()));
    const auto xi = data.input(i);
    out.x.insert(out.x.end(), xi.begin(), xi.end());
    out.u.push_back(data.u[i]);
  }
  return out;
}

// Half-cosine decay from lr to lr * 1e-3 across the step budget.
double decayed_lr(double lr, int step, int steps_total) {
  if (steps_total <= 1) return lr;
  const double lo = lr * 1e-3;
  const double phase = static_cast<double>(step) / (steps_total - 1);
  return lo + (lr - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

std::vector<ad::Var> mlp_forward_tape_masked(const MlpModel& m, ad::Tape& tape,
                                             std::span<const ad::Var> theta,
                                             std::span<const double> x,
                                             std::span<const int> mask) {
  const int layers = m.layer_count();
  std::vector<ad::Var> cur;
  cur.reserve(m.input_dim());
  for (double xi : x) cur.push_back(ad::make_var(tape, xi));
  int off = 0;
  int mask_off = 0;
  for (int l = 0; l < layers; ++l) {
    const int nin = m.widths[l];
    const int nout = m.widths[l + 1];
    std::vector<ad::Var> next;
    next.reserve(nout);
    const bool hidden = (l + 1 < layers);
    for (int j = 0; j < nout; ++j) {
      ad::Var acc = theta[off + nout * nin + j];
      for (int i = 0; i < nin; ++i) acc = acc + theta[off + j * nin + i] * cur[i];
      if (hidden) {
        if (m.act == Activation::Tanh) acc = ad::tanh(acc);
        acc = acc * static_cast<double>(mask[mask_off + j]);
      }
      next.push_back(acc);
    }
    cur = std::move(next);
    off += nout * nin + nout;
    if (hidden) mask_off += nout;
  }
  return cur;
}

// Lower Cholesky factor, retrying with growing diagonal jitter on failure.
DenseMatrix chol_with_jitter(const DenseMatrix& a, double& jitter_out,
                             std::vector<std::string>& warnings) {
  const auto n = static_cast<Eigen::Index>(a.rows);
  Eigen::MatrixXd mat(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) mat(i, j) = a(i, j);

  jitter_out = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(mat);
  if (llt.info() != Eigen::Success) {
    for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
      Eigen::MatrixXd shifted = mat + jitter * Eigen::MatrixXd::Identity(n, n);
      llt.compute(shifted);
      if (llt.info() == Eigen::Success) {
        jitter_out = jitter;
        warnings.push_back("curvature factorization needed diagonal jitter " +
                           std::to_string(jitter));
        break;
      }
    }
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("curvature matrix is not positive definite even with jitter 1e-6");
  }

  Eigen::MatrixXd lower = llt.matrixL();
  DenseMatrix out(a.rows, a.cols);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out(i, j) = lower(i, j);
  return out;
}

void solve_lower(const DenseMatrix& l, std::span<const double> b, std::span<double> y) {
  const std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < i; ++j) acc -= l(i, j) * y[j];
    y[i] = acc / l(i, i);
  }
}

void solve_lower_transposed(const DenseMatrix& l, std::span<const double> b, std::span<double> y) {
  const std::size_t n = l.rows;
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= l(j, i) * y[j];
    y[i] = acc / l(i, i);
  }
}

std::vector<double> output_grad(const MlpModel& m, std::span<const double> theta,
                                std::span<const double> x) {
  std::vector<double> g(theta.size());
  grad_params(
      m, theta,
      [&](ad::Tape& tape, std::span<const ad::Var> th) {
        return mlp_forward_tape(m, tape, th, x)[0];
      },
      g);
  return g;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

void check_laplace_likelihood(const MlpModel& m, const GaussianLikelihood& lik,
                              double sigma_theta2) {
  if (lik.mode == NoiseMode::Heteroscedastic)
    throw std::invalid_argument(
        "laplace: heteroscedastic likelihoods are not supported; the curvature assembly assumes "
        "a homoscedastic Gaussian noise model");
  if (m.output_dim() != 1)
    throw std::invalid_argument("laplace: scalar-output models only");
  if (!(lik.sigma_u > 0.0)) throw std::invalid_argument("laplace: sigma_u must be positive");
  if (!(sigma_theta2 > 0.0))
    throw std::invalid_argument("laplace: sigma_theta2 must be positive");
}

}  // namespace

void MfviConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("mfvi: lr must be positive");
  if (steps < 0) throw std::invalid_argument("mfvi: steps must be nonnegative");
  if (batch < 0) throw std::invalid_argument("mfvi: batch must be nonnegative");
  if (eval_every < 1) throw std::invalid_argument("mfvi: eval_every must be at least 1");
  if (patience < 1) throw std::invalid_argument("mfvi: patience must be at least 1");
}

void McdConfig::validate() const {
  check_rate(rate);
  if (!(lr > 0.0)) throw std::invalid_argument("mcd: lr must be positive");
  if (steps < 1) throw std::invalid_argument("mcd: steps must be at least 1");
  if (batch < 0) throw std::invalid_argument("mcd: batch must be nonnegative");
  if (weight_decay < 0.0) throw std::invalid_argument("mcd: weight_decay must be nonnegative");
}

void MapConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("map: lr must be positive");
  if (steps < 1) throw std::invalid_argument("map: steps must be at least 1");
}

double kl_mean_field(const MeanFieldPosterior& q, double sigma_theta2) {
  if (!(sigma_theta2 > 0.0))
    throw std::invalid_argument("kl_mean_field: sigma_theta2 must be positive");
  if (q.mu.size() != q.rho.size())
    throw std::invalid_argument("kl_mean_field: mu and rho sizes differ");
  double kl = 0.0;
  for (int j = 0; j < q.dim(); ++j) {
    const double s = q.sigma(j);
    kl += gaussian_kl(q.mu[j], s * s, 0.0, sigma_theta2);
  }
  return kl;
}

double elbo(const MlpModel& m, const MeanFieldPosterior& q, const Dataset& data,
            const GaussianLikelihood& lik, double sigma_theta2, int n_mc, CounterRng& rng) {
  if (n_mc < 1) throw std::invalid_argument("elbo: n_mc must be at least 1");
  if (q.dim() != m.param_count())
    throw std::invalid_argument("elbo: posterior dimension does not match the model");
  const int k = q.dim();
  double ll_sum = 0.0;
  ParamVector theta(k);
  for (int t = 0; t < n_mc; ++t) {
    for (int j = 0; j < k; ++j) theta[j] = q.mu[j] + q.sigma(j) * rng.normal();
    if (data.size() > 0) ll_sum += log_likelihood(m, theta, data, lik);
  }
  return ll_sum / n_mc - kl_mean_field(q, sigma_theta2);
}

double elbo_value_grad(const MlpModel& m, std::span<const double> mu, std::span<const double> rho,
                       std::span<const double> z, const Dataset& data,
                       const GaussianLikelihood& lik, double sigma_theta2,
                       std::span<double> grad_mu, std::span<double> grad_rho, double lik_scale) {
  const std::size_t k = mu.size();
  if (rho.size() != k || z.size() != k || grad_mu.size() != k || grad_rho.size() != k)
    throw std::invalid_argument("elbo_value_grad: size mismatch");
  if (static_cast<int>(k) != m.param_count())
    throw std::invalid_argument("elbo_value_grad: dimension does not match the model");
  if (!(sigma_theta2 > 0.0))
    throw std::invalid_argument("elbo_value_grad: sigma_theta2 must be positive");

  ad::Tape tape;
  std::vector<ad::Var> mu_v, rho_v;
  mu_v.reserve(k);
  rho_v.reserve(k);
  for (double v : mu) mu_v.push_back(ad::make_var(tape, v));
  for (double v : rho) rho_v.push_back(ad::make_var(tape, v));

  std::vector<ad::Var> sigma_v, theta_v;
  sigma_v.reserve(k);
  theta_v.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    sigma_v.push_back(ad::softplus(rho_v[j]));
    theta_v.push_back(mu_v[j] + sigma_v[j] * z[j]);
  }

  const double log_sp = 0.5 * std::log(sigma_theta2);
  ad::Var kl = ad::make_var(tape, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    kl = kl + (log_sp - ad::log(sigma_v[j])) +
         (sigma_v[j] * sigma_v[j] + mu_v[j] * mu_v[j]) * (0.5 / sigma_theta2) - 0.5;
  }

  ad::Var bound = ad::make_var(tape, 0.0) - kl;
  if (data.size() > 0)
    bound = bound + log_likelihood_tape(m, tape, theta_v, data, lik) * lik_scale;

  if (!std::isfinite(bound.v))
    throw std::runtime_error("elbo_value_grad: objective is not finite");

  std::vector<double> adj;
  tape.backward(bound.idx, adj);
  for (std::size_t j = 0; j < k; ++j) {
    grad_mu[j] = adj[mu_v[j].idx];
    grad_rho[j] = adj[rho_v[j].idx];
  }
  return bound.v;
}

MeanFieldPosterior mfvi_fit(const MlpModel& m, const Dataset& train, const GaussianLikelihood& lik,
                            double sigma_theta2, const MfviConfig& cfg, CounterRng& rng) {
  cfg.validate();
  const int k = m.param_count();
  MeanFieldPosterior q;
  q.mu = init_xavier_normal(m, rng);
  q.rho.assign(k, cfg.rho_init);

  std::vector<double> z(k), grad_mu(k), grad_rho(k), neg_grad(2 * k);
  std::vector<double> w(2 * k);
  std::copy(q.mu.begin(), q.mu.end(), w.begin());
  std::copy(q.rho.begin(), q.rho.end(), w.begin() + k);

  Adam opt(2 * k, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const bool use_batches = cfg.batch > 0 && cfg.batch < train.size();
  const double scale = use_batches ? static_cast<double>(train.size()) / cfg.batch : 1.0;

  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<double> best_w = w;
  int bad_checks = 0;
  bool stopped_early = false;

  for (int step = 0; step < cfg.steps && !stopped_early; ++step) {
    const Dataset batch = use_batches ? gather_batch(train, cfg.batch, rng) : Dataset{};
    const Dataset& view = use_batches ? batch : train;
    for (int j = 0; j < k; ++j) z[j] = rng.normal();

    double value;
    try {
      value = elbo_value_grad(m, std::span<const double>(w.data(), k),
                              std::span<const double>(w.data() + k, k), z, view, lik,
                              sigma_theta2, grad_mu, grad_rho, scale);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("mfvi: objective became non-finite at step " +
                               std::to_string(step));
    }
    if (!std::isfinite(value))
      throw std::runtime_error("mfvi: objective became non-finite at step " +
                               std::to_string(step));

    for (int j = 0; j < k; ++j) {
      neg_grad[j] = -grad_mu[j];
      neg_grad[k + j] = -grad_rho[j];
    }
    if (cfg.cosine_decay) opt.set_lr(decayed_lr(cfg.lr, step, cfg.steps));
    opt.step(w, neg_grad);

    if (cfg.validation != nullptr && (step + 1) % cfg.eval_every == 0) {
      const double val_ll = log_likelihood(
          m, std::span<const double>(w.data(), k), *cfg.validation, lik);
      if (val_ll > best_val) {
        best_val = val_ll;
        best_w = w;
        bad_checks = 0;
      } else if (++bad_checks >= cfg.patience) {
        w = best_w;
        stopped_early = true;
      }
    }
  }

  std::copy(w.begin(), w.begin() + k, q.mu.begin());
  std::copy(w.begin() + k, w.end(), q.rho.begin());
  return q;
}

PosteriorEnsemble mfvi_sample(const MeanFieldPosterior& q, int n_samples, CounterRng& rng) {
  if (n_samples < 1) throw std::invalid_argument("mfvi_sample: n_samples must be at least 1");
  PosteriorEnsemble ens;
  ens.method = "mfvi";
  ens.members.reserve(n_samples);
  const int k = q.dim();
  for (int t = 0; t < n_samples; ++t) {
    ParamVector theta(k);
    for (int j = 0; j < k; ++j) theta[j] = q.mu[j] + q.sigma(j) * rng.normal();
    ens.members.push_back(std::move(theta));
  }
  return ens;
}

int hidden_unit_count(const MlpModel& m) {
  int n = 0;
  for (std::size_t l = 1; l + 1 < m.widths.size(); ++l) n += m.widths[l];
  return n;
}

std::vector<int> draw_hidden_mask(const MlpModel& m, double rate, CounterRng& rng) {
  check_rate(rate);
  std::vector<int> mask(hidden_unit_count(m));
  for (auto& e : mask) e = rng.uniform() < rate ? 0 : 1;
  return mask;
}

ParamVector apply_hidden_mask(const MlpModel& m, std::span<const double> theta,
                              std::span<const int> mask) {
  check_shapes(m, theta.size(), m.input_dim());
  if (static_cast<int>(mask.size()) != hidden_unit_count(m))
    throw std::invalid_argument("apply_hidden_mask: mask length does not match hidden units");
  ParamVector out(theta.begin(), theta.end());
  int mask_off = 0;
  for (int l = 1; l < m.layer_count(); ++l) {
    const int nunits = m.widths[l];
    const int next_out = m.widths[l + 1];
    const int w_off = layer_weight_offset(m, l);
    for (int j = 0; j < nunits; ++j) {
      if (mask[mask_off + j] != 0) continue;
      for (int r = 0; r < next_out; ++r) out[w_off + r * nunits + j] = 0.0;
    }
    mask_off += nunits;
  }
  return out;
}

ParamVector mcd_train(const MlpModel& m, const Dataset& train, const McdConfig& cfg,
                      CounterRng& rng) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("mcd_train: empty dataset");
  const int k = m.param_count();
  ParamVector theta = init_xavier_normal(m, rng);
  std::vector<double> grad(k);
  Adam opt(k, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const bool use_batches = cfg.batch > 0 && cfg.batch < train.size();

  for (int step = 0; step < cfg.steps; ++step) {
    const std::vector<int> mask = draw_hidden_mask(m, cfg.rate, rng);
    const Dataset batch = use_batches ? gather_batch(train, cfg.batch, rng) : Dataset{};
    const Dataset& view = use_batches ? batch : train;
    grad_params(
        m, theta,
        [&](ad::Tape& tape, std::span<const ad::Var> th) {
          ad::Var loss = ad::make_var(tape, 0.0);
          for (int i = 0; i < view.size(); ++i) {
            auto out = mlp_forward_tape_masked(m, tape, th, view.input(i), mask);
            ad::Var r = out[0] - view.u[i];
            loss = loss + r * r;
          }
          loss = loss * (0.5 / view.size());
          if (cfg.weight_decay > 0.0) {
            ad::Var ss = ad::make_var(tape, 0.0);
            for (const ad::Var& t : th) ss = ss + t * t;
            loss = loss + ss * (0.5 * cfg.weight_decay);
          }
          return loss;
        },
        grad);
    opt.step(theta, grad);
  }
  return theta;
}

std::vector<double> mcd_predict(const MlpModel& m, std::span<const double> theta, double rate,
                                std::span<const double> x, int n_samples, CounterRng& rng) {
  check_rate(rate);
  if (n_samples < 1) throw std::invalid_argument("mcd_predict: n_samples must be at least 1");
  std::vector<double> preds;
  preds.reserve(n_samples);
  for (int t = 0; t < n_samples; ++t) {
    const std::vector<int> mask = draw_hidden_mask(m, rate, rng);
    const ParamVector masked = apply_hidden_mask(m, theta, mask);
    preds.push_back(mlp_forward(m, masked, x)[0]);
  }
  return preds;
}

PosteriorEnsemble mcd_ensemble(const MlpModel& m, std::span<const double> theta, double rate,
                               int n_samples, CounterRng& rng) {
  check_rate(rate);
  if (n_samples < 1) throw std::invalid_argument("mcd_ensemble: n_samples must be at least 1");
  PosteriorEnsemble ens;
  ens.method = "mcd";
  ens.members.reserve(n_samples);
  for (int t = 0; t < n_samples; ++t) {
    const std::vector<int> mask = draw_hidden_mask(m, rate, rng);
    ens.members.push_back(apply_hidden_mask(m, theta, mask));
  }
  return ens;
}

LaplaceFit laplace_fit_at(const MlpModel& m, std::span<const double> theta_hat,
                          const Dataset& data, const GaussianLikelihood& lik,
                          double sigma_theta2) {
  check_laplace_likelihood(m, lik, sigma_theta2);
  check_shapes(m, theta_hat.size(), m.input_dim());
  const int k = m.param_count();

  LaplaceFit fit;
  fit.theta_hat.assign(theta_hat.begin(), theta_hat.end());
  fit.curvature = DenseMatrix(k, k);
  for (int j = 0; j < k; ++j) fit.curvature(j, j) = 1.0 / sigma_theta2;

  const double inv_var = 1.0 / (lik.sigma_u * lik.sigma_u);
  for (int i = 0; i < data.size(); ++i) {
    const std::vector<double> g = output_grad(m, theta_hat, data.input(i));
    for (int r = 0; r < k; ++r) {
      const double gr = g[r] * inv_var;
      if (gr == 0.0) continue;
      for (int c = 0; c < k; ++c) fit.curvature(r, c) += gr * g[c];
    }
  }

  fit.chol = chol_with_jitter(fit.curvature, fit.jitter, fit.warnings);
  return fit;
}

LaplaceFit laplace_fit(const MlpModel& m, const Dataset& data, const GaussianLikelihood& lik,
                       double sigma_theta2, const MapConfig& cfg, CounterRng& rng) {
  cfg.validate();
  check_laplace_likelihood(m, lik, sigma_theta2);
  if (data.size() == 0) throw std::invalid_argument("laplace_fit: empty dataset");

  const int k = m.param_count();
  ParamVector theta = init_xavier_normal(m, rng);
  std::vector<double> grad(k);
  PointObjective obj = make_map_objective(m, data, lik, sigma_theta2);
  Adam opt(k, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  for (int step = 0; step < cfg.steps; ++step) {
    obj.loss_grad(theta, grad);
    if (cfg.cosine_decay) opt.set_lr(decayed_lr(cfg.lr, step, cfg.steps));
    opt.step(theta, grad);
  }
  return laplace_fit_at(m, theta, data, lik, sigma_theta2);
}

double laplace_predict_var(const LaplaceFit& fit, const MlpModel& m, std::span<const double> x) {
  const std::vector<double> g = output_grad(m, fit.theta_hat, x);
  std::vector<double> y(g.size());
  solve_lower(fit.chol, g, y);
  return std::max(0.0, squared_norm(y));
}

PosteriorEnsemble laplace_sample(const LaplaceFit& fit, int n_samples, CounterRng& rng) {
  if (n_samples < 1) throw std::invalid_argument("laplace_sample: n_samples must be at least 1");
  const int k = fit.dim();
  PosteriorEnsemble ens;
  ens.method = "la";
  ens.linear_base = fit.theta_hat;
  ens.members.reserve(n_samples);
  std::vector<double> z(k), y(k);
  for (int t = 0; t < n_samples; ++t) {
    for (int j = 0; j < k; ++j) z[j] = rng.normal();
    solve_lower_transposed(fit.chol, z, y);
    ParamVector theta(k);
    for (int j = 0; j < k; ++j) theta[j] = fit.theta_hat[j] + y[j];
    ens.members.push_back(std::move(theta));
  }
  return ens;
}

double laplace_log_evidence(const LaplaceFit& fit, const MlpModel& m, const Dataset& data,
                            const GaussianLikelihood& lik, double sigma_theta2) {
  check_laplace_likelihood(m, lik, sigma_theta2);
  const int k = fit.dim();
  double log_det_half = 0.0;
  for (int j = 0; j < k; ++j) log_det_half += std::log(fit.chol(j, j));
  const double ll = data.size() > 0 ? log_likelihood(m, fit.theta_hat, data, lik) : 0.0;
  return ll + log_prior_iid(fit.theta_hat, sigma_theta2) + 0.5 * k * kLog2Pi - log_det_half;
}

LaplaceGridResult laplace_grid_search(const MlpModel& m, const Dataset& data,
                                      std::span<const double> sigma_theta2_grid,
                                      std::span<const double> sigma_u_grid, const MapConfig& cfg,
                                      CounterRng& rng) {
  if (sigma_theta2_grid.empty() || sigma_u_grid.empty())
    throw std::invalid_argument("laplace_grid_search: empty grid");
  LaplaceGridResult best;
  best.log_evidence = -std::numeric_limits<double>::infinity();
  std::uint64_t idx = 0;
  for (double st2 : sigma_theta2_grid) {
    for (double su : sigma_u_grid) {
      GaussianLikelihood lik;
      lik.mode = NoiseMode::HomoscedasticKnown;
      lik.sigma_u = su;
      CounterRng pair_rng = rng.stream(idx++);
      LaplaceFit fit = laplace_fit(m, data, lik, st2, cfg, pair_rng);
      const double ev = laplace_log_evidence(fit, m, data, lik, st2);
      if (ev > best.log_evidence) {
        best.log_evidence = ev;
        best.sigma_theta2 = st2;
        best.sigma_u = su;
        best.fit = std::move(fit);
      }
    }
  }
  return best;
}

}  // namespace uq
