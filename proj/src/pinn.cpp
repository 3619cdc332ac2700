#include "uqkit/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "uqkit/stats.hpp"

namespace uq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  if (n == 1) {
    out.push_back(0.5 * (lo + hi));
    return out;
  }
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

}  // namespace

double steep_lambda(double x) {
  const double c = std::cos(3.0 * x);
  return 0.2 + std::exp(x * x) * c * c;
}

double steep_source(double x) {
  const double l = 0.4;
  const double s = std::sin(3.0 * x);
  const double dx = x - 0.25;
  return std::exp(-dx * dx / (2.0 * l * l)) * s * s;
}

double initial_profile(double x) {
  const double c = std::cos(std::numbers::pi * x);
  return c * c;
}

void PdeProblem::validate() const {
  if (!(diffusion > 0.0)) throw std::invalid_argument("pde: diffusion must be positive");
  if (!(t_end > 0.0)) throw std::invalid_argument("pde: t_end must be positive");
  if (!lambda_fn || !source_fn || !ic_fn)
    throw std::invalid_argument("pde: lambda, source, and initial-condition functions must be set");
}

void PinnChannel::validate(const std::string& name) const {
  if (x_dim < 1) throw std::invalid_argument("channel " + name + ": x_dim must be positive");
  if (x.size() != value.size() * static_cast<std::size_t>(x_dim))
    throw std::invalid_argument("channel " + name + ": input and value sizes disagree");
  if (!value.empty() && !(sigma > 0.0))
    throw std::invalid_argument("channel " + name + ": noise scale must be positive");
}

void PinnDataset::validate() const {
  source.validate("source");
  boundary.validate("boundary");
  solution.validate("solution");
  rate.validate("rate");
  if (source.x_dim != 2 || boundary.x_dim != 2 || solution.x_dim != 2)
    throw std::invalid_argument("field channels must carry (t, x) inputs");
  if (rate.x_dim != 1) throw std::invalid_argument("rate channel must carry x inputs");
}

int PinnDataset::total_points() const {
  return source.size() + boundary.size() + solution.size() + rate.size();
}

std::span<const double> PinnModel::u_params(std::span<const double> theta) const {
  return theta.subspan(0, static_cast<std::size_t>(u_net.param_count()));
}

std::span<const double> PinnModel::lam_params(std::span<const double> theta) const {
  return theta.subspan(static_cast<std::size_t>(u_net.param_count()));
}

void PinnModel::validate() const {
  problem.validate();
  if (u_net.input_dim() != 2) throw std::invalid_argument("solution net must take (t, x)");
  const int u_out = noise == PinnNoise::LearnedHetero ? 2 : 1;
  if (u_net.output_dim() != u_out)
    throw std::invalid_argument("solution net output width must be " + std::to_string(u_out));
  if (lam_net.input_dim() != 1 || lam_net.output_dim() != 1)
    throw std::invalid_argument("rate net must map x to a scalar");
}

PinnModel make_steep_model(PinnNoise noise) {
  PinnModel m;
  m.u_net.widths = {2, 50, 50, noise == PinnNoise::LearnedHetero ? 2 : 1};
  m.lam_net.widths = {1, 50, 50, 1};
  m.noise = noise;
  return m;
}

double pinn_u(const PinnModel& m, std::span<const double> theta, double t, double x) {
  const double in[2] = {t, x};
  return mlp_forward(m.u_net, m.u_params(theta), std::span<const double>(in, 2))[0];
}

double pinn_lambda(const PinnModel& m, std::span<const double> theta, double x) {
  if (m.lambda_known) return m.problem.lambda_fn(x);
  return mlp_forward(m.lam_net, m.lam_params(theta), std::span<const double>(&x, 1))[0];
}

double pinn_u_variance(const PinnModel& m, std::span<const double> theta, double t, double x) {
  if (m.noise != PinnNoise::LearnedHetero)
    throw std::logic_error("model has no learned variance head");
  const double in[2] = {t, x};
  auto out = mlp_forward(m.u_net, m.u_params(theta), std::span<const double>(in, 2));
  return hetero_variance(out, 1);
}

double pinn_residual(const PinnModel& m, std::span<const double> theta, double t, double x) {
  const double in[2] = {t, x};
  const std::span<const double> point(in, 2);
  auto jx = mlp_input_jet(m.u_net, m.u_params(theta), point, 1);
  auto jt = mlp_input_jet1(m.u_net, m.u_params(theta), point, 0);
  const double lam = pinn_lambda(m, theta, x);
  return residual_value(jt[0].d1, jx[0].d2, jx[0].v, lam, m.problem.diffusion);
}

namespace {

struct ThetaSplit {
  std::span<const ad::Var> u;
  std::span<const ad::Var> lam;
};

ThetaSplit split_theta(const PinnModel& m, std::span<const ad::Var> th) {
  const std::size_t ku = static_cast<std::size_t>(m.u_net.param_count());
  return {th.subspan(0, ku), th.subspan(ku)};
}

ad::Var residual_tape(const PinnModel& m, ad::Tape& tape, const ThetaSplit& th, double t,
                      double x) {
  const double in[2] = {t, x};
  const std::span<const double> point(in, 2);
  auto jx = mlp_forward_jet2_tape(m.u_net, tape, th.u, point, 1);
  auto jt = mlp_forward_jet1_tape(m.u_net, tape, th.u, point, 0);
  ad::Var u = jx[0].v;
  ad::Var u3 = u * u * u;
  ad::Var linear = jt[0].d1 - m.problem.diffusion * jx[0].d2;
  if (m.lambda_known) return linear + u3 * m.problem.lambda_fn(x);
  ad::Var lam = mlp_forward_tape(m.lam_net, tape, th.lam, std::span<const double>(&x, 1))[0];
  return linear + lam * u3;
}

// Shared tape assembly of the four-channel log-likelihood.
ad::Var log_likelihood_var(const PinnModel& m, ad::Tape& tape, std::span<const ad::Var> theta,
                           const PinnDataset& d) {
  const ThetaSplit th = split_theta(m, theta);
  ad::Var acc = ad::make_var(tape, 0.0);
  double constant = 0.0;

  if (d.source.size() > 0) {
    const double s2 = d.source.sigma * d.source.sigma;
    const double inv2 = 0.5 / s2;
    constant += -0.5 * d.source.size() * std::log(kTwoPi * s2);
    for (int i = 0; i < d.source.size(); ++i) {
      auto in = d.source.input(i);
      ad::Var r = residual_tape(m, tape, th, in[0], in[1]);
      acc = acc - ad::square(r - d.source.value[i]) * inv2;
    }
  }

  if (d.boundary.size() > 0) {
    const double s2 = d.boundary.sigma * d.boundary.sigma;
    const double inv2 = 0.5 / s2;
    constant += -0.5 * d.boundary.size() * std::log(kTwoPi * s2);
    for (int i = 0; i < d.boundary.size(); ++i) {
      auto out = mlp_forward_tape(m.u_net, tape, th.u, d.boundary.input(i));
      acc = acc - ad::square(out[0] - d.boundary.value[i]) * inv2;
    }
  }

  if (d.solution.size() > 0) {
    if (m.noise == PinnNoise::LearnedHetero) {
      constant += -0.5 * d.solution.size() * std::log(kTwoPi);
      for (int i = 0; i < d.solution.size(); ++i) {
        auto out = mlp_forward_tape(m.u_net, tape, th.u, d.solution.input(i));
        ad::Var var = ad::softplus(out[1]);
        ad::Var se = ad::square(out[0] - d.solution.value[i]);
        acc = acc - 0.5 * ad::log(var) - se / (2.0 * var);
      }
    } else {
      const double s2 = d.solution.sigma * d.solution.sigma;
      const double inv2 = 0.5 / s2;
      constant += -0.5 * d.solution.size() * std::log(kTwoPi * s2);
      for (int i = 0; i < d.solution.size(); ++i) {
        auto out = mlp_forward_tape(m.u_net, tape, th.u, d.solution.input(i));
        acc = acc - ad::square(out[0] - d.solution.value[i]) * inv2;
      }
    }
  }

  if (d.rate.size() > 0) {
    const double s2 = d.rate.sigma * d.rate.sigma;
    const double inv2 = 0.5 / s2;
    constant += -0.5 * d.rate.size() * std::log(kTwoPi * s2);
    for (int i = 0; i < d.rate.size(); ++i) {
      const double x = d.rate.input(i)[0];
      if (m.lambda_known) {
        const double diff = m.problem.lambda_fn(x) - d.rate.value[i];
        constant += -diff * diff * inv2;
      } else {
        auto out = mlp_forward_tape(m.lam_net, tape, th.lam, std::span<const double>(&x, 1));
        acc = acc - ad::square(out[0] - d.rate.value[i]) * inv2;
      }
    }
  }

  return acc + constant;
}

double hetero_point_loglik(double pred, double raw_var, double y) {
  const double var = ad::softplus(raw_var);
  const double diff = pred - y;
  return -0.5 * std::log(kTwoPi * var) - diff * diff / (2.0 * var);
}

}  // namespace

double pinn_log_likelihood(const PinnModel& m, std::span<const double> theta,
                           const PinnDataset& d) {
  m.validate();
  d.validate();
  check_shapes(m.u_net, m.u_params(theta).size(), 2);
  check_shapes(m.lam_net, m.lam_params(theta).size(), 1);

  double ll = 0.0;
  for (int i = 0; i < d.source.size(); ++i) {
    auto in = d.source.input(i);
    const double r = pinn_residual(m, theta, in[0], in[1]);
    ll += normal_logpdf(d.source.value[i], r, d.source.sigma * d.source.sigma);
  }
  for (int i = 0; i < d.boundary.size(); ++i) {
    auto in = d.boundary.input(i);
    const double p = pinn_u(m, theta, in[0], in[1]);
    ll += normal_logpdf(d.boundary.value[i], p, d.boundary.sigma * d.boundary.sigma);
  }
  for (int i = 0; i < d.solution.size(); ++i) {
    auto in = d.solution.input(i);
    if (m.noise == PinnNoise::LearnedHetero) {
      auto out = mlp_forward(m.u_net, m.u_params(theta), d.solution.input(i));
      ll += hetero_point_loglik(out[0], out[1], d.solution.value[i]);
    } else {
      const double p = pinn_u(m, theta, in[0], in[1]);
      ll += normal_logpdf(d.solution.value[i], p, d.solution.sigma * d.solution.sigma);
    }
  }
  for (int i = 0; i < d.rate.size(); ++i) {
    const double x = d.rate.input(i)[0];
    const double p = pinn_lambda(m, theta, x);
    ll += normal_logpdf(d.rate.value[i], p, d.rate.sigma * d.rate.sigma);
  }
  return ll;
}

double pinn_log_likelihood_grad(const PinnModel& m, std::span<const double> theta,
                                const PinnDataset& d, std::span<double> grad) {
  m.validate();
  d.validate();
  if (static_cast<int>(theta.size()) != m.param_count() || grad.size() != theta.size())
    throw std::invalid_argument("parameter and gradient sizes must match the model");
  return grad_scalar(
      theta,
      [&](ad::Tape& tape, std::span<const ad::Var> th) {
        return log_likelihood_var(m, tape, th, d);
      },
      grad);
}

void PinnWeights::validate() const {
  if (!(source >= 0.0) || !(boundary >= 0.0) || !(solution >= 0.0) || !(rate >= 0.0))
    throw std::invalid_argument("channel weights must be nonnegative");
}

double pinn_point_loss(const PinnModel& m, std::span<const double> theta, const PinnDataset& d,
                       const PinnWeights& w) {
  m.validate();
  d.validate();
  w.validate();
  double loss = 0.0;
  if (d.source.size() > 0 && w.source > 0.0) {
    double se = 0.0;
    for (int i = 0; i < d.source.size(); ++i) {
      auto in = d.source.input(i);
      const double r = pinn_residual(m, theta, in[0], in[1]) - d.source.value[i];
      se += r * r;
    }
    loss += w.source * se / d.source.size();
  }
  if (d.boundary.size() > 0 && w.boundary > 0.0) {
    double se = 0.0;
    for (int i = 0; i < d.boundary.size(); ++i) {
      auto in = d.boundary.input(i);
      const double r = pinn_u(m, theta, in[0], in[1]) - d.boundary.value[i];
      se += r * r;
    }
    loss += w.boundary * se / d.boundary.size();
  }
  if (d.solution.size() > 0 && w.solution > 0.0) {
    double se = 0.0;
    for (int i = 0; i < d.solution.size(); ++i) {
      auto in = d.solution.input(i);
      const double r = pinn_u(m, theta, in[0], in[1]) - d.solution.value[i];
      se += r * r;
    }
    loss += w.solution * se / d.solution.size();
  }
  if (d.rate.size() > 0 && w.rate > 0.0) {
    double se = 0.0;
    for (int i = 0; i < d.rate.size(); ++i) {
      const double r = pinn_lambda(m, theta, d.rate.input(i)[0]) - d.rate.value[i];
      se += r * r;
    }
    loss += w.rate * se / d.rate.size();
  }
  return loss;
}

PointObjective make_pinn_objective(const PinnModel& m, const PinnDataset& d,
                                   const PinnWeights& w, double weight_decay) {
  m.validate();
  d.validate();
  w.validate();
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
  if (d.total_points() == 0) throw std::invalid_argument("training dataset is empty");

  PointObjective obj;
  obj.dim = m.param_count();
  obj.loss_grad = [&m, &d, w, weight_decay](std::span<const double> theta,
                                            std::span<double> grad) {
    return grad_scalar(
        theta,
        [&](ad::Tape& tape, std::span<const ad::Var> th) {
          const ThetaSplit ts = split_theta(m, th);
          ad::Var acc = ad::make_var(tape, 0.0);
          if (d.source.size() > 0 && w.source > 0.0) {
            ad::Var se = ad::make_var(tape, 0.0);
            for (int i = 0; i < d.source.size(); ++i) {
              auto in = d.source.input(i);
              ad::Var r = residual_tape(m, tape, ts, in[0], in[1]);
              se = se + ad::square(r - d.source.value[i]);
            }
            acc = acc + se * (w.source / d.source.size());
          }
          if (d.boundary.size() > 0 && w.boundary > 0.0) {
            ad::Var se = ad::make_var(tape, 0.0);
            for (int i = 0; i < d.boundary.size(); ++i) {
              auto out = mlp_forward_tape(m.u_net, tape, ts.u, d.boundary.input(i));
              se = se + ad::square(out[0] - d.boundary.value[i]);
            }
            acc = acc + se * (w.boundary / d.boundary.size());
          }
          if (d.solution.size() > 0 && w.solution > 0.0) {
            ad::Var se = ad::make_var(tape, 0.0);
            for (int i = 0; i < d.solution.size(); ++i) {
              auto out = mlp_forward_tape(m.u_net, tape, ts.u, d.solution.input(i));
              se = se + ad::square(out[0] - d.solution.value[i]);
            }
            acc = acc + se * (w.solution / d.solution.size());
          }
          if (d.rate.size() > 0 && w.rate > 0.0 && !m.lambda_known) {
            ad::Var se = ad::make_var(tape, 0.0);
            for (int i = 0; i < d.rate.size(); ++i) {
              const double x = d.rate.input(i)[0];
              auto out = mlp_forward_tape(m.lam_net, tape, ts.lam, std::span<const double>(&x, 1));
              se = se + ad::square(out[0] - d.rate.value[i]);
            }
            acc = acc + se * (w.rate / d.rate.size());
          }
          if (weight_decay > 0.0) {
            ad::Var p = ad::make_var(tape, 0.0);
            for (const ad::Var& v : th) p = p + ad::square(v);
            acc = acc + p * (0.5 * weight_decay);
          }
          return acc;
        },
        grad);
  };
  return obj;
}

GradFn make_pinn_posterior(const PinnModel& m, const PinnDataset& d, double sigma_theta2,
                           double temperature) {
  m.validate();
  d.validate();
  if (!(sigma_theta2 > 0.0)) throw std::invalid_argument("prior variance must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");

  return [&m, &d, sigma_theta2, temperature](std::span<const double> theta,
                                             std::span<double> grad) {
    try {
      double v = grad_scalar(
          theta,
          [&](ad::Tape& tape, std::span<const ad::Var> th) {
            return log_likelihood_var(m, tape, th, d) +
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
  };
}

// ---- Reference solver ----

void MolConfig::validate() const {
  if (nx < 64) throw std::invalid_argument("reference solver: need at least 64 space intervals");
  if (nt_out < 64) throw std::invalid_argument("reference solver: need at least 64 time slices");
  if (!(tol > 0.0)) throw std::invalid_argument("reference solver: tolerance must be positive");
  if (!(dt_init > 0.0) || !(dt_min > 0.0) || dt_init < dt_min)
    throw std::invalid_argument("reference solver: step bounds are inconsistent");
  if (max_newton < 1) throw std::invalid_argument("reference solver: max_newton must be positive");
}

namespace {

// Semi-discrete right side on the interior nodes with Dirichlet closure.
struct MolSystem {
  double diffusion = 0.0;
  double bc = 0.0;
  double h = 0.0;
  std::vector<double> lam;
  std::vector<double> f;

  void rhs(const std::vector<double>& v, std::vector<double>& out) const {
    const int n = static_cast<int>(v.size());
    const double ih2 = 1.0 / (h * h);
    for (int j = 0; j < n; ++j) {
      const double left = j == 0 ? bc : v[j - 1];
      const double right = j == n - 1 ? bc : v[j + 1];
      out[j] = diffusion * (left - 2.0 * v[j] + right) * ih2 - lam[j] * v[j] * v[j] * v[j] + f[j];
    }
  }
};

void thomas_solve(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup,
                  std::vector<double>& rhs) {
  const int n = static_cast<int>(diag.size());
  for (int j = 1; j < n; ++j) {
    const double w = sub[j] / diag[j - 1];
    diag[j] -= w * sup[j - 1];
    rhs[j] -= w * rhs[j - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (int j = n - 2; j >= 0; --j) rhs[j] = (rhs[j] - sup[j] * rhs[j + 1]) / diag[j];
}

double linf(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// One trapezoidal step by Newton iteration with a tridiagonal solve.
bool trapezoid_step(const MolSystem& sys, const std::vector<double>& v, double dt,
                    double newton_tol, int max_newton, std::vector<double>& out,
                    double& last_resid) {
  const int n = static_cast<int>(v.size());
  std::vector<double> fv(n), fw(n), g(n), sub(n), diag(n), sup(n), rhs(n);
  sys.rhs(v, fv);
  out = v;
  const double ih2 = 1.0 / (sys.h * sys.h);
  const double off = -0.5 * dt * sys.diffusion * ih2;
  for (int it = 0; it <= max_newton; ++it) {
    sys.rhs(out, fw);
    double gmax = 0.0;
    for (int j = 0; j < n; ++j) {
      g[j] = out[j] - v[j] - 0.5 * dt * (fv[j] + fw[j]);
      gmax = std::max(gmax, std::abs(g[j]));
    }
    last_resid = gmax;
    if (gmax <= newton_tol * (1.0 + linf(out))) return true;
    if (it == max_newton) return false;
    for (int j = 0; j < n; ++j) {
      diag[j] = 1.0 - 0.5 * dt * (-2.0 * sys.diffusion * ih2 - 3.0 * sys.lam[j] * out[j] * out[j]);
      sub[j] = off;
      sup[j] = off;
      rhs[j] = -g[j];
    }
    thomas_solve(sub, diag, sup, rhs);
    for (int j = 0; j < n; ++j) out[j] += rhs[j];
    if (!std::isfinite(linf(out))) return false;
  }
  return false;
}

}  // namespace

MolSolution reference_solve(const PdeProblem& problem, const MolConfig& cfg) {
  problem.validate();
  cfg.validate();

  const int nx = cfg.nx;
  const int interior = nx - 1;
  MolSystem sys;
  sys.diffusion = problem.diffusion;
  sys.bc = problem.boundary_value;
  sys.h = 2.0 / nx;
  sys.lam.resize(interior);
  sys.f.resize(interior);

  MolSolution sol;
  sol.x = linspace(-1.0, 1.0, nx + 1);
  sol.t = linspace(0.0, problem.t_end, cfg.nt_out + 1);
  sol.u = DenseMatrix(cfg.nt_out + 1, nx + 1);

  std::vector<double> v(interior);
  for (int j = 0; j < interior; ++j) {
    const double xj = sol.x[j + 1];
    sys.lam[j] = problem.lambda_fn(xj);
    sys.f[j] = problem.source_fn(xj);
    v[j] = problem.ic_fn(xj);
  }
  sol.u(0, 0) = problem.ic_fn(-1.0);
  sol.u(0, nx) = problem.ic_fn(1.0);
  for (int j = 0; j < interior; ++j) sol.u(0, j + 1) = v[j];

  const double newton_tol = std::max(1e-13, 0.01 * cfg.tol);
  double dt = cfg.dt_init;
  double last_resid = 0.0;
  std::vector<double> full(interior), half(interior), half2(interior);

  for (int k = 1; k <= cfg.nt_out; ++k) {
    double remaining = sol.t[k] - sol.t[k - 1];
    while (remaining > 1e-14 * problem.t_end) {
      double dtc = std::min(dt, remaining);
      if (remaining - dtc < cfg.dt_min) dtc = remaining;

      const bool ok_full =
          trapezoid_step(sys, v, dtc, newton_tol, cfg.max_newton, full, last_resid);
      const bool ok_half =
          ok_full && trapezoid_step(sys, v, 0.5 * dtc, newton_tol, cfg.max_newton, half,
                                    last_resid) &&
          trapezoid_step(sys, half, 0.5 * dtc, newton_tol, cfg.max_newton, half2, last_resid);
      if (!ok_full || !ok_half) {
        dt = 0.5 * dtc;
        if (dt < cfg.dt_min)
          throw std::runtime_error(
              "reference solver: Newton iterations failed to converge; last residual norm " +
              std::to_string(last_resid));
        continue;
      }

      double err = 0.0;
      for (int j = 0; j < interior; ++j)
        err = std::max(err, std::abs(full[j] - half2[j]));
      err /= 3.0;

      double factor = 5.0;
      if (err > 0.0) factor = std::clamp(0.9 * std::cbrt(cfg.tol / err), 0.2, 5.0);
      if (err <= cfg.tol) {
        v = half2;
        remaining -= dtc;
        dt = std::max(dtc * factor, cfg.dt_min);
      } else {
        dt = std::max(dtc * std::min(factor, 0.9), cfg.dt_min);
        if (dtc <= cfg.dt_min)
          throw std::runtime_error(
              "reference solver: time step underflow; last residual norm " +
              std::to_string(err));
      }
    }
    sol.u(k, 0) = problem.boundary_value;
    sol.u(k, nx) = problem.boundary_value;
    for (int j = 0; j < interior; ++j) sol.u(k, j + 1) = v[j];
  }
  return sol;
}

double MolSolution::interpolate(double ti, double xi) const {
  if (t.size() < 2 || x.size() < 2) throw std::logic_error("solution grid is empty");
  const double t_end = t.back();
  const double tc = std::clamp(ti, 0.0, t_end);
  const double xc = std::clamp(xi, x.front(), x.back());

  const double ft = tc / t_end * (t.size() - 1);
  std::size_t it = std::min(static_cast<std::size_t>(ft), t.size() - 2);
  const double wt = ft - it;

  const double fx = (xc - x.front()) / (x.back() - x.front()) * (x.size() - 1);
  std::size_t ix = std::min(static_cast<std::size_t>(fx), x.size() - 2);
  const double wx = fx - ix;

  const double a = u(it, ix) * (1.0 - wx) + u(it, ix + 1) * wx;
  const double b = u(it + 1, ix) * (1.0 - wx) + u(it + 1, ix + 1) * wx;
  return a * (1.0 - wt) + b * wt;
}

// ---- Dataset generation ----

void PinnDataConfig::validate() const {
  if (n_source < 0 || n_solution < 0 || n_boundary < 0 || n_rate < 0)
    throw std::invalid_argument("channel sizes must be nonnegative");
  if (!(sigma_source > 0.0) || !(sigma_solution > 0.0) || !(sigma_boundary > 0.0) ||
      !(sigma_rate > 0.0))
    throw std::invalid_argument("noise scales must be positive");
}

PinnDataset make_steep_dataset(const PdeProblem& problem, const MolSolution& ref,
                               const PinnDataConfig& cfg, CounterRng& rng) {
  problem.validate();
  cfg.validate();

  PinnDataset d;
  d.source.sigma = cfg.sigma_source;
  d.solution.sigma = cfg.sigma_solution;
  d.boundary.sigma = cfg.sigma_boundary;
  d.rate.sigma = cfg.sigma_rate;
  d.rate.x_dim = 1;

  // Source measurements concentrate near the boundaries, where the solution
  // develops steep layers; each carries its own collocation time.
  {
    CounterRng r = rng.stream("source-data");
    const int n_side = 2 * cfg.n_source / 5;
    const int n_mid = cfg.n_source - 2 * n_side;
    std::vector<double> xs;
    for (double x : linspace(-0.98, -0.62, n_side)) xs.push_back(x);
    for (double x : linspace(-0.35, 0.35, n_mid)) xs.push_back(x);
    for (double x : linspace(0.62, 0.98, n_side)) xs.push_back(x);
    for (double x : xs) {
      d.source.x.push_back(r.uniform(0.0, problem.t_end));
      d.source.x.push_back(x);
      d.source.value.push_back(problem.source_fn(x) + cfg.sigma_source * r.normal());
    }
  }

  // Solution measurements at uniformly random space-time locations.
  {
    CounterRng r = rng.stream("solution-data");
    for (int i = 0; i < cfg.n_solution; ++i) {
      const double t = r.uniform(0.0, problem.t_end);
      const double x = r.uniform(-1.0, 1.0);
      d.solution.x.push_back(t);
      d.solution.x.push_back(x);
      d.solution.value.push_back(ref.interpolate(t, x) + cfg.sigma_solution * r.normal());
    }
  }

  // Boundary channel: initial profile plus the two Dirichlet edges.
  {
    CounterRng r = rng.stream("boundary-data");
    const int n_init = cfg.n_boundary / 2;
    const int n_left = (cfg.n_boundary - n_init) / 2;
    const int n_right = cfg.n_boundary - n_init - n_left;
    for (double x : linspace(-1.0, 1.0, n_init)) {
      d.boundary.x.push_back(0.0);
      d.boundary.x.push_back(x);
      double val = problem.ic_fn(x);
      if (cfg.noisy_boundary) val += cfg.sigma_boundary * r.normal();
      d.boundary.value.push_back(val);
    }
    for (double t : linspace(0.0, problem.t_end, n_left)) {
      d.boundary.x.push_back(t);
      d.boundary.x.push_back(-1.0);
      double val = problem.boundary_value;
      if (cfg.noisy_boundary) val += cfg.sigma_boundary * r.normal();
      d.boundary.value.push_back(val);
    }
    for (double t : linspace(0.0, problem.t_end, n_right)) {
      d.boundary.x.push_back(t);
      d.boundary.x.push_back(1.0);
      double val = problem.boundary_value;
      if (cfg.noisy_boundary) val += cfg.sigma_boundary * r.normal();
      d.boundary.value.push_back(val);
    }
  }

  // Rate measurements on an equispaced grid.
  {
    CounterRng r = rng.stream("rate-data");
    for (double x : linspace(-1.0, 1.0, cfg.n_rate)) {
      d.rate.x.push_back(x);
      d.rate.value.push_back(problem.lambda_fn(x) + cfg.sigma_rate * r.normal());
    }
  }

  d.validate();
  return d;
}

}  // namespace uq
