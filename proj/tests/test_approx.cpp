#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "uqkit/approx.hpp"
#include "uqkit/stats.hpp"

using namespace uq;

namespace {

MlpModel linear_model() {
  MlpModel m;
  m.widths = {1, 1};
  return m;
}

// Symmetric equispaced grid on [-1, 1] and targets from a known affine map.
Dataset affine_dataset(int n, double slope, double intercept, double noise_sd, CounterRng& rng) {
  Dataset d;
  d.x_dim = 1;
  for (int i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * i / (n - 1);
    d.x.push_back(x);
    d.u.push_back(slope * x + intercept + (noise_sd > 0.0 ? rng.normal(0.0, noise_sd) : 0.0));
  }
  return d;
}

struct Conjugate2 {
  double m[2];
  double v[2][2];
};

// Exact posterior of u = w x + b with iid Gaussian noise and prior N(0, s2 I).
Conjugate2 conjugate_affine(const Dataset& d, double sigma_u, double sigma_theta2) {
  double sxx = 0.0, sx = 0.0, sxu = 0.0, su = 0.0;
  const int n = d.size();
  for (int i = 0; i < n; ++i) {
    const double x = d.x[i];
    sxx += x * x;
    sx += x;
    sxu += x * d.u[i];
    su += d.u[i];
  }
  const double iv = 1.0 / (sigma_u * sigma_u);
  const double a00 = sxx * iv + 1.0 / sigma_theta2;
  const double a01 = sx * iv;
  const double a11 = n * iv + 1.0 / sigma_theta2;
  const double det = a00 * a11 - a01 * a01;
  Conjugate2 c;
  c.v[0][0] = a11 / det;
  c.v[0][1] = c.v[1][0] = -a01 / det;
  c.v[1][1] = a00 / det;
  const double b0 = sxu * iv, b1 = su * iv;
  c.m[0] = c.v[0][0] * b0 + c.v[0][1] * b1;
  c.m[1] = c.v[1][0] * b0 + c.v[1][1] * b1;
  return c;
}

double conjugate_predict_var(const Conjugate2& c, double x) {
  return x * x * c.v[0][0] + 2.0 * x * c.v[0][1] + c.v[1][1];
}

// Exact log evidence of the affine model: u ~ N(0, sigma_u^2 I + s2 X X^T).
double affine_log_evidence(const Dataset& d, double sigma_u, double sigma_theta2) {
  const int n = d.size();
  Eigen::MatrixXd cov = sigma_u * sigma_u * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cov(i, j) += sigma_theta2 * (d.x[i] * d.x[j] + 1.0);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = d.u[i];
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd alpha = llt.solve(u);
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (u.dot(alpha) + log_det + n * std::log(2.0 * std::numbers::pi));
}

double inv_softplus(double s) { return std::log(std::expm1(s)); }

MeanFieldPosterior make_q(std::vector<double> mu, std::vector<double> sigma) {
  MeanFieldPosterior q;
  q.mu = std::move(mu);
  q.rho.resize(q.mu.size());
  for (std::size_t j = 0; j < q.rho.size(); ++j) q.rho[j] = inv_softplus(sigma[j]);
  return q;
}

double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double sample_var(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / v.size();
}

}  // namespace

TEST_CASE("mean-field KL matches the closed form and vanishes at the prior") {
  MeanFieldPosterior q = make_q({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
  CHECK(std::abs(kl_mean_field(q, 1.0)) < 1e-12);

  const double sp2 = 2.5;
  MeanFieldPosterior qp = make_q({0.0, 0.0}, {std::sqrt(sp2), std::sqrt(sp2)});
  CHECK(std::abs(kl_mean_field(qp, sp2)) < 1e-12);

  MeanFieldPosterior q2 = make_q({1.0, 1.0, 1.0, 1.0}, {2.0, 2.0, 2.0, 2.0});
  const double per_dim = 0.5 * (std::log(0.25) + 5.0 - 1.0);
  CHECK(kl_mean_field(q2, 1.0) == doctest::Approx(4.0 * per_dim).epsilon(1e-12));
  CHECK(kl_mean_field(q2, 1.0) == doctest::Approx(4.0 * 1.3069).epsilon(1e-4));
  CHECK(kl_mean_field(q2, 1.0) ==
        doctest::Approx(4.0 * gaussian_kl(1.0, 4.0, 0.0, 1.0)).epsilon(1e-14));

  CHECK_THROWS_AS(kl_mean_field(q2, 0.0), std::invalid_argument);
}

TEST_CASE("empty dataset turns the bound into minus the KL") {
  MlpModel m = linear_model();
  MeanFieldPosterior q = make_q({0.3, -0.2}, {0.5, 0.8});
  Dataset empty;
  GaussianLikelihood lik;
  CounterRng rng(11);
  const double b = elbo(m, q, empty, lik, 1.0, 64, rng);
  CHECK(b == doctest::Approx(-kl_mean_field(q, 1.0)).epsilon(1e-14));
  CounterRng rng2(11);
  CHECK_THROWS_AS(elbo(m, q, empty, lik, 1.0, 0, rng2), std::invalid_argument);
}

TEST_CASE("monte carlo bound replays the documented estimator exactly") {
  MlpModel m = linear_model();
  CounterRng data_rng(21);
  Dataset d = affine_dataset(8, 0.6, -0.1, 0.05, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  MeanFieldPosterior q = make_q({0.5, 0.0}, {0.2, 0.2});

  CounterRng rng_a(77);
  const double got = elbo(m, q, d, lik, 1.0, 25, rng_a);

  CounterRng rng_b(77);
  double ll = 0.0;
  for (int t = 0; t < 25; ++t) {
    ParamVector theta(2);
    for (int j = 0; j < 2; ++j) theta[j] = q.mu[j] + q.sigma(j) * rng_b.normal();
    ll += log_likelihood(m, theta, d, lik);
  }
  const double expected = ll / 25.0 - kl_mean_field(q, 1.0);
  CHECK(got == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("bound stays below the exact log evidence on the conjugate toy") {
  MlpModel m = linear_model();
  CounterRng data_rng(31);
  Dataset d = affine_dataset(16, 0.7, -0.2, 0.1, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 1.0;

  const double log_z = affine_log_evidence(d, lik.sigma_u, s2);
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, s2);

  MeanFieldPosterior q_star =
      make_q({c.m[0], c.m[1]}, {std::sqrt(c.v[0][0]), std::sqrt(c.v[1][1])});
  CounterRng rng(5);
  const double b_star = elbo(m, q_star, d, lik, s2, 20000, rng);
  CHECK(b_star <= log_z + 0.05);
  CHECK(std::abs(b_star - log_z) < 0.1);

  MeanFieldPosterior q_wide =
      make_q({c.m[0], c.m[1]}, {2.0 * std::sqrt(c.v[0][0]), 2.0 * std::sqrt(c.v[1][1])});
  CounterRng rng2(5);
  const double b_wide = elbo(m, q_wide, d, lik, s2, 20000, rng2);
  CHECK(b_wide < log_z - 1.0);
}

TEST_CASE("reparametrized gradient matches finite differences of the fixed-noise bound") {
  MlpModel m;
  m.widths = {1, 6, 1};
  const int k = m.param_count();
  CounterRng rng(99);
  Dataset d = affine_dataset(8, 0.4, 0.2, 0.05, rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;

  ParamVector mu = init_xavier_normal(m, rng);
  ParamVector rho(k), z(k);
  for (int j = 0; j < k; ++j) rho[j] = -2.0 + 1.5 * rng.uniform();
  for (int j = 0; j < k; ++j) z[j] = rng.normal();

  std::vector<double> gm(k), gr(k), tmp_m(k), tmp_r(k);
  elbo_value_grad(m, mu, rho, z, d, lik, 1.0, gm, gr);

  auto value_at = [&](const ParamVector& mm, const ParamVector& rr) {
    return elbo_value_grad(m, mm, rr, z, d, lik, 1.0, tmp_m, tmp_r);
  };

  const double h = 1e-6;
  for (int j = 0; j < k; ++j) {
    ParamVector mp = mu, mn = mu;
    mp[j] += h;
    mn[j] -= h;
    const double fd = (value_at(mp, rho) - value_at(mn, rho)) / (2.0 * h);
    CHECK(std::abs(gm[j] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));

    ParamVector rp = rho, rn = rho;
    rp[j] += h;
    rn[j] -= h;
    const double fdr = (value_at(mu, rp) - value_at(mu, rn)) / (2.0 * h);
    CHECK(std::abs(gr[j] - fdr) <= 1e-4 * std::max(1.0, std::abs(fdr)));
  }
}

TEST_CASE("likelihood scaling enters the bound linearly") {
  MlpModel m = linear_model();
  CounterRng rng(3);
  Dataset d = affine_dataset(6, 0.5, 0.0, 0.05, rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  ParamVector mu = {0.4, 0.1}, rho = {-1.0, -1.5}, z = {0.7, -0.3};
  std::vector<double> gm(2), gr(2);
  Dataset empty;

  const double v0 = elbo_value_grad(m, mu, rho, z, empty, lik, 1.0, gm, gr);
  const double v1 = elbo_value_grad(m, mu, rho, z, d, lik, 1.0, gm, gr);
  const double v2 = elbo_value_grad(m, mu, rho, z, d, lik, 1.0, gm, gr, 2.0);
  CHECK(v2 == doctest::Approx(v0 + 2.0 * (v1 - v0)).epsilon(1e-12));
}

TEST_CASE("variational fit recovers the conjugate posterior within five percent") {
  MlpModel m = linear_model();
  CounterRng data_rng(41);
  Dataset d = affine_dataset(16, 0.7, -0.2, 0.1, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 1.0;
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, s2);

  MfviConfig cfg;
  cfg.steps = 20000;
  CounterRng rng(7);
  MeanFieldPosterior q = mfvi_fit(m, d, lik, s2, cfg, rng);

  CHECK(std::abs(q.mu[0] - c.m[0]) <= 0.05 * std::abs(c.m[0]));
  CHECK(std::abs(q.mu[1] - c.m[1]) <= 0.05 * std::abs(c.m[1]));
  CHECK(std::abs(q.sigma(0) - std::sqrt(c.v[0][0])) <= 0.05 * std::sqrt(c.v[0][0]));
  CHECK(std::abs(q.sigma(1) - std::sqrt(c.v[1][1])) <= 0.05 * std::sqrt(c.v[1][1]));
}

TEST_CASE("bound rises along training on average over seeds") {
  MlpModel m;
  m.widths = {1, 8, 1};
  Dataset d;
  d.x_dim = 1;
  d.x = {0.3};
  d.u = {0.5};
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;

  const std::vector<int> checkpoints = {0, 100, 200, 300};
  std::vector<double> avg(checkpoints.size(), 0.0);
  const int n_seeds = 10;
  for (int s = 0; s < n_seeds; ++s) {
    for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
      MfviConfig cfg;
      cfg.steps = checkpoints[ci];
      cfg.cosine_decay = false;
      CounterRng rng(1000 + s);
      MeanFieldPosterior q = mfvi_fit(m, d, lik, 1.0, cfg, rng);
      CounterRng eval_rng(555);
      avg[ci] += elbo(m, q, d, lik, 1.0, 2000, eval_rng) / n_seeds;
    }
  }
  for (std::size_t ci = 1; ci < avg.size(); ++ci) CHECK(avg[ci] > avg[ci - 1]);
}

TEST_CASE("non-finite objective aborts with the step index") {
  MlpModel m = linear_model();
  Dataset d;
  d.x_dim = 1;
  d.x = {0.5};
  d.u = {1e200};
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  MfviConfig cfg;
  cfg.steps = 10;
  CounterRng rng(1);
  CHECK_THROWS_AS(mfvi_fit(m, d, lik, 1.0, cfg, rng), std::runtime_error);
}

TEST_CASE("early stopping freezes training when held-out likelihood degrades") {
  MlpModel m;
  m.widths = {1, 6, 1};
  CounterRng data_rng(61);
  Dataset train = affine_dataset(12, 0.7, 0.0, 0.05, data_rng);
  Dataset val = train;
  for (double& u : val.u) u += 10.0;
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;

  MfviConfig cfg;
  cfg.steps = 4000;
  cfg.cosine_decay = false;
  CounterRng rng_a(9);
  MeanFieldPosterior q_full = mfvi_fit(m, train, lik, 1.0, cfg, rng_a);

  cfg.validation = &val;
  cfg.eval_every = 10;
  cfg.patience = 2;
  CounterRng rng_b(9);
  MeanFieldPosterior q_stop = mfvi_fit(m, train, lik, 1.0, cfg, rng_b);

  const double mse_full = mean_squared_error(m, q_full.mu, train);
  const double mse_stop = mean_squared_error(m, q_stop.mu, train);
  CHECK(mse_stop > mse_full);
}

TEST_CASE("posterior draws reproduce the variational moments") {
  MeanFieldPosterior q = make_q({0.5, -1.0}, {0.1, 0.2});
  CounterRng rng(13);
  PosteriorEnsemble ens = mfvi_sample(q, 20000, rng);
  CHECK(ens.method == "mfvi");
  CHECK(ens.count() == 20000);
  CHECK(ens.dim() == 2);

  for (int j = 0; j < 2; ++j) {
    std::vector<double> col(ens.count());
    for (int t = 0; t < ens.count(); ++t) col[t] = ens.members[t][j];
    CHECK(std::abs(sample_mean(col) - q.mu[j]) < 0.01);
    CHECK(sample_var(col) == doctest::Approx(q.sigma(j) * q.sigma(j)).epsilon(0.03));
  }

  CounterRng rng_a(4), rng_b(4);
  PosteriorEnsemble e1 = mfvi_sample(q, 5, rng_a);
  PosteriorEnsemble e2 = mfvi_sample(q, 5, rng_b);
  CHECK(e1.members == e2.members);
  CounterRng rng_c(4);
  CHECK_THROWS_AS(mfvi_sample(q, 0, rng_c), std::invalid_argument);
}

TEST_CASE("hidden unit bookkeeping and config defaults") {
  MlpModel m1 = linear_model();
  CHECK(hidden_unit_count(m1) == 0);
  MlpModel m2;
  m2.widths = {1, 50, 50, 1};
  CHECK(hidden_unit_count(m2) == 100);
  MlpModel m3;
  m3.widths = {1, 3, 1};
  CHECK(hidden_unit_count(m3) == 3);

  CHECK(MfviConfig{}.batch == 32);
  CHECK(MfviConfig{}.rho_init == -6.0);
  CHECK(McdConfig{}.rate == 0.05);
  CHECK(MapConfig{}.lr == 1e-2);
  CHECK(MapConfig{}.steps == 30000);
}

TEST_CASE("masking a unit zeroes exactly its downstream contribution") {
  MlpModel m;
  m.widths = {1, 2, 2, 1};
  CounterRng rng(17);
  ParamVector theta = init_xavier_normal(m, rng);
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += 0.1 * (j % 3);

  const std::vector<int> mask = {1, 0, 1, 1};
  const ParamVector masked = apply_hidden_mask(m, theta, mask);
  const double x = 0.37;

  const DenseMatrix w1 = layer_weights(m, theta, 0);
  const auto b1 = layer_biases(m, theta, 0);
  const DenseMatrix w2 = layer_weights(m, theta, 1);
  const auto b2 = layer_biases(m, theta, 1);
  const DenseMatrix w3 = layer_weights(m, theta, 2);
  const auto b3 = layer_biases(m, theta, 2);

  double h1[2], h2[2];
  for (int j = 0; j < 2; ++j) h1[j] = std::tanh(w1(j, 0) * x + b1[j]) * mask[j];
  for (int j = 0; j < 2; ++j)
    h2[j] = std::tanh(w2(j, 0) * h1[0] + w2(j, 1) * h1[1] + b2[j]) * mask[2 + j];
  const double expected = w3(0, 0) * h2[0] + w3(0, 1) * h2[1] + b3[0];

  const double got = mlp_forward(m, masked, std::vector<double>{x})[0];
  CHECK(got == doctest::Approx(expected).epsilon(1e-15));

  const std::vector<int> short_mask = {1, 0};
  CHECK_THROWS_AS(apply_hidden_mask(m, theta, short_mask), std::invalid_argument);
}

TEST_CASE("dropout rate validation rejects values outside the half-open unit interval") {
  MlpModel m;
  m.widths = {1, 3, 1};
  ParamVector theta(m.param_count(), 0.1);
  CounterRng rng(2);
  const std::vector<double> x = {0.5};
  for (double bad : {-0.1, 1.0, 1.5}) {
    CHECK_THROWS_AS(mcd_predict(m, theta, bad, x, 3, rng), std::invalid_argument);
    CHECK_THROWS_AS(draw_hidden_mask(m, bad, rng), std::invalid_argument);
    CHECK_THROWS_AS(mcd_ensemble(m, theta, bad, 3, rng), std::invalid_argument);
    McdConfig cfg;
    cfg.rate = bad;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("zero dropout keeps every pass identical to the plain forward") {
  MlpModel m;
  m.widths = {1, 4, 1};
  CounterRng rng(23);
  ParamVector theta = init_xavier_normal(m, rng);
  const std::vector<double> x = {-0.4};
  const double plain = mlp_forward(m, theta, x)[0];
  auto preds = mcd_predict(m, theta, 0.0, x, 32, rng);
  for (double p : preds) CHECK(p == doctest::Approx(plain).epsilon(1e-15));
  CHECK(sample_var(preds) < 1e-30);

  PosteriorEnsemble ens = mcd_ensemble(m, theta, 0.0, 4, rng);
  CHECK(ens.method == "mcd");
  for (const auto& member : ens.members) CHECK(member == theta);
}

TEST_CASE("half dropout halves the mean of a single linear unit") {
  MlpModel m;
  m.widths = {1, 1, 1};
  m.act = Activation::Identity;
  ParamVector theta = {1.0, 0.0, 2.0, 0.0};
  const std::vector<double> x = {0.7};
  CounterRng rng(29);
  auto preds = mcd_predict(m, theta, 0.5, x, 100000, rng);
  const double expected = 0.5 * 2.0 * 0.7;
  CHECK(sample_mean(preds) == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("dropout spread grows with the rate and matches the Bernoulli variance") {
  MlpModel m;
  m.widths = {1, 1, 1};
  m.act = Activation::Identity;
  ParamVector theta = {1.0, 0.0, 2.0, 0.0};
  const std::vector<double> x = {0.7};
  const double base = 2.0 * 0.7;

  std::vector<double> rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> vars;
  CounterRng rng(31);
  for (double r : rates) {
    auto preds = mcd_predict(m, theta, r, x, 200000, rng);
    vars.push_back(sample_var(preds));
  }
  for (std::size_t i = 1; i < vars.size(); ++i) CHECK(vars[i] > vars[i - 1] - 1e-3);
  for (std::size_t i = 1; i < vars.size(); ++i) {
    const double exact = base * base * rates[i] * (1.0 - rates[i]);
    CHECK(vars[i] == doctest::Approx(exact).epsilon(0.05));
  }
}

TEST_CASE("dropout training fits the toy curve") {
  MlpModel m;
  m.widths = {1, 8, 1};
  CounterRng data_rng(71);
  GenerateConfig gen;
  gen.n = 32;
  gen.sigma = 0.05;
  Dataset d = generate_function_dataset(gen, data_rng);

  McdConfig cfg;
  cfg.rate = 0.05;
  cfg.lr = 1e-2;
  cfg.steps = 8000;
  cfg.batch = 0;
  CounterRng rng(73);
  ParamVector theta = mcd_train(m, d, cfg, rng);

  const double var_u = sample_var(d.u);
  const double mse = mean_squared_error(m, theta, d);
  CHECK(mse < 0.03);
  CHECK(mse < 0.5 * var_u);

  McdConfig clean = cfg;
  clean.rate = 0.0;
  CounterRng rng2(73);
  ParamVector theta_clean = mcd_train(m, d, clean, rng2);
  CHECK(mean_squared_error(m, theta_clean, d) < 0.005);
}

TEST_CASE("curvature at a point reproduces the conjugate posterior exactly") {
  MlpModel m = linear_model();
  CounterRng data_rng(83);
  Dataset d = affine_dataset(21, 0.8, 0.1, 0.05, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 1.0;
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, s2);

  ParamVector anywhere = {0.123, -0.456};
  LaplaceFit fit = laplace_fit_at(m, anywhere, d, lik, s2);
  CHECK(fit.jitter == 0.0);
  CHECK(fit.warnings.empty());

  double sxx = 0.0, sx = 0.0;
  for (double x : d.x) {
    sxx += x * x;
    sx += x;
  }
  const double iv = 1.0 / (lik.sigma_u * lik.sigma_u);
  CHECK(fit.curvature(0, 0) == doctest::Approx(sxx * iv + 1.0 / s2).epsilon(1e-12));
  CHECK(fit.curvature(0, 1) == doctest::Approx(sx * iv).epsilon(1e-12));
  CHECK(fit.curvature(1, 0) == doctest::Approx(sx * iv).epsilon(1e-12));
  CHECK(fit.curvature(1, 1) == doctest::Approx(d.size() * iv + 1.0 / s2).epsilon(1e-12));

  for (double x : {-2.0, -0.3, 0.0, 0.7, 1.5}) {
    const double got = laplace_predict_var(fit, m, std::vector<double>{x});
    const double want = conjugate_predict_var(c, x);
    CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("map training lands on the conjugate mean") {
  MlpModel m = linear_model();
  CounterRng data_rng(83);
  Dataset d = affine_dataset(21, 0.8, 0.1, 0.05, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 1.0;
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, s2);

  MapConfig cfg;
  CounterRng rng(19);
  LaplaceFit fit = laplace_fit(m, d, lik, s2, cfg, rng);
  CHECK(std::abs(fit.theta_hat[0] - c.m[0]) < 1e-6);
  CHECK(std::abs(fit.theta_hat[1] - c.m[1]) < 1e-6);

  for (double x : {-1.5, 0.2, 0.9}) {
    const double got = laplace_predict_var(fit, m, std::vector<double>{x});
    const double want = conjugate_predict_var(c, x);
    CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("zero data keeps the prior covariance") {
  MlpModel m = linear_model();
  Dataset empty;
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 4.0;
  ParamVector theta = {0.5, -0.5};
  LaplaceFit fit = laplace_fit_at(m, theta, empty, lik, s2);
  for (double x : {0.0, 0.5, 2.0}) {
    const double got = laplace_predict_var(fit, m, std::vector<double>{x});
    CHECK(got == doctest::Approx(s2 * (x * x + 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("curvature agrees with the finite-difference Hessian of the map loss") {
  MlpModel m = linear_model();
  CounterRng data_rng(89);
  Dataset d = affine_dataset(5, 0.4, -0.3, 0.1, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.2;
  const double s2 = 0.5;

  ParamVector theta = {0.3, 0.1};
  LaplaceFit fit = laplace_fit_at(m, theta, d, lik, s2);

  PointObjective obj = make_map_objective(m, d, lik, s2);
  const double h = 1e-4;
  for (int c = 0; c < 2; ++c) {
    ParamVector tp = theta, tn = theta;
    tp[c] += h;
    tn[c] -= h;
    std::vector<double> gp(2), gn(2);
    obj.loss_grad(tp, gp);
    obj.loss_grad(tn, gn);
    for (int r = 0; r < 2; ++r) {
      const double fd = (gp[r] - gn[r]) / (2.0 * h);
      CHECK(std::abs(fit.curvature(r, c) - fd) <=
            1e-4 * std::max(1.0, std::abs(fit.curvature(r, c))));
    }
  }
}

TEST_CASE("prediction variance is symmetric and grows away from the data") {
  MlpModel m = linear_model();
  CounterRng data_rng(97);
  Dataset d = affine_dataset(15, 0.6, 0.0, 0.05, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  ParamVector theta = {0.6, 0.0};
  LaplaceFit fit = laplace_fit_at(m, theta, d, lik, 1.0);

  const double v12 = laplace_predict_var(fit, m, std::vector<double>{1.2});
  const double v15 = laplace_predict_var(fit, m, std::vector<double>{1.5});
  const double v20 = laplace_predict_var(fit, m, std::vector<double>{2.0});
  CHECK(v12 < v15);
  CHECK(v15 < v20);

  const double vp = laplace_predict_var(fit, m, std::vector<double>{1.3});
  const double vn = laplace_predict_var(fit, m, std::vector<double>{-1.3});
  CHECK(vp == doctest::Approx(vn).epsilon(1e-10));
}

TEST_CASE("rank deficient curvature walks the jitter ladder and records it") {
  MlpModel m = linear_model();
  Dataset d;
  d.x_dim = 1;
  d.x = {0.5, 0.5, 0.5};
  d.u = {0.2, 0.2, 0.2};
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  ParamVector theta = {0.1, 0.1};
  LaplaceFit fit = laplace_fit_at(m, theta, d, lik, 1e30);
  CHECK(fit.jitter > 0.0);
  CHECK(fit.warnings.size() == 1);
  const double v = laplace_predict_var(fit, m, std::vector<double>{0.5});
  CHECK(std::isfinite(v));
  CHECK(v >= 0.0);
}

TEST_CASE("gaussian draws around the mode reproduce the fitted covariance") {
  MlpModel m = linear_model();
  CounterRng data_rng(83);
  Dataset d = affine_dataset(21, 0.8, 0.1, 0.05, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, 1.0);

  ParamVector theta = {c.m[0], c.m[1]};
  LaplaceFit fit = laplace_fit_at(m, theta, d, lik, 1.0);
  CounterRng rng(37);
  PosteriorEnsemble ens = laplace_sample(fit, 30000, rng);
  CHECK(ens.method == "la");
  CHECK(ens.linear_base == fit.theta_hat);

  double mean[2] = {0.0, 0.0};
  for (const auto& th : ens.members)
    for (int j = 0; j < 2; ++j) mean[j] += th[j] / ens.count();
  double cov[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (const auto& th : ens.members)
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 2; ++col)
        cov[r][col] += (th[r] - mean[r]) * (th[col] - mean[col]) / ens.count();

  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(mean[j] - theta[j]) < 4.0 * std::sqrt(c.v[j][j] / ens.count()));
  double frob_num = 0.0, frob_den = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int col = 0; col < 2; ++col) {
      frob_num += (cov[r][col] - c.v[r][col]) * (cov[r][col] - c.v[r][col]);
      frob_den += c.v[r][col] * c.v[r][col];
    }
  CHECK(std::sqrt(frob_num / frob_den) < 0.05);
}

TEST_CASE("prior as penalty yields the same curvature after rescaling") {
  MlpModel m = linear_model();
  CounterRng data_rng(101);
  Dataset d = affine_dataset(10, 0.5, 0.2, 0.1, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.15;
  const double s2 = 2.0;
  const int n = d.size();
  const double wd = lik.sigma_u * lik.sigma_u / (n * s2);

  ParamVector theta = {0.4, 0.15};
  LaplaceFit fit = laplace_fit_at(m, theta, d, lik, s2);

  PointObjective reg = make_regression_objective(m, d, wd);
  const double h = 1e-5;
  const double rescale = n / (lik.sigma_u * lik.sigma_u);
  DenseMatrix a_alt(2, 2);
  for (int c = 0; c < 2; ++c) {
    ParamVector tp = theta, tn = theta;
    tp[c] += h;
    tn[c] -= h;
    std::vector<double> gp(2), gn(2);
    reg.loss_grad(tp, gp);
    reg.loss_grad(tn, gn);
    for (int r = 0; r < 2; ++r) a_alt(r, c) = rescale * (gp[r] - gn[r]) / (2.0 * h);
  }

  Eigen::Matrix2d a;
  a << a_alt(0, 0), a_alt(0, 1), a_alt(1, 0), a_alt(1, 1);
  for (double x : {-0.8, 0.3, 1.1}) {
    Eigen::Vector2d g(x, 1.0);
    const double want = g.dot(a.ldlt().solve(g));
    const double got = laplace_predict_var(fit, m, std::vector<double>{x});
    CHECK(got == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("laplace evidence is exact on the conjugate toy") {
  MlpModel m = linear_model();
  CounterRng data_rng(103);
  Dataset d = affine_dataset(16, 0.7, -0.2, 0.1, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double s2 = 1.0;
  const Conjugate2 c = conjugate_affine(d, lik.sigma_u, s2);

  ParamVector mode = {c.m[0], c.m[1]};
  LaplaceFit fit = laplace_fit_at(m, mode, d, lik, s2);
  const double got = laplace_log_evidence(fit, m, d, lik, s2);
  const double want = affine_log_evidence(d, lik.sigma_u, s2);
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("evidence grid search identifies the generating noise level") {
  MlpModel m = linear_model();
  CounterRng data_rng(107);
  Dataset d = affine_dataset(40, 0.8, 0.1, 0.1, data_rng);

  const std::vector<double> s2_grid = {0.5, 1.0};
  const std::vector<double> su_grid = {0.02, 0.1, 0.5};
  MapConfig cfg;
  cfg.steps = 2000;
  CounterRng rng(109);
  LaplaceGridResult best = laplace_grid_search(m, d, s2_grid, su_grid, cfg, rng);
  CHECK(best.sigma_u == 0.1);
  CHECK(std::isfinite(best.log_evidence));

  CounterRng rng2(109);
  CHECK_THROWS_AS(laplace_grid_search(m, d, {}, su_grid, cfg, rng2), std::invalid_argument);
}

TEST_CASE("heteroscedastic and multi-output models are rejected") {
  Dataset d;
  d.x_dim = 1;
  d.x = {0.1};
  d.u = {0.2};
  MlpModel m = linear_model();
  ParamVector theta = {0.1, 0.1};

  GaussianLikelihood het;
  het.mode = NoiseMode::Heteroscedastic;
  CHECK_THROWS_AS(laplace_fit_at(m, theta, d, het, 1.0), std::invalid_argument);

  MlpModel m2;
  m2.widths = {1, 2};
  ParamVector theta2(m2.param_count(), 0.1);
  GaussianLikelihood lik;
  CHECK_THROWS_AS(laplace_fit_at(m2, theta2, d, lik, 1.0), std::invalid_argument);

  GaussianLikelihood bad_sigma;
  bad_sigma.sigma_u = 0.0;
  CHECK_THROWS_AS(laplace_fit_at(m, theta, d, bad_sigma, 1.0), std::invalid_argument);
}
