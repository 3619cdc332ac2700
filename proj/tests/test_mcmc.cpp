#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "uqkit/dataset.hpp"
#include "uqkit/mcmc.hpp"
#include "uqkit/mlp.hpp"
#include "uqkit/probmodel.hpp"
#include "uqkit/rng.hpp"

using namespace uq;

namespace {

// Standard normal target.
const GradFn kStdNormal = [](std::span<const double> th, std::span<double> g) {
  double lp = 0.0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    g[i] = -th[i];
    lp -= 0.5 * th[i] * th[i];
  }
  return lp;
};

// Gaussian with precision matrix A (2x2, symmetric positive definite).
GradFn make_quadratic(double a00, double a01, double a11) {
  return [=](std::span<const double> th, std::span<double> g) {
    g[0] = -(a00 * th[0] + a01 * th[1]);
    g[1] = -(a01 * th[0] + a11 * th[1]);
    return 0.5 * (th[0] * g[0] + th[1] * g[1]);
  };
}

double hamiltonian(const GradFn& f, std::span<const double> th, std::span<const double> m) {
  std::vector<double> g(th.size());
  double h = -f(th, g);
  for (double mi : m) h += 0.5 * mi * mi;
  return h;
}

// Determinant by Gaussian elimination with partial pivoting.
double det(std::vector<std::vector<double>> a) {
  const int n = static_cast<int>(a.size());
  double d = 1.0;
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (p != c) {
      std::swap(a[p], a[c]);
      d = -d;
    }
    d *= a[c][c];
    for (int r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return d;
}

}  // namespace

TEST_CASE("leapfrog: hand-stepped values on the unit quadratic") {
  std::vector<double> th{1.0}, m{0.0};
  double lp;
  REQUIRE(leapfrog(th, m, 0.1, 1, kStdNormal, lp));
  CHECK(th[0] == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(m[0] == doctest::Approx(-0.09975).epsilon(1e-15));
  CHECK(lp == doctest::Approx(-0.5 * 0.995 * 0.995).epsilon(1e-15));

  // Multi-step trajectory against an explicit kick-drift-kick loop.
  std::vector<double> th2{1.0}, m2{0.3};
  REQUIRE(leapfrog(th2, m2, 0.1, 25, kStdNormal, lp));
  double q = 1.0, p = 0.3;
  for (int t = 0; t < 25; ++t) {
    p += 0.05 * (-q);
    q += 0.1 * p;
    p += 0.05 * (-q);
  }
  CHECK(th2[0] == doctest::Approx(q).epsilon(1e-15));
  CHECK(m2[0] == doctest::Approx(p).epsilon(1e-15));
}

TEST_CASE("leapfrog: free particle and reversibility") {
  const GradFn flat = [](std::span<const double>, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    return 0.0;
  };
  std::vector<double> th{0.4, -1.1}, m{0.7, 0.2};
  double lp;
  REQUIRE(leapfrog(th, m, 0.25, 8, flat, lp));
  CHECK(th[0] == doctest::Approx(0.4 + 0.25 * 8 * 0.7).epsilon(1e-14));
  CHECK(th[1] == doctest::Approx(-1.1 + 0.25 * 8 * 0.2).epsilon(1e-14));
  CHECK(m[0] == 0.7);
  CHECK(m[1] == 0.2);

  auto target = make_quadratic(4.0, 0.3, 1.0);
  std::vector<double> q{0.8, -0.5}, p{0.1, 0.9};
  std::vector<double> q0 = q, p0 = p;
  REQUIRE(leapfrog(q, p, 0.05, 30, target, lp));
  for (auto& v : p) v = -v;
  REQUIRE(leapfrog(q, p, 0.05, 30, target, lp));
  CHECK(std::abs(q[0] - q0[0]) < 1e-10);
  CHECK(std::abs(q[1] - q0[1]) < 1e-10);
  CHECK(std::abs(p[0] + p0[0]) < 1e-10);
  CHECK(std::abs(p[1] + p0[1]) < 1e-10);
}

TEST_CASE("leapfrog: one step preserves phase-space volume") {
  auto target = make_quadratic(4.0, 0.3, 1.0);
  const std::vector<double> z0{0.3, -0.2, 0.5, 0.1};
  const double h = 1e-5;
  auto step = [&](const std::vector<double>& z) {
    std::vector<double> th{z[0], z[1]}, m{z[2], z[3]};
    double lp;
    REQUIRE(leapfrog(th, m, 0.05, 3, target, lp));
    return std::vector<double>{th[0], th[1], m[0], m[1]};
  };
  std::vector<std::vector<double>> jac(4, std::vector<double>(4));
  for (int j = 0; j < 4; ++j) {
    auto zp = z0, zm = z0;
    zp[j] += h;
    zm[j] -= h;
    const auto fp = step(zp), fm = step(zm);
    for (int i = 0; i < 4; ++i) jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
  }
  CHECK(std::abs(det(jac) - 1.0) < 1e-6);
}

TEST_CASE("leapfrog: energy error shrinks quadratically with the step") {
  auto target = make_quadratic(4.0, 0.3, 1.0);
  const std::vector<double> q0{0.8, -0.5}, p0{0.1, 0.9};
  auto energy_error = [&](double eps, int steps) {
    std::vector<double> q = q0, p = p0;
    double lp;
    REQUIRE(leapfrog(q, p, eps, steps, target, lp));
    return std::abs(hamiltonian(target, q, p) - hamiltonian(target, q0, p0));
  };
  const double e1 = energy_error(0.2, 10);
  const double e2 = energy_error(0.1, 20);
  const double e3 = energy_error(0.05, 40);
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.0);
  CHECK(e2 / e3 > 3.0);
  CHECK(e2 / e3 < 5.0);
}

TEST_CASE("leapfrog: non-finite gradient aborts the trajectory") {
  const GradFn cliff = [](std::span<const double> th, std::span<double> g) {
    if (th[0] > 1.0) return -std::numeric_limits<double>::infinity();
    g[0] = 0.0;
    return 0.0;
  };
  std::vector<double> th{0.9}, m{5.0};
  double lp;
  CHECK_FALSE(leapfrog(th, m, 0.1, 10, cliff, lp));
  CHECK(std::isfinite(th[0]));
}

TEST_CASE("hmc: standard normal moments and tuned acceptance") {
  HmcConfig cfg;
  cfg.eps0 = 0.1;
  cfg.leapfrog_steps = 50;
  cfg.burn_in = 2000;
  cfg.samples = 1000;
  CounterRng rng(101);
  std::vector<double> theta0{0.0};
  auto ens = hmc_sample(kStdNormal, theta0, cfg, rng);
  REQUIRE(ens.count() == 1000);
  CHECK(ens.method == "hmc");

  double mean = 0.0;
  for (const auto& s : ens.members) mean += s[0];
  mean /= ens.count();
  double var = 0.0;
  for (const auto& s : ens.members) var += (s[0] - mean) * (s[0] - mean);
  var /= ens.count() - 1;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(var / ens.count()));
  CHECK(var > 0.9);
  CHECK(var < 1.1);
  CHECK(ens.acceptance_rate > 0.5);
  CHECK(ens.acceptance_rate < 0.7);
  CHECK(ens.final_step_size > 0.0);
  CHECK(ens.warnings.empty());
}

TEST_CASE("hmc: correlated 2D Gaussian covariance within ten percent") {
  // Target covariance [[1, .9], [.9, 1]]; precision is its inverse.
  const double rho = 0.9;
  const double f = 1.0 / (1.0 - rho * rho);
  auto target = make_quadratic(f, -rho * f, f);
  HmcConfig cfg;
  cfg.burn_in = 2000;
  cfg.samples = 1000;
  CounterRng rng(202);
  std::vector<double> theta0{0.0, 0.0};
  auto ens = hmc_sample(target, theta0, cfg, rng);

  double m0 = 0.0, m1 = 0.0;
  for (const auto& s : ens.members) {
    m0 += s[0];
    m1 += s[1];
  }
  m0 /= ens.count();
  m1 /= ens.count();
  double c00 = 0.0, c01 = 0.0, c11 = 0.0;
  for (const auto& s : ens.members) {
    c00 += (s[0] - m0) * (s[0] - m0);
    c01 += (s[0] - m0) * (s[1] - m1);
    c11 += (s[1] - m1) * (s[1] - m1);
  }
  c00 /= ens.count() - 1;
  c01 /= ens.count() - 1;
  c11 /= ens.count() - 1;
  const double err = std::sqrt((c00 - 1.0) * (c00 - 1.0) + 2.0 * (c01 - rho) * (c01 - rho) +
                               (c11 - 1.0) * (c11 - 1.0));
  const double norm = std::sqrt(1.0 + 2.0 * rho * rho + 1.0);
  CHECK(err / norm < 0.10);
  CHECK(ens.acceptance_rate > 0.5);
  CHECK(ens.acceptance_rate < 0.7);
}

TEST_CASE("hmc: tiny fixed step accepts essentially every proposal") {
  HmcConfig cfg;
  cfg.eps0 = 0.001;
  cfg.leapfrog_steps = 10;
  cfg.burn_in = 100;
  cfg.samples = 400;
  cfg.adapt_fraction = 0.0;
  CounterRng rng(303);
  std::vector<double> theta0{0.5};
  auto ens = hmc_sample(kStdNormal, theta0, cfg, rng);
  CHECK(ens.acceptance_rate >= 0.999);
  CHECK(ens.final_step_size == doctest::Approx(0.001).epsilon(1e-14));
}

TEST_CASE("hmc: huge step on a narrow target diverges and warns") {
  const GradFn narrow = [](std::span<const double> th, std::span<double> g) {
    const double inv = 1e8;
    g[0] = -th[0] * inv;
    return -0.5 * th[0] * th[0] * inv;
  };
  HmcConfig cfg;
  cfg.eps0 = 1.0;
  cfg.leapfrog_steps = 5;
  cfg.burn_in = 20;
  cfg.samples = 50;
  cfg.adapt_fraction = 0.0;
  CounterRng rng(404);
  std::vector<double> theta0{0.0};
  auto ens = hmc_sample(narrow, theta0, cfg, rng);
  CHECK(ens.divergences > 0);
  CHECK_FALSE(ens.warnings.empty());
  for (const auto& s : ens.members) CHECK(std::isfinite(s[0]));

  std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
  CounterRng rng2(405);
  CHECK_THROWS(hmc_sample(kStdNormal, bad, cfg, rng2));
}

TEST_CASE("hmc: identical seeds give identical chains, lag thins them") {
  HmcConfig cfg;
  cfg.burn_in = 50;
  cfg.samples = 40;
  std::vector<double> theta0{0.2};
  CounterRng a(77), b(77);
  auto e1 = hmc_sample(kStdNormal, theta0, cfg, a);
  auto e2 = hmc_sample(kStdNormal, theta0, cfg, b);
  REQUIRE(e1.count() == e2.count());
  for (int i = 0; i < e1.count(); ++i) CHECK(e1.members[i][0] == e2.members[i][0]);

  cfg.lag = 3;
  CounterRng c(77);
  auto e3 = hmc_sample(kStdNormal, theta0, cfg, c);
  CHECK(e3.count() == cfg.samples);

  HmcConfig bad;
  bad.eps0 = -1.0;
  CHECK_THROWS(bad.validate());
  bad = HmcConfig{};
  bad.adapt_fraction = 1.5;
  CHECK_THROWS(bad.validate());
  bad = HmcConfig{};
  bad.leapfrog_steps = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("langevin_step: zero gradient gives pure scaled noise") {
  CounterRng rng(21);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  std::vector<double> g{0.0};
  for (int i = 0; i < n; ++i) {
    std::vector<double> th{0.0};
    langevin_step(th, 1.0, g, rng);
    sum += th[0];
    sq += th[0] * th[0];
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("langevin chain: stationary variance of the unit Gaussian") {
  CounterRng rng(22);
  std::vector<double> th{0.0};
  std::vector<double> g(1);
  const double eps = 1e-3;
  const int burn = 20000, steps = 4000000;
  for (int i = 0; i < burn; ++i) {
    g[0] = -th[0];
    langevin_step(th, eps, g, rng);
  }
  double sq = 0.0;
  for (int i = 0; i < steps; ++i) {
    g[0] = -th[0];
    langevin_step(th, eps, g, rng);
    sq += th[0] * th[0];
  }
  CHECK(std::abs(sq / steps - 1.0) < 0.05);
}

TEST_CASE("ld_sample: end-to-end sampling of the unit Gaussian") {
  LdConfig cfg;
  cfg.eps = 0.05;
  cfg.burn_in = 2000;
  cfg.samples = 20000;
  cfg.lag = 5;
  CounterRng rng(23);
  std::vector<double> theta0{0.0};
  auto ens = ld_sample(kStdNormal, theta0, cfg, rng);
  REQUIRE(ens.count() == cfg.samples);
  CHECK(ens.method == "ld");
  double mean = 0.0, sq = 0.0;
  for (const auto& s : ens.members) {
    mean += s[0];
    sq += s[0] * s[0];
  }
  mean /= ens.count();
  CHECK(std::abs(sq / ens.count() - mean * mean - 1.0) < 0.15);

  CounterRng a(24), b(24);
  LdConfig small;
  small.burn_in = 100;
  small.samples = 50;
  auto e1 = ld_sample(kStdNormal, theta0, small, a);
  auto e2 = ld_sample(kStdNormal, theta0, small, b);
  for (int i = 0; i < e1.count(); ++i) CHECK(e1.members[i][0] == e2.members[i][0]);

  LdConfig bad;
  bad.eps = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("sgld gradient: full batch equals the exact posterior gradient") {
  MlpModel m{{1, 3, 1}};
  CounterRng data_rng(25);
  GenerateConfig gcfg;
  gcfg.n = 12;
  gcfg.sigma = 0.1;
  Dataset d = generate_function_dataset(gcfg, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;
  const double sigma_theta2 = 1.0;

  CounterRng theta_rng(26);
  std::vector<double> theta(m.param_count());
  for (auto& t : theta) t = 0.4 * theta_rng.normal();

  LogPosterior post;
  post.model = &m;
  post.data = &d;
  post.lik = lik;
  post.sigma_theta2 = sigma_theta2;
  std::vector<double> g_exact(m.param_count());
  const double v_exact = post.value_grad(theta, g_exact);

  auto full = make_sgld_gradient(m, d, lik, sigma_theta2, 0, CounterRng(1));
  std::vector<double> g_full(m.param_count());
  const double v_full = full(theta, g_full);
  CHECK(v_full == doctest::Approx(v_exact).epsilon(1e-12));
  for (int j = 0; j < m.param_count(); ++j)
    CHECK(g_full[j] == doctest::Approx(g_exact[j]).epsilon(1e-12));

  auto whole = make_sgld_gradient(m, d, lik, sigma_theta2, d.size(), CounterRng(2));
  std::vector<double> g_whole(m.param_count());
  const double v_whole = whole(theta, g_whole);
  CHECK(v_whole == doctest::Approx(v_exact).epsilon(1e-10));
  for (int j = 0; j < m.param_count(); ++j)
    CHECK(g_whole[j] == doctest::Approx(g_exact[j]).epsilon(1e-10));

  CHECK_THROWS(make_sgld_gradient(m, d, lik, sigma_theta2, d.size() + 1, CounterRng(3)));
}

TEST_CASE("sgld gradient: minibatch estimates are unbiased") {
  MlpModel m{{1, 3, 1}};
  CounterRng data_rng(27);
  GenerateConfig gcfg;
  gcfg.n = 16;
  gcfg.sigma = 0.1;
  Dataset d = generate_function_dataset(gcfg, data_rng);
  GaussianLikelihood lik;
  lik.sigma_u = 0.1;

  CounterRng theta_rng(28);
  std::vector<double> theta(m.param_count());
  for (auto& t : theta) t = 0.4 * theta_rng.normal();

  auto full = make_sgld_gradient(m, d, lik, 1.0, 0, CounterRng(4));
  std::vector<double> g_full(m.param_count());
  full(theta, g_full);

  auto mini = make_sgld_gradient(m, d, lik, 1.0, 4, CounterRng(5));
  std::vector<double> avg(m.param_count(), 0.0), g(m.param_count());
  const int reps = 8000;
  for (int r = 0; r < reps; ++r) {
    mini(theta, g);
    for (int j = 0; j < m.param_count(); ++j) avg[j] += g[j];
  }
  double num = 0.0, den = 0.0;
  for (int j = 0; j < m.param_count(); ++j) {
    const double diff = avg[j] / reps - g_full[j];
    num += diff * diff;
    den += g_full[j] * g_full[j];
  }
  CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("gibbs chain: matches the analytic noise-variance marginal") {
  // Linear-Gaussian toy: u = theta x + noise, theta Gaussian, noise variance
  // inverse-gamma. The chain alternates the exact conditionals; its marginal
  // over the noise variance is compared with a quadrature oracle.
  const int n = 10;
  const double sigma_theta2 = 1.0, h3 = 2.0, h4 = 10.0;
  const double theta_true = 0.7, sigma_true = 0.3;
  std::vector<double> x(n), u(n);
  CounterRng data_rng(29);
  for (int i = 0; i < n; ++i) {
    x[i] = -1.0 + 2.0 * i / (n - 1);
    u[i] = theta_true * x[i] + sigma_true * data_rng.normal();
  }
  double sxx = 0.0, sxu = 0.0, suu = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += x[i] * x[i];
    sxu += x[i] * u[i];
    suu += u[i] * u[i];
  }

  // Chain.
  const int sweeps = 100000;
  std::vector<double> draws;
  draws.reserve(sweeps);
  CounterRng rng(30);
  double theta = 0.0, v = 1.0;
  for (int s = 0; s < sweeps; ++s) {
    const double prec = sxx / v + 1.0 / sigma_theta2;
    const double mean = (sxu / v) / prec;
    theta = mean + rng.normal() / std::sqrt(prec);
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = u[i] - theta * x[i];
      rss += r * r;
    }
    v = gibbs_update_sigma_u_from_residuals(rss, n, h3, h4, rng);
    draws.push_back(v);
  }
  std::sort(draws.begin(), draws.end());

  // Quadrature oracle for p(v | data) with theta integrated out.
  const int grid_n = 20000;
  std::vector<double> vg(grid_n), logd(grid_n);
  const double lo = std::log(1e-4), hi = std::log(50.0);
  double max_logd = -1e300;
  for (int i = 0; i < grid_n; ++i) {
    const double lv = lo + (hi - lo) * i / (grid_n - 1);
    const double vv = std::exp(lv);
    vg[i] = vv;
    const double log_ig = (-h3 - 1.0) * std::log(vv) - 1.0 / (h4 * vv);
    const double logdet = (n - 1) * std::log(vv) + std::log(vv + sigma_theta2 * sxx);
    const double quad = suu / vv - sigma_theta2 * sxu * sxu / (vv * vv + vv * sigma_theta2 * sxx);
    logd[i] = log_ig - 0.5 * logdet - 0.5 * quad;
    max_logd = std::max(max_logd, logd[i]);
  }
  std::vector<double> cdf(grid_n, 0.0);
  for (int i = 1; i < grid_n; ++i) {
    const double fa = std::exp(logd[i - 1] - max_logd);
    const double fb = std::exp(logd[i] - max_logd);
    cdf[i] = cdf[i - 1] + 0.5 * (fa + fb) * (vg[i] - vg[i - 1]);
  }
  for (auto& c : cdf) c /= cdf.back();

  auto oracle_cdf = [&](double vv) {
    auto it = std::lower_bound(vg.begin(), vg.end(), vv);
    if (it == vg.begin()) return 0.0;
    if (it == vg.end()) return 1.0;
    const std::size_t j = static_cast<std::size_t>(it - vg.begin());
    const double w = (vv - vg[j - 1]) / (vg[j] - vg[j - 1]);
    return cdf[j - 1] + w * (cdf[j] - cdf[j - 1]);
  };
  double ks = 0.0;
  for (int i = 0; i < sweeps; ++i) {
    const double c = oracle_cdf(draws[i]);
    ks = std::max(ks, std::abs(c - (i + 1.0) / sweeps));
    ks = std::max(ks, std::abs(c - static_cast<double>(i) / sweeps));
  }
  CHECK(ks < 0.02);
}

TEST_CASE("hierarchical chain: traces, reproducibility, plausible noise") {
  MlpModel m{{1, 4, 1}};
  CounterRng data_rng(31);
  GenerateConfig gcfg;
  gcfg.n = 16;
  gcfg.sigma = 0.05;
  Dataset d = generate_function_dataset(gcfg, data_rng);

  HierarchicalConfig cfg;
  cfg.hmc.eps0 = 0.01;
  cfg.hmc.leapfrog_steps = 10;
  cfg.hmc.burn_in = 300;
  cfg.hmc.samples = 150;

  CounterRng init_rng(32);
  ParamVector theta0 = init_xavier_normal(m, init_rng);

  CounterRng a(33);
  auto ens = hierarchical_hmc_sample(m, d, cfg, theta0, a);
  REQUIRE(ens.count() == 150);
  CHECK(ens.method == "hmc_gibbs");
  REQUIRE(static_cast<int>(ens.sigma_theta2_trace.size()) == 150);
  REQUIRE(static_cast<int>(ens.sigma_u2_trace.size()) == 150);
  for (double t : ens.sigma_theta2_trace) CHECK(t > 0.0);
  for (double t : ens.sigma_u2_trace) CHECK(t > 0.0);

  double mean_v = 0.0;
  for (double t : ens.sigma_u2_trace) mean_v += t;
  mean_v /= ens.sigma_u2_trace.size();
  const double mean_sigma = std::sqrt(mean_v);
  CHECK(mean_sigma > 0.01);
  CHECK(mean_sigma < 0.5);

  CounterRng b(33);
  auto ens2 = hierarchical_hmc_sample(m, d, cfg, theta0, b);
  REQUIRE(ens2.count() == ens.count());
  for (int i = 0; i < ens.count(); ++i)
    for (int j = 0; j < ens.dim(); ++j) CHECK(ens.members[i][j] == ens2.members[i][j]);
  for (int i = 0; i < ens.count(); ++i)
    CHECK(ens.sigma_u2_trace[i] == ens2.sigma_u2_trace[i]);
}
