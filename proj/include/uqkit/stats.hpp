#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace uq {

inline double normal_logpdf(double u, double mean, double var) {
  if (!(var > 0.0)) throw std::invalid_argument("normal_logpdf: variance must be positive");
  const double r = u - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

inline double normal_pdf(double u, double mean, double var) {
  return std::exp(normal_logpdf(u, mean, var));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_cdf(double u, double mean, double stdev) {
  return normal_cdf((u - mean) / stdev);
}

// Inverse standard normal CDF: rational initial guess refined by one Halley
// step, accurate to a few ulp across (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("normal_quantile: p outside [0,1]");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double pl = 0.02425;
  double x;
  if (p < pl) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - pl) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

inline double normal_quantile(double p, double mean, double stdev) {
  return mean + stdev * normal_quantile(p);
}

// KL(N(mu_a, var_a) || N(mu_b, var_b)).
inline double gaussian_kl(double mu_a, double var_a, double mu_b, double var_b) {
  if (!(var_a > 0.0 && var_b > 0.0))
    throw std::invalid_argument("gaussian_kl: variances must be positive");
  const double d = mu_a - mu_b;
  return 0.5 * (std::log(var_b / var_a) + (var_a + d * d) / var_b - 1.0);
}

}  // namespace uq
