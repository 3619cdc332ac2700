#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uqkit/linalg.hpp"

namespace uq {

// Per-query predictive moments plus the raw per-member predictions they were
// computed from. Analytic methods may leave `raw` empty (raw_count() == 0).
struct PredictiveSummary {
  std::vector<double> x;  // flattened query inputs, x_dim columns
  int x_dim = 1;
  std::vector<double> mean;
  std::vector<double> var_aleatoric;
  std::vector<double> var_epistemic;
  std::vector<double> var_total;
  DenseMatrix raw;  // raw_count x size, one row per ensemble member

  int size() const { return static_cast<int>(mean.size()); }
  int raw_count() const { return static_cast<int>(raw.rows); }
};

struct AleatoricSpec {
  enum class Kind { Constant, PerMember };
  Kind kind = Kind::Constant;
  double var_u = 0.0;
  const DenseMatrix* per_member_var = nullptr;  // M x N predicted noise variances
};

// Ensemble mean, population epistemic variance, aleatoric variance, and their
// exact sum, from an M x N prediction matrix.
PredictiveSummary summarize(const DenseMatrix& preds, const AleatoricSpec& aleatoric,
                            std::vector<double> x, int x_dim);

struct CalibrationMap {
  enum class Kind { Scale, Isotonic, Crude };
  Kind kind = Kind::Scale;
  double s = 1.0;
  std::vector<double> knots_p, knots_q;  // isotonic map, piecewise linear
  std::vector<double> residuals_sorted;  // crude table, ascending
  double mu_eps = 0.0;
  double sigma_eps = 1.0;
};

double isotonic_eval(const CalibrationMap& map, double p);
double isotonic_inverse(const CalibrationMap& map, double p);

// Predictive distribution per query point: the Gaussian summary, optionally
// transformed by a calibration map.
class PredictiveDist {
 public:
  explicit PredictiveDist(const PredictiveSummary& s, const CalibrationMap* map = nullptr);

  int size() const;
  double cdf(int i, double u) const;
  double quantile(int i, double p) const;
  double pdf(int i, double u) const;
  double mean(int i) const;
  double stdev(int i) const;

 private:
  const PredictiveSummary* s_;
  const CalibrationMap* map_;
};

// Metrics.
double rl2e(std::span<const double> mean, std::span<const double> u_test);
double mpl(const PredictiveDist& dist, std::span<const double> u_test);
std::vector<std::pair<double, double>> calibration_curve(const PredictiveDist& dist,
                                                         std::span<const double> u_test, int n_p);
double rmsce(const PredictiveDist& dist, std::span<const double> u_test, int n_p = 99);
double piw(const PredictiveDist& dist, double level = 0.95);
double sdcv(const PredictiveSummary& s);
double nip_g(std::span<const double> var_test, std::span<const double> var_gold);
double kl_g(const PredictiveSummary& gold, const PredictiveSummary& test);

// Metric the scale fit optimizes: calibration error is minimized, mean log
// predictive likelihood is maximized. The plain mean density is not offered
// as an objective because it degenerates toward zero predictive variance.
enum class ScaleMetric { Rmsce, LogLikelihood };

// Calibration fits; each consumes predictions on the calibration points and
// the observed values there.
CalibrationMap calibrate_scale(const PredictiveSummary& calib_summary,
                               std::span<const double> calib_u,
                               ScaleMetric metric = ScaleMetric::Rmsce, int n_p = 99);
CalibrationMap calibrate_isotonic(const PredictiveSummary& calib_summary,
                                  std::span<const double> calib_u);
CalibrationMap calibrate_crude(const PredictiveSummary& calib_summary,
                               std::span<const double> calib_u);

// Moment-level application of a map: scale multiplies the variance, isotonic
// re-integrates the transformed CDF, crude shifts and scales by the residual
// moments. Raw members are dropped.
PredictiveSummary recalibrate_summary(const PredictiveSummary& s, const CalibrationMap& map);

struct MetricsReport {
  std::string method;
  std::uint64_t seed = 0;
  double rl2e = 0.0, mpl = 0.0, rmsce = 0.0, piw = 0.0, sdcv = 0.0;
  bool has_gold = false;
  double nip_g = 0.0, kl_g = 0.0;
};

MetricsReport compute_metrics(const PredictiveSummary& s, std::span<const double> u_test,
                              const CalibrationMap* map = nullptr,
                              const PredictiveSummary* gold = nullptr);

}  // namespace uq
