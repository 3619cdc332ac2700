#include "uqkit/gp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "uqkit/stats.hpp"

namespace uq {

namespace {

Eigen::MatrixXd train_covariance(const SqExpKernel& k, const GpModel& model, double sigma_u2) {
  const int n = model.size();
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = kernel_value(k, model.input(i), model.input(j));
      cov(i, j) = v;
      cov(j, i) = v;
    }
  cov.diagonal().array() += sigma_u2;
  return cov;
}

}  // namespace

void SqExpKernel::validate() const {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("gp: lengthscale must be positive");
  if (!(signal_variance > 0.0))
    throw std::invalid_argument("gp: signal variance must be positive");
}

double kernel_value(const SqExpKernel& k, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("gp: kernel input dimensions differ");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return k.signal_variance * std::exp(-d2 / (2.0 * k.lengthscale * k.lengthscale));
}

GpModel gp_fit(const Dataset& train, const SqExpKernel& kernel, double sigma_u2) {
  kernel.validate();
  if (train.size() < 1) throw std::invalid_argument("gp_fit: empty dataset");
  if (!(sigma_u2 >= 0.0)) throw std::invalid_argument("gp_fit: sigma_u2 must be nonnegative");

  GpModel model;
  model.kernel = kernel;
  model.sigma_u2 = sigma_u2;
  model.x_dim = train.x_dim;
  const int n = train.size();
  model.x = DenseMatrix(n, train.x_dim);
  for (int i = 0; i < n; ++i) {
    const auto xi = train.input(i);
    for (int d = 0; d < train.x_dim; ++d) model.x(i, d) = xi[d];
  }

  const Eigen::MatrixXd cov = train_covariance(kernel, model, sigma_u2);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    for (double jitter = 1e-12; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
      Eigen::MatrixXd bumped = cov;
      bumped.diagonal().array() += jitter;
      llt.compute(bumped);
      if (llt.info() == Eigen::Success) {
        model.jitter = jitter;
        model.warnings.push_back("gp: covariance factorization needed diagonal jitter " +
                                 std::to_string(jitter));
        break;
      }
    }
    if (llt.info() != Eigen::Success)
      throw std::runtime_error(
          "gp: covariance factorization failed at every jitter rung from 1e-12 up to 1e-06");
  }

  const Eigen::MatrixXd low = llt.matrixL();
  model.chol = DenseMatrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) model.chol(i, j) = low(i, j);

  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = train.u[i];
  const Eigen::VectorXd alpha = llt.solve(u);
  model.alpha.assign(alpha.data(), alpha.data() + n);
  return model;
}

GpPrediction gp_predict(const GpModel& model, std::span<const double> xs) {
  if (model.size() < 1) throw std::invalid_argument("gp_predict: model is not fitted");
  if (model.x_dim < 1 || xs.size() % model.x_dim != 0)
    throw std::invalid_argument("gp_predict: query size is not a multiple of the input dimension");
  const int n = model.size();
  const int m = static_cast<int>(xs.size()) / model.x_dim;

  Eigen::MatrixXd kstar(m, n);
  for (int i = 0; i < m; ++i) {
    const std::span<const double> xi = xs.subspan(i * model.x_dim, model.x_dim);
    for (int j = 0; j < n; ++j) kstar(i, j) = kernel_value(model.kernel, xi, model.input(j));
  }

  GpPrediction pred;
  pred.mean.resize(m);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += kstar(i, j) * model.alpha[j];
    pred.mean[i] = acc;
  }

  Eigen::MatrixXd low(n, n);
  low.setZero();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) low(i, j) = model.chol(i, j);
  // V = L^{-1} K(X, X*), so the subtracted term is V^T V.
  const Eigen::MatrixXd v = low.triangularView<Eigen::Lower>().solve(kstar.transpose());

  Eigen::MatrixXd cov(m, m);
  for (int i = 0; i < m; ++i) {
    const std::span<const double> xi = xs.subspan(i * model.x_dim, model.x_dim);
    for (int j = 0; j <= i; ++j) {
      const std::span<const double> xj = xs.subspan(j * model.x_dim, model.x_dim);
      double value = kernel_value(model.kernel, xi, xj) - v.col(i).dot(v.col(j));
      cov(i, j) = value;
      cov(j, i) = value;
    }
  }

  pred.covariance = DenseMatrix(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) pred.covariance(i, j) = cov(i, j);
  pred.total_variance.resize(m);
  for (int i = 0; i < m; ++i)
    pred.total_variance[i] = std::max(0.0, cov(i, i)) + model.sigma_u2;
  return pred;
}

GpGridResult gp_grid_search(const Dataset& train, const Dataset& val,
                            std::span<const double> lengthscales,
                            std::span<const double> signal_variances, double sigma_u2) {
  if (lengthscales.empty() || signal_variances.empty())
    throw std::invalid_argument("gp_grid_search: empty grid");
  if (val.size() < 1) throw std::invalid_argument("gp_grid_search: empty validation split");
  if (val.x_dim != train.x_dim)
    throw std::invalid_argument("gp_grid_search: train and validation dimensions differ");

  GpGridResult best;
  bool have_best = false;
  for (double ls : lengthscales)
    for (double sv : signal_variances) {
      SqExpKernel k;
      k.lengthscale = ls;
      k.signal_variance = sv;
      GpModel model = gp_fit(train, k, sigma_u2);
      const GpPrediction pred = gp_predict(model, val.x);
      double mpl = 0.0;
      for (int i = 0; i < val.size(); ++i)
        mpl += normal_logpdf(val.u[i], pred.mean[i], pred.total_variance[i]) / val.size();
      if (!have_best || mpl > best.val_mpl) {
        best.kernel = k;
        best.val_mpl = mpl;
        best.model = std::move(model);
        have_best = true;
      }
    }
  return best;
}

}  // namespace uq
