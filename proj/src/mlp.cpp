#include "uqkit/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace uq {

void check_shapes(const MlpModel& m, std::size_t theta_len, std::size_t x_len) {
  if (static_cast<int>(x_len) != m.input_dim())
    throw std::invalid_argument("input size " + std::to_string(x_len) +
                                " does not match network input width " +
                                std::to_string(m.input_dim()));
  if (static_cast<int>(theta_len) != m.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(theta_len) +
                                " does not match parameter count " +
                                std::to_string(m.param_count()));
}

std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> theta,
                                std::span<const double> x) {
  check_shapes(m, theta.size(), x.size());
  std::vector<double> out(m.output_dim());
  std::vector<double> a, b;
  detail::mlp_apply(m, theta.data(), x.data(), out.data(), detail::LiftSame{}, a, b);
  return out;
}

std::vector<ad::Var> mlp_forward_tape(const MlpModel& m, ad::Tape& tape,
                                      std::span<const ad::Var> theta,
                                      std::span<const double> x) {
  check_shapes(m, theta.size(), x.size());
  std::vector<ad::Var> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in[i] = ad::make_var(tape, x[i]);
  std::vector<ad::Var> out(m.output_dim());
  std::vector<ad::Var> a, b;
  detail::mlp_apply(m, theta.data(), in.data(), out.data(), detail::LiftSame{}, a, b);
  return out;
}

std::vector<ad::Jet2<double>> mlp_input_jet(const MlpModel& m, std::span<const double> theta,
                                            std::span<const double> x, int diff_coord) {
  check_shapes(m, theta.size(), x.size());
  std::vector<ad::Jet2<double>> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    in[i] = {x[i], static_cast<int>(i) == diff_coord ? 1.0 : 0.0, 0.0};
  std::vector<ad::Jet2<double>> out(m.output_dim());
  std::vector<ad::Jet2<double>> a, b;
  detail::mlp_apply(m, theta.data(), in.data(), out.data(), detail::LiftJet2Double{}, a, b);
  return out;
}

std::vector<ad::Jet1<double>> mlp_input_jet1(const MlpModel& m, std::span<const double> theta,
                                             std::span<const double> x, int diff_coord) {
  check_shapes(m, theta.size(), x.size());
  std::vector<ad::Jet1<double>> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    in[i] = {x[i], static_cast<int>(i) == diff_coord ? 1.0 : 0.0};
  std::vector<ad::Jet1<double>> out(m.output_dim());
  std::vector<ad::Jet1<double>> a, b;
  detail::mlp_apply(m, theta.data(), in.data(), out.data(), detail::LiftJet1Double{}, a, b);
  return out;
}

std::vector<ad::Jet2<ad::Var>> mlp_forward_jet2_tape(const MlpModel& m, ad::Tape& tape,
                                                     std::span<const ad::Var> theta,
                                                     std::span<const double> x, int diff_coord) {
  check_shapes(m, theta.size(), x.size());
  ad::Var zero = ad::make_var(tape, 0.0);
  ad::Var one = ad::make_var(tape, 1.0);
  std::vector<ad::Jet2<ad::Var>> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    ad::Var xi = ad::make_var(tape, x[i]);
    in[i] = {xi, static_cast<int>(i) == diff_coord ? one : zero, zero};
  }
  std::vector<ad::Jet2<ad::Var>> out(m.output_dim());
  std::vector<ad::Jet2<ad::Var>> a, b;
  detail::mlp_apply(m, theta.data(), in.data(), out.data(), detail::LiftJet2Var{zero}, a, b);
  return out;
}

std::vector<ad::Jet1<ad::Var>> mlp_forward_jet1_tape(const MlpModel& m, ad::Tape& tape,
                                                     std::span<const ad::Var> theta,
                                                     std::span<const double> x, int diff_coord) {
  check_shapes(m, theta.size(), x.size());
  ad::Var zero = ad::make_var(tape, 0.0);
  ad::Var one = ad::make_var(tape, 1.0);
  std::vector<ad::Jet1<ad::Var>> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    ad::Var xi = ad::make_var(tape, x[i]);
    in[i] = {xi, static_cast<int>(i) == diff_coord ? one : zero};
  }
  std::vector<ad::Jet1<ad::Var>> out(m.output_dim());
  std::vector<ad::Jet1<ad::Var>> a, b;
  detail::mlp_apply(m, theta.data(), in.data(), out.data(), detail::LiftJet1Var{zero}, a, b);
  return out;
}

double grad_scalar(std::span<const double> theta,
                   const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& loss_builder,
                   std::span<double> grad_out) {
  ad::Tape tape;
  std::vector<ad::Var> th(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) th[j] = ad::make_var(tape, theta[j]);
  ad::Var loss = loss_builder(tape, th);
  if (!std::isfinite(loss.v))
    throw std::runtime_error("loss evaluated to non-finite value " + std::to_string(loss.v));
  std::vector<double> adjoint;
  tape.backward(loss.idx, adjoint);
  for (std::size_t j = 0; j < theta.size(); ++j) grad_out[j] = adjoint[j];
  return loss.v;
}

double grad_params(const MlpModel& m, std::span<const double> theta,
                   const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& loss_builder,
                   std::span<double> grad_out) {
  if (static_cast<int>(theta.size()) != m.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(theta.size()) +
                                " does not match parameter count " +
                                std::to_string(m.param_count()));
  return grad_scalar(theta, loss_builder, grad_out);
}

ParamVector init_xavier_normal(const MlpModel& m, CounterRng& rng) {
  ParamVector theta(m.param_count(), 0.0);
  int off = 0;
  for (int l = 0; l + 1 < static_cast<int>(m.widths.size()); ++l) {
    const int nin = m.widths[l];
    const int nout = m.widths[l + 1];
    const double stdev = std::sqrt(2.0 / (nin + nout));
    for (int k = 0; k < nout * nin; ++k) theta[off + k] = stdev * rng.normal();
    off += nout * nin + nout;  // biases stay zero
  }
  return theta;
}

int layer_weight_offset(const MlpModel& m, int layer) {
  int off = 0;
  for (int l = 0; l < layer; ++l) off += m.widths[l + 1] * m.widths[l] + m.widths[l + 1];
  return off;
}

int layer_bias_offset(const MlpModel& m, int layer) {
  return layer_weight_offset(m, layer) + m.widths[layer + 1] * m.widths[layer];
}

DenseMatrix layer_weights(const MlpModel& m, std::span<const double> theta, int layer) {
  const int nout = m.widths[layer + 1];
  const int nin = m.widths[layer];
  DenseMatrix w(nout, nin);
  const double* src = theta.data() + layer_weight_offset(m, layer);
  std::copy(src, src + nout * nin, w.data.begin());
  return w;
}

std::vector<double> layer_biases(const MlpModel& m, std::span<const double> theta, int layer) {
  const int nout = m.widths[layer + 1];
  const double* src = theta.data() + layer_bias_offset(m, layer);
  return std::vector<double>(src, src + nout);
}

ParamVector pack_layers(const MlpModel& m, const std::vector<DenseMatrix>& weights,
                        const std::vector<std::vector<double>>& biases) {
  if (static_cast<int>(weights.size()) != m.layer_count() ||
      static_cast<int>(biases.size()) != m.layer_count()) {
    throw std::invalid_argument("pack_layers: expected one weight matrix and one bias vector per layer");
  }
  ParamVector theta(m.param_count());
  for (int l = 0; l < m.layer_count(); ++l) {
    const int nout = m.widths[l + 1];
    const int nin = m.widths[l];
    if (static_cast<int>(weights[l].rows) != nout ||
        static_cast<int>(weights[l].cols) != nin ||
        static_cast<int>(biases[l].size()) != nout) {
      throw std::invalid_argument("pack_layers: layer " + std::to_string(l) + " has wrong shape");
    }
    std::copy(weights[l].data.begin(), weights[l].data.end(),
              theta.begin() + layer_weight_offset(m, l));
    std::copy(biases[l].begin(), biases[l].end(), theta.begin() + layer_bias_offset(m, l));
  }
  return theta;
}

}  // namespace uq
