#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uqkit/jet.hpp"
#include "uqkit/linalg.hpp"
#include "uqkit/rng.hpp"
#include "uqkit/tape.hpp"

namespace uq {

enum class Activation { Tanh, Identity };

// Dense feed-forward network description. Parameters live in a flat vector
// with a frozen layout: layer by layer, the weight matrix first (row-major,
// output x input), then the bias vector. Hidden layers share one activation;
// the output layer is always linear.
struct MlpModel {
  std::vector<int> widths;  // [input, hidden..., output]
  Activation act = Activation::Tanh;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }

  int param_count() const {
    int k = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      k += widths[l + 1] * widths[l] + widths[l + 1];
    return k;
  }
};

namespace detail {

struct LiftSame {
  template <class S>
  const S& operator()(const S& s) const {
    return s;
  }
};
struct LiftJet2Double {
  ad::Jet2<double> operator()(double s) const { return {s, 0.0, 0.0}; }
};
struct LiftJet1Double {
  ad::Jet1<double> operator()(double s) const { return {s, 0.0}; }
};
struct LiftJet2Var {
  ad::Var zero;
  ad::Jet2<ad::Var> operator()(const ad::Var& s) const { return {s, zero, zero}; }
};
struct LiftJet1Var {
  ad::Var zero;
  ad::Jet1<ad::Var> operator()(const ad::Var& s) const { return {s, zero}; }
};

template <class S, class V, class Lift>
void mlp_apply(const MlpModel& m, const S* theta, const V* input, V* output, const Lift& lift,
               std::vector<V>& buf_a, std::vector<V>& buf_b) {
  const int layers = m.layer_count();
  const V* cur = input;
  int off = 0;
  for (int l = 0; l < layers; ++l) {
    const int nin = m.widths[l];
    const int nout = m.widths[l + 1];
    std::vector<V>& out_buf = (l % 2 == 0) ? buf_a : buf_b;
    out_buf.clear();
    const S* w = theta + off;
    const S* b = theta + off + nout * nin;
    const bool hidden = (l + 1 < layers);
    for (int j = 0; j < nout; ++j) {
      V acc = lift(b[j]);
      const S* wrow = w + j * nin;
      for (int i = 0; i < nin; ++i) acc = acc + wrow[i] * cur[i];
      if (hidden && m.act == Activation::Tanh) acc = tanh(acc);
      out_buf.push_back(acc);
    }
    cur = out_buf.data();
    off += nout * nin + nout;
  }
  for (int j = 0; j < m.widths.back(); ++j) output[j] = cur[j];
}

}  // namespace detail

// Plain evaluation u_theta(x).
std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> theta,
                                std::span<const double> x);

// Forward pass recorded on a tape; `theta` are tape variables, `x` is data.
std::vector<ad::Var> mlp_forward_tape(const MlpModel& m, ad::Tape& tape,
                                      std::span<const ad::Var> theta, std::span<const double> x);

// Value and first/second derivative of each output with respect to input
// coordinate `diff_coord`, other coordinates held fixed.
std::vector<ad::Jet2<double>> mlp_input_jet(const MlpModel& m, std::span<const double> theta,
                                            std::span<const double> x, int diff_coord);

std::vector<ad::Jet1<double>> mlp_input_jet1(const MlpModel& m, std::span<const double> theta,
                                             std::span<const double> x, int diff_coord);

// Jet-valued forward passes recorded on a tape (inputs carry the jet seed,
// parameters are tape variables): these keep d/dx and d^2/dx^2 of the outputs
// differentiable with respect to theta.
std::vector<ad::Jet2<ad::Var>> mlp_forward_jet2_tape(const MlpModel& m, ad::Tape& tape,
                                                     std::span<const ad::Var> theta,
                                                     std::span<const double> x, int diff_coord);

std::vector<ad::Jet1<ad::Var>> mlp_forward_jet1_tape(const MlpModel& m, ad::Tape& tape,
                                                     std::span<const ad::Var> theta,
                                                     std::span<const double> x, int diff_coord);

// Builds a tape with `theta` as the first K leaves, evaluates the scalar loss
// the builder assembles, and writes d(loss)/d(theta) into grad_out.
// Returns the loss value. A non-finite loss raises std::runtime_error naming
// the value.
double grad_params(const MlpModel& m, std::span<const double> theta,
                   const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& loss_builder,
                   std::span<double> grad_out);

// Same driver without a model attached (dimension = theta.size()).
double grad_scalar(std::span<const double> theta,
                   const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& loss_builder,
                   std::span<double> grad_out);

// Glorot-normal weight initialization, zero biases.
ParamVector init_xavier_normal(const MlpModel& m, CounterRng& rng);

// Layer views of the flat layout and their inverse.
DenseMatrix layer_weights(const MlpModel& m, std::span<const double> theta, int layer);
std::vector<double> layer_biases(const MlpModel& m, std::span<const double> theta, int layer);
ParamVector pack_layers(const MlpModel& m, const std::vector<DenseMatrix>& weights,
                        const std::vector<std::vector<double>>& biases);
int layer_weight_offset(const MlpModel& m, int layer);
int layer_bias_offset(const MlpModel& m, int layer);

void check_shapes(const MlpModel& m, std::size_t theta_len, std::size_t x_len);

}  // namespace uq
