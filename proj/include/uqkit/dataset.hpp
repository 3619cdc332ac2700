#pragma once

#include <span>
#include <string>
#include <vector>

#include "uqkit/rng.hpp"

namespace uq {

// (x, u) regression pairs; x is flattened row-major with x_dim columns.
struct Dataset {
  std::vector<double> x;
  std::vector<double> u;
  int x_dim = 1;

  int size() const { return static_cast<int>(u.size()); }
  std::span<const double> input(int i) const {
    return std::span<const double>(x.data() + static_cast<std::size_t>(i) * x_dim, x_dim);
  }
};

struct NoiseMeta {
  std::string family = "gaussian";
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// Default 1D benchmark target on [-1, 1].
double benchmark_u(double x);

// Heteroscedastic Student-t noise: 0.5 |x| times a t draw with nu degrees of
// freedom.
double student_t_noise(double x, CounterRng& rng, double nu = 5.0);

enum class NoiseFamily { None, Gaussian, StudentTHet };

struct GenerateConfig {
  int n = 32;
  double x_lo = -1.0;
  double x_hi = 1.0;
  NoiseFamily family = NoiseFamily::Gaussian;
  double sigma = 0.1;
  bool equispaced = true;
};

Dataset generate_function_dataset(const GenerateConfig& cfg, CounterRng& rng);

// Deterministic interleaved split: every k-th point (offset start) goes to the
// second part.
std::pair<Dataset, Dataset> split_every_k(const Dataset& d, int k, int offset = 0);

Dataset load_dataset_csv(const std::string& path);
void save_dataset_csv(const Dataset& d, const std::string& path);

NoiseMeta load_noise_meta(const std::string& path);
void save_noise_meta(const NoiseMeta& meta, const std::string& path);

}  // namespace uq
