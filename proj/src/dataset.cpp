#include "uqkit/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uq {

double benchmark_u(double x) {
  return x * x * x - 0.4 * x + 0.3 * std::sin(2.0 * std::numbers::pi * x);
}

double student_t_noise(double x, CounterRng& rng, double nu) {
  return 0.5 * std::abs(x) * rng.student_t(nu);
}

Dataset generate_function_dataset(const GenerateConfig& cfg, CounterRng& rng) {
  if (cfg.n < 1) throw std::invalid_argument("generate_function_dataset: n must be >= 1");
  Dataset d;
  d.x_dim = 1;
  d.x.resize(cfg.n);
  d.u.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    double xi;
    if (cfg.equispaced) {
      xi = (cfg.n == 1) ? cfg.x_lo : cfg.x_lo + (cfg.x_hi - cfg.x_lo) * i / (cfg.n - 1);
    } else {
      xi = cfg.x_lo + (cfg.x_hi - cfg.x_lo) * rng.uniform();
    }
    double noise = 0.0;
    switch (cfg.family) {
      case NoiseFamily::None:
        break;
      case NoiseFamily::Gaussian:
        noise = cfg.sigma * rng.normal();
        break;
      case NoiseFamily::StudentTHet:
        noise = student_t_noise(xi, rng);
        break;
    }
    d.x[i] = xi;
    d.u[i] = benchmark_u(xi) + noise;
  }
  return d;
}

std::pair<Dataset, Dataset> split_every_k(const Dataset& d, int k, int offset) {
  if (k < 2) throw std::invalid_argument("split_every_k: k must be >= 2");
  Dataset keep, held;
  keep.x_dim = held.x_dim = d.x_dim;
  for (int i = 0; i < d.size(); ++i) {
    Dataset& dst = ((i % k) == (offset % k)) ? held : keep;
    auto xi = d.input(i);
    dst.x.insert(dst.x.end(), xi.begin(), xi.end());
    dst.u.push_back(d.u[i]);
  }
  return {keep, held};
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
  // Header x,u or x1,..,xd,u.
  int cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  if (cols < 2) throw std::runtime_error("dataset header needs at least two columns: " + path);
  Dataset d;
  d.x_dim = cols - 1;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != cols)
      throw std::runtime_error("row " + std::to_string(lineno) + " of " + path + " has " +
                               std::to_string(row.size()) + " cells, expected " +
                               std::to_string(cols));
    d.x.insert(d.x.end(), row.begin(), row.end() - 1);
    d.u.push_back(row.back());
  }
  return d;
}

void save_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  if (d.x_dim == 1) {
    out << "x,u\n";
  } else {
    for (int j = 0; j < d.x_dim; ++j) out << "x" << (j + 1) << ",";
    out << "u\n";
  }
  char buf[64];
  for (int i = 0; i < d.size(); ++i) {
    for (double xv : d.input(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", xv);
      out << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", d.u[i]);
    out << buf << "\n";
  }
}

NoiseMeta load_noise_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open noise metadata " + path);
  nlohmann::json j;
  in >> j;
  NoiseMeta m;
  m.family = j.value("family", "gaussian");
  m.sigma = j.value("sigma", 0.0);
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

void save_noise_meta(const NoiseMeta& meta, const std::string& path) {
  nlohmann::json j;
  j["family"] = meta.family;
  j["sigma"] = meta.sigma;
  j["seed"] = meta.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write noise metadata " + path);
  out << j.dump(2) << "\n";
}

}  // namespace uq
