#pragma once

// Reference computations used only by tests. They deliberately avoid the
// library's code paths (no FFT, no lattice, no boost quantile).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Estimate {
  double p;
  double standard_error;
};

// P(t_i + theta_i < t_j + theta_j) for independent Gaussian offsets, by sampling.
inline Estimate monte_carlo_precedence(double t_i, double t_j, double mu_i, double sd_i,
                                       double mu_j, double sd_j, std::size_t samples,
                                       unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> a(mu_i, sd_i), b(mu_j, sd_j);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    if (t_i + a(rng) < t_j + b(rng)) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples))};
}

// Quadratic-time linear convolution.
inline std::vector<double> direct_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

// Standard normal quantile by bisection on erfc.
inline double bisect_normal_quantile(double q) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
    (cdf < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Discrete offsets: value/probability pairs.
using Discrete = std::vector<std::pair<double, double>>;

// P(t_i + theta_i < t_j + theta_j) by enumerating every joint outcome.
inline double enumerate_precedence(double t_i, double t_j, const Discrete& theta_i,
                                   const Discrete& theta_j) {
  double p = 0.0;
  for (const auto& [vi, pi] : theta_i) {
    for (const auto& [vj, pj] : theta_j) {
      if (t_i + vi < t_j + vj) p += pi * pj;
    }
  }
  return p;
}

}  // namespace oracle
