#pragma once

// Clock-offset distributions and the probability that one timestamped
// message truly precedes another.
//
// Convention: a message stamped T by a client whose offset is theta has true
// (sequencer-clock) time T* = T + theta. A ClockModel is the distribution of
// theta for one client.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "tommy/detail/fft.hpp"
#include "tommy/errors.hpp"

namespace tommy {

inline constexpr double kNormalizationTolerance = 1e-6;

// Gaussian discretization covers mean +/- this many standard deviations.
inline constexpr double kGaussianSpan = 8.0;

// Upper bound on lattice cells per discretized distribution.
inline constexpr std::size_t kMaxLatticeCells = std::size_t{1} << 24;

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_quantile(double q) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), q);
}

struct GaussianOffset {
  double mean = 0.0;
  double stddev = 0.0;  // 0 is a point mass
};

// Piecewise-constant density over contiguous bins.
struct EmpiricalOffset {
  std::vector<double> bin_edges;
  std::vector<double> densities;  // per-microsecond, one per bin
};

namespace detail {

inline void check_bins(std::span<const double> edges, std::span<const double> densities,
                       const char* what) {
  if (densities.empty()) throw InvalidDistribution(std::string(what) + ": no bins");
  if (edges.size() != densities.size() + 1) {
    throw InvalidDistribution(std::string(what) + ": bin_edges must have densities+1 entries");
  }
  for (double e : edges) {
    if (!std::isfinite(e)) throw InvalidDistribution(std::string(what) + ": non-finite edge");
  }
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i] < edges[i + 1])) {
      throw InvalidDistribution(std::string(what) + ": bin_edges not strictly increasing");
    }
  }
  for (double d : densities) {
    if (!std::isfinite(d) || d < 0.0) {
      throw InvalidDistribution(std::string(what) + ": densities must be finite and >= 0");
    }
  }
}

// Cumulative mass at each edge; front is 0.
inline std::vector<double> cumulative(std::span<const double> edges,
                                      std::span<const double> densities) {
  std::vector<double> cum(edges.size(), 0.0);
  for (std::size_t i = 0; i < densities.size(); ++i) {
    cum[i + 1] = cum[i] + densities[i] * (edges[i + 1] - edges[i]);
  }
  return cum;
}

// CDF of a piecewise-constant density, linear inside each bin.
inline double piecewise_cdf(std::span<const double> edges, std::span<const double> densities,
                            std::span<const double> cum, double x) {
  if (x <= edges.front()) return 0.0;
  if (x >= edges.back()) return cum.back();
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  const auto k = static_cast<std::size_t>(std::distance(edges.begin(), it)) - 1;
  return cum[k] + densities[k] * (x - edges[k]);
}

}  // namespace detail

class ClockModel {
 public:
  ClockModel() = default;

  static ClockModel gaussian(double mean, double stddev) {
    if (!std::isfinite(mean) || !std::isfinite(stddev) || stddev < 0.0) {
      throw InvalidDistribution("gaussian: mean must be finite and std >= 0");
    }
    ClockModel m;
    m.kind_ = GaussianOffset{mean, stddev};
    return m;
  }

  static ClockModel point_mass(double at) { return gaussian(at, 0.0); }

  static ClockModel empirical(std::vector<double> bin_edges, std::vector<double> densities) {
    detail::check_bins(bin_edges, densities, "empirical");
    const auto cum = detail::cumulative(bin_edges, densities);
    if (std::abs(cum.back() - 1.0) > kNormalizationTolerance) {
      throw InvalidDistribution("empirical: densities integrate to " + std::to_string(cum.back()) +
                                ", expected 1");
    }
    ClockModel m;
    m.kind_ = EmpiricalOffset{std::move(bin_edges), std::move(densities)};
    m.cum_ = cum;
    return m;
  }

  bool is_gaussian() const noexcept { return std::holds_alternative<GaussianOffset>(kind_); }
  const GaussianOffset& as_gaussian() const { return std::get<GaussianOffset>(kind_); }
  const EmpiricalOffset& as_empirical() const { return std::get<EmpiricalOffset>(kind_); }

  // Cumulative mass at each bin edge (empirical models only).
  std::span<const double> cumulative() const noexcept { return cum_; }

  bool is_point_mass() const noexcept { return is_gaussian() && as_gaussian().stddev == 0.0; }

  double mean() const {
    if (is_gaussian()) return as_gaussian().mean;
    const auto& e = as_empirical();
    double m = 0.0;
    for (std::size_t i = 0; i < e.densities.size(); ++i) {
      const double w = e.bin_edges[i + 1] - e.bin_edges[i];
      m += e.densities[i] * w * 0.5 * (e.bin_edges[i] + e.bin_edges[i + 1]);
    }
    return m / cum_.back();
  }

  double stddev() const {
    if (is_gaussian()) return as_gaussian().stddev;
    const auto& e = as_empirical();
    const double mu = mean();
    double second = 0.0;
    for (std::size_t i = 0; i < e.densities.size(); ++i) {
      const double a = e.bin_edges[i] - mu;
      const double b = e.bin_edges[i + 1] - mu;
      // integral of x^2 over a uniform bin
      second += e.densities[i] * (b * b * b - a * a * a) / 3.0;
    }
    return std::sqrt(std::max(0.0, second / cum_.back()));
  }

  double cdf(double x) const {
    if (is_gaussian()) {
      const auto& g = as_gaussian();
      if (g.stddev == 0.0) return x >= g.mean ? 1.0 : 0.0;
      return normal_cdf((x - g.mean) / g.stddev);
    }
    const auto& e = as_empirical();
    return detail::piecewise_cdf(e.bin_edges, e.densities, cum_, x) / cum_.back();
  }

  friend bool operator==(const ClockModel& a, const ClockModel& b) {
    if (a.kind_.index() != b.kind_.index()) return false;
    if (a.is_gaussian()) {
      return a.as_gaussian().mean == b.as_gaussian().mean &&
             a.as_gaussian().stddev == b.as_gaussian().stddev;
    }
    return a.as_empirical().bin_edges == b.as_empirical().bin_edges &&
           a.as_empirical().densities == b.as_empirical().densities;
  }

 private:
  std::variant<GaussianOffset, EmpiricalOffset> kind_{GaussianOffset{}};
  std::vector<double> cum_;
};

// Discrete PDF of the offset difference theta_j - theta_i.
class DifferencePdf {
 public:
  DifferencePdf() = default;

  // Validates the bins and renormalizes the densities to unit mass.
  DifferencePdf(std::vector<double> bin_edges, std::vector<double> densities)
      : edges_(std::move(bin_edges)), densities_(std::move(densities)) {
    detail::check_bins(edges_, densities_, "difference pdf");
    auto cum = detail::cumulative(edges_, densities_);
    const double total = cum.back();
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw InvalidDistribution("difference pdf: zero or non-finite total mass");
    }
    for (auto& d : densities_) d /= total;
    for (auto& c : cum) c /= total;
    cum.back() = 1.0;
    cdf_ = std::move(cum);
  }

  std::span<const double> bin_edges() const noexcept { return edges_; }
  std::span<const double> densities() const noexcept { return densities_; }
  // CDF value at each bin edge.
  std::span<const double> cdf() const noexcept { return cdf_; }

  double support_min() const { return edges_.front(); }
  double support_max() const { return edges_.back(); }

  double cdf_at(double x) const {
    return std::clamp(detail::piecewise_cdf(edges_, densities_, cdf_, x), 0.0, 1.0);
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < densities_.size(); ++i) {
      m += (cdf_[i + 1] - cdf_[i]) * 0.5 * (edges_[i] + edges_[i + 1]);
    }
    return m;
  }

  double variance() const {
    const double mu = mean();
    double second = 0.0;
    for (std::size_t i = 0; i < densities_.size(); ++i) {
      const double a = edges_[i] - mu;
      const double b = edges_[i + 1] - mu;
      second += densities_[i] * (b * b * b - a * a * a) / 3.0;
    }
    return second;
  }

 private:
  std::vector<double> edges_;
  std::vector<double> densities_;
  std::vector<double> cdf_;
};

namespace detail {

// Probability mass on an evenly spaced lattice: cell k is centred at
// first_center + k * step and carries mass[k].
struct Lattice {
  double first_center = 0.0;
  double step = 1.0;
  std::vector<double> mass;
};

inline std::size_t lattice_cells(double width, double step) {
  const double n = std::ceil(width / step - 1e-9);
  if (!(n < static_cast<double>(kMaxLatticeCells))) {
    throw InvalidDistribution("resolution too fine for distribution width");
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

inline Lattice discretize(const ClockModel& model, double step) {
  Lattice out;
  out.step = step;
  if (model.is_gaussian()) {
    const auto& g = model.as_gaussian();
    if (g.stddev == 0.0) {
      out.first_center = g.mean;
      out.mass = {1.0};
      return out;
    }
    const std::size_t n = lattice_cells(2.0 * kGaussianSpan * g.stddev, step);
    const double lo = g.mean - 0.5 * static_cast<double>(n) * step;
    out.first_center = lo + 0.5 * step;
    out.mass.resize(n);
    double prev = normal_cdf((lo - g.mean) / g.stddev);
    for (std::size_t k = 0; k < n; ++k) {
      const double next = normal_cdf((lo + static_cast<double>(k + 1) * step - g.mean) / g.stddev);
      out.mass[k] = next - prev;
      prev = next;
    }
  } else {
    const auto& e = model.as_empirical();
    const double lo = e.bin_edges.front();
    const std::size_t n = lattice_cells(e.bin_edges.back() - lo, step);
    out.first_center = lo + 0.5 * step;
    out.mass.resize(n);
    double prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double next = model.cdf(lo + static_cast<double>(k + 1) * step);
      out.mass[k] = next - prev;
      prev = next;
    }
  }
  const double total = std::accumulate(out.mass.begin(), out.mass.end(), 0.0);
  if (!(total > 0.0)) throw InvalidDistribution("distribution has no mass at this resolution");
  for (auto& m : out.mass) m /= total;
  return out;
}

}  // namespace detail

// PDF of theta_j - theta_i.
//
// Both models are placed on lattices of width `resolution`; the difference of
// cell centres is again a lattice, whose weights are the convolution of
// f_theta_j with the reflection of f_theta_i, computed by FFT. Each output
// bin is centred on a lattice point.
inline DifferencePdf difference_pdf(const ClockModel& ci, const ClockModel& cj,
                                    double resolution = 1.0) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw DomainError("resolution must be > 0");
  }
  const auto xi = detail::discretize(ci, resolution);
  const auto xj = detail::discretize(cj, resolution);

  std::vector<double> reflected(xi.mass.rbegin(), xi.mass.rend());
  auto weights = detail::fft_convolve(xj.mass, reflected);
  // Transform round-off leaves tiny negative values in empty regions.
  for (auto& w : weights) w = std::max(w, 0.0);

  const std::size_t ni = xi.mass.size();
  const double first_center =
      xj.first_center - (xi.first_center + static_cast<double>(ni - 1) * resolution);

  std::vector<double> edges(weights.size() + 1);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = first_center + (static_cast<double>(m) - 0.5) * resolution;
  }
  for (auto& w : weights) w /= resolution;
  return DifferencePdf(std::move(edges), std::move(weights));
}

// P(Delta > x): one minus the linearly interpolated CDF.
inline double tail_probability(const DifferencePdf& pdf, double x) {
  if (x <= pdf.support_min()) return 1.0;
  if (x >= pdf.support_max()) return 0.0;
  return std::clamp(1.0 - pdf.cdf_at(x), 0.0, 1.0);
}

// P(T_i* < T_j*) for two Gaussian offsets.
// Throws TieError("i", "j") when both are point masses with equal true times.
inline double preceding_prob_gaussian(double t_i, double t_j, const GaussianOffset& c_i,
                                      const GaussianOffset& c_j) {
  const double gap = (t_j + c_j.mean) - (t_i + c_i.mean);
  const double spread = std::hypot(c_i.stddev, c_j.stddev);
  if (spread == 0.0) {
    if (gap == 0.0) throw TieError("i", "j");
    return gap > 0.0 ? 1.0 : 0.0;
  }
  return normal_cdf(gap / spread);
}

enum class ProbabilityPath { closed_form, empirical };

inline const char* to_string(ProbabilityPath p) {
  return p == ProbabilityPath::closed_form ? "closed-form" : "empirical";
}

inline ProbabilityPath probability_path(const ClockModel& c_i, const ClockModel& c_j) {
  return c_i.is_gaussian() && c_j.is_gaussian() ? ProbabilityPath::closed_form
                                                : ProbabilityPath::empirical;
}

// P(T_i* < T_j*) from a precomputed theta_j - theta_i density.
inline double preceding_prob(double t_i, double t_j, const DifferencePdf& diff) {
  return tail_probability(diff, t_i - t_j);
}

// Always goes through the discretized convolution, even for Gaussians.
inline double preceding_prob_convolved(double t_i, double t_j, const ClockModel& c_i,
                                       const ClockModel& c_j, double resolution = 1.0) {
  return preceding_prob(t_i, t_j, difference_pdf(c_i, c_j, resolution));
}

inline double preceding_prob(double t_i, double t_j, const ClockModel& c_i, const ClockModel& c_j,
                             double resolution = 1.0) {
  if (probability_path(c_i, c_j) == ProbabilityPath::closed_form) {
    return preceding_prob_gaussian(t_i, t_j, c_i.as_gaussian(), c_j.as_gaussian());
  }
  return preceding_prob_convolved(t_i, t_j, c_i, c_j, resolution);
}

// Smallest t with P(theta <= t) >= q.
inline double offset_quantile(const ClockModel& c, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  if (c.is_gaussian()) {
    const auto& g = c.as_gaussian();
    if (g.stddev == 0.0) return g.mean;
    return g.mean + g.stddev * normal_quantile(q);
  }
  const auto& e = c.as_empirical();
  const auto cum = c.cumulative();
  const double target = q * cum.back();
  // first edge whose cumulative mass reaches the target
  const auto it = std::lower_bound(cum.begin() + 1, cum.end(), target);
  const auto upper = static_cast<std::size_t>(std::distance(cum.begin(), it));
  const std::size_t k = std::min(upper, cum.size() - 1) - 1;
  const double d = e.densities[k];
  if (d <= 0.0) return e.bin_edges[k + 1];
  const double t = e.bin_edges[k] + (target - cum[k]) / d;
  return std::clamp(t, e.bin_edges[k], e.bin_edges[k + 1]);
}

}  // namespace tommy
