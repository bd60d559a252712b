#pragma once
// Periodisation omega^(n) of a configuration restricted to [-n, n)^d,
// the density functional of the stationary empirical field, the density
// tail statistic and the temperedness statistic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gibbslab/dynamics.hpp"
#include "gibbslab/estimators.hpp"
#include "gibbslab/geometry.hpp"

namespace gibbslab {

/// omega_{L_n} extended by all shifts 2n * Z^d; counts are evaluated lazily.
class PeriodizedField {
 public:
  PeriodizedField(std::vector<Point> base, double n, int dim) : base_(std::move(base)), n_(n), dim_(dim) {}

  const std::vector<Point>& base() const { return base_; }
  double half_side() const { return n_; }
  double period() const { return 2.0 * n_; }
  int dim() const { return dim_; }

  /// Number of points of the periodic extension in the half-open box.
  std::int64_t count_in(const Box& b) const {
    const double L = period();
    std::int64_t total = 0;
    for (const auto& p : base_) {
      std::int64_t copies = 1;
      for (int k = 0; k < dim_; ++k) {
        // integers i with lower <= p + L i < upper
        const auto first = static_cast<std::int64_t>(std::ceil((b.lower[k] - p[k]) / L));
        const auto last = static_cast<std::int64_t>(std::ceil((b.upper[k] - p[k]) / L)) - 1;
        copies *= std::max<std::int64_t>(0, last - first + 1);
        if (copies == 0) break;
      }
      total += copies;
    }
    return total;
  }

  /// Periodic extension restricted to [-m, m)^d as an explicit point list.
  std::vector<Point> materialize(double m) const {
    std::vector<Point> out;
    const double L = period();
    const auto reach = static_cast<std::int64_t>(std::ceil(m / L)) + 1;
    for (const auto& p : base_) {
      for (std::int64_t a = -reach; a <= reach; ++a)
        for (std::int64_t b = (dim_ > 1 ? -reach : 0); b <= (dim_ > 1 ? reach : 0); ++b)
          for (std::int64_t c = (dim_ > 2 ? -reach : 0); c <= (dim_ > 2 ? reach : 0); ++c) {
            Point q = p;
            q[0] += L * a;
            if (dim_ > 1) q[1] += L * b;
            if (dim_ > 2) q[2] += L * c;
            bool in = true;
            for (int k = 0; k < dim_; ++k)
              if (!(q[k] >= -m && q[k] < m)) in = false;
            if (in) out.push_back(q);
          }
    }
    return out;
  }

 private:
  std::vector<Point> base_;
  double n_;
  int dim_;
};

inline PeriodizedField periodize(const PointConfiguration& config, double n) {
  if (!(n > 0.0) || n > config.window().half_side() + 1e-12)
    throw std::invalid_argument("periodize: need 0 < n <= window half_side");
  std::vector<Point> kept;
  for (const auto& p : config.points()) {
    bool in = true;
    for (int k = 0; k < config.dim(); ++k)
      if (!(p[k] >= -n && p[k] < n)) in = false;
    if (in) kept.push_back(p);
  }
  return PeriodizedField(std::move(kept), n, config.dim());
}

/// R_{n,omega}[N_C] for C = [0,1]^d: translation average of the unit-cube
/// count over L_n, equal to N_{L_n}(omega) / |L_n|.
inline double empirical_field_density(const PeriodizedField& field) {
  return static_cast<double>(field.base().size()) / std::pow(field.period(), field.dim());
}

/// (N / |L_n|) 1{N >= t |L_n|} for one count.
inline double tail_value(std::size_t count, double volume, double t) {
  const double dens = static_cast<double>(count) / volume;
  return dens >= t ? dens : 0.0;
}

struct TailEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t hits = 0;
  std::size_t n_samples = 0;
  /// log(estimate) / |L_n|; -infinity when there are no hits.
  double log_per_volume = -std::numeric_limits<double>::infinity();
  /// With zero hits: one-sided 95% upper bound on the hit probability.
  double hit_probability_upper95 = 0.0;
};

/// Tail functional on a shared set of counts N_{L_n}.
inline TailEstimate density_tail_from_counts(std::span<const std::size_t> counts, double volume, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("density_tail: t must be positive");
  if (counts.size() < 2) throw std::invalid_argument("density_tail: needs at least 2 samples");
  std::vector<double> v;
  v.reserve(counts.size());
  TailEstimate r;
  for (auto c : counts) {
    v.push_back(tail_value(c, volume, t));
    if (v.back() > 0.0) ++r.hits;
  }
  const auto m = mean_estimate(v);
  r.estimate = m.mean;
  r.std_error = m.std_error;
  r.n_samples = counts.size();
  if (r.hits > 0) {
    r.log_per_volume = std::log(r.estimate) / volume;
    r.hit_probability_upper95 = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.hit_probability_upper95 = 1.0 - std::pow(0.05, 1.0 / static_cast<double>(counts.size()));
  }
  return r;
}

template <class Sampler>
std::vector<std::size_t> sample_window_counts(Sampler&& sampler, double n, std::size_t n_samples, Rng& rng) {
  std::vector<std::size_t> counts;
  counts.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const PointConfiguration c = sampler(rng);
    Box b;
    for (int k = 0; k < c.dim(); ++k) {
      b.lower[k] = -n;
      b.upper[k] = n;
    }
    counts.push_back(c.count_in(b));
  }
  return counts;
}

template <class Sampler>
TailEstimate density_tail(Sampler&& sampler, double n, double t, std::size_t n_samples, int dim, Rng& rng) {
  const auto counts = sample_window_counts(sampler, n, n_samples, rng);
  return density_tail_from_counts(counts, std::pow(2.0 * n, dim), t);
}

/// max over m = 1..n_max of |L_m|^{-1} sum_{i in L_m cap Z^d} N^2_{i + [-1,1]^d}.
inline double temperedness_statistic(const PointConfiguration& config, int n_max) {
  const Window& w = config.window();
  const int d = w.dim();
  if (n_max < 1) throw std::invalid_argument("temperedness_statistic: n_max must be >= 1");
  if (!w.periodic() && n_max + 1 > w.half_side() + 1e-12)
    throw std::invalid_argument("temperedness_statistic: cells i + [-1,1]^d must fit in the window");
  auto cell_count = [&](const Point& i) {
    std::int64_t c = 0;
    config.for_each_within(i, std::sqrt(static_cast<double>(d)), [&](std::size_t, const Point& disp, double) {
      for (int k = 0; k < d; ++k)
        if (std::abs(disp[k]) > 1.0) return;
      ++c;
    });
    return c;
  };
  double best = 0.0;
  for (int m = 1; m <= n_max; ++m) {
    double sum = 0.0;
    Point i{0.0, 0.0, 0.0};
    for (int a = -m; a <= m; ++a) {
      i[0] = a;
      for (int b = (d > 1 ? -m : 0); b <= (d > 1 ? m : 0); ++b) {
        if (d > 1) i[1] = b;
        for (int c = (d > 2 ? -m : 0); c <= (d > 2 ? m : 0); ++c) {
          if (d > 2) i[2] = c;
          const Point q = w.periodic() ? w.wrap(i) : i;
          const auto n = cell_count(q);
          sum += static_cast<double>(n * n);
        }
      }
    }
    best = std::max(best, sum / std::pow(2.0 * m, d));
  }
  return best;
}

}  // namespace gibbslab
