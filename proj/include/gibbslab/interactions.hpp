#pragma once
// Energy functionals for finite configurations: total energy H, conditional
// energy h(x, eta) = H(eta + x) - H(eta) and the birth rate b = exp(-h).
//
// Hard-core violations are reported as +infinity; exp(-infinity) == 0 exactly,
// so a forbidden birth always has rate zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gibbslab/geometry.hpp"

namespace gibbslab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Non-negative, compactly supported, radial pair potential.
class PairPotential {
 public:
  enum class Kind { strauss, soft_core };

  static PairPotential strauss(double strength, double range) {
    if (!(strength >= 0.0)) throw std::invalid_argument("strauss: strength must be >= 0");
    if (!(range > 0.0)) throw std::invalid_argument("strauss: range must be positive");
    return PairPotential(Kind::strauss, [strength](double) { return strength; }, range, strength);
  }

  /// `phi` is evaluated on [0, range]; negative values are rejected at evaluation time.
  static PairPotential soft_core(std::function<double(double)> phi, double range) {
    if (!(range > 0.0)) throw std::invalid_argument("soft_core: range must be positive");
    if (!phi) throw std::invalid_argument("soft_core: empty potential");
    return PairPotential(Kind::soft_core, std::move(phi), range, 0.0);
  }

  Kind kind() const { return kind_; }
  double range() const { return range_; }
  double strength() const { return strength_; }

  double operator()(double r) const {
    if (r > range_) return 0.0;
    const double v = phi_(r);
    if (!(v >= 0.0)) throw std::domain_error("pair potential must be non-negative");
    return v;
  }

 private:
  PairPotential(Kind k, std::function<double(double)> phi, double range, double strength)
      : kind_(k), phi_(std::move(phi)), range_(range), strength_(strength) {}

  Kind kind_;
  std::function<double(double)> phi_;
  double range_;
  double strength_;
};

/// H(omega) = gamma * |union of R-balls|, planar only.
struct AreaInteraction {
  double gamma = 1.0;
  double radius = 1.0;
  int quad_resolution = 256;  ///< quadrature rows per radius

  void validate() const {
    if (gamma == 0.0 || !std::isfinite(gamma)) throw std::invalid_argument("area: gamma must be finite and nonzero");
    if (!(radius > 0.0)) throw std::invalid_argument("area: radius must be positive");
    if (quad_resolution < 1) throw std::invalid_argument("area: quad_resolution must be >= 1");
  }
};

/// Hard core of diameter sigma plus a bounded tail on [sigma, range].
struct SuperstablePair {
  double hard_core = 0.0;
  std::function<double(double)> tail;  ///< may be negative; |tail| <= tail_bound
  double tail_bound = 0.0;
  double range = 1.0;
  int dim = 2;  ///< enters only the packing bound on the neighbour count

  void validate() const {
    if (dim < 1 || dim > 3) throw std::invalid_argument("superstable: dim must be 1, 2 or 3");
    if (!(hard_core >= 0.0)) throw std::invalid_argument("superstable: hard_core must be >= 0");
    if (!(range > hard_core)) throw std::invalid_argument("superstable: range must exceed hard_core");
    if (!(tail_bound >= 0.0)) throw std::invalid_argument("superstable: tail_bound must be >= 0");
    if (!tail) throw std::invalid_argument("superstable: empty tail");
  }

  double operator()(double r) const {
    if (r < hard_core) return kInfinity;
    if (r > range) return 0.0;
    return tail(r);
  }
};

/// H == 0: the intensity-one Poisson reference.
struct NoInteraction {};

namespace detail {

using Interval = std::pair<double, double>;

/// Length of the union of `iv` (modified in place).
inline double union_length(std::vector<Interval>& iv) {
  if (iv.empty()) return 0.0;
  std::sort(iv.begin(), iv.end());
  double total = 0.0;
  double lo = iv[0].first, hi = iv[0].second;
  for (std::size_t k = 1; k < iv.size(); ++k) {
    if (iv[k].first > hi) {
      total += hi - lo;
      lo = iv[k].first;
      hi = iv[k].second;
    } else {
      hi = std::max(hi, iv[k].second);
    }
  }
  return total + (hi - lo);
}

/// Length of [a, b] not covered by any interval in `iv`.
inline double uncovered_length(double a, double b, std::vector<Interval>& iv) {
  std::vector<Interval> clipped;
  clipped.reserve(iv.size());
  for (const auto& [lo, hi] : iv) {
    const double l = std::max(lo, a), h = std::min(hi, b);
    if (h > l) clipped.emplace_back(l, h);
  }
  return (b - a) - union_length(clipped);
}

/// Quadrature rows for the area functional: y_j = -n + (j + 1/2) h with h
/// chosen so that the window side is an integer number of rows.
struct RowLattice {
  double origin;  // -n
  double h;
  std::int64_t rows_per_window;

  RowLattice(const Window& w, const AreaInteraction& a) : origin(-w.half_side()) {
    rows_per_window = static_cast<std::int64_t>(std::ceil(w.side() * a.quad_resolution / a.radius - 1e-9));
    rows_per_window = std::max<std::int64_t>(rows_per_window, 1);
    h = w.side() / static_cast<double>(rows_per_window);
  }

  double y(std::int64_t j) const { return origin + (static_cast<double>(j) + 0.5) * h; }
  std::int64_t first_row(double y_lo) const {
    return static_cast<std::int64_t>(std::ceil((y_lo - origin) / h - 0.5));
  }
  std::int64_t last_row(double y_hi) const {
    return static_cast<std::int64_t>(std::floor((y_hi - origin) / h - 0.5));
  }
};

/// Uncovered area of B_R(x) given neighbour disk centres as displacements from x.
inline double delta_area_rows(const Point& x, const std::vector<Point>& disp, const AreaInteraction& a,
                              const RowLattice& rows) {
  const double R = a.radius;
  std::vector<Interval> iv;
  double area = 0.0;
  for (std::int64_t j = rows.first_row(x[1] - R); j <= rows.last_row(x[1] + R); ++j) {
    const double dy = rows.y(j) - x[1];
    const double s = R * R - dy * dy;
    if (s <= 0.0) continue;
    const double w = std::sqrt(s);
    iv.clear();
    for (const auto& d : disp) {
      const double ey = dy - d[1];
      const double t = R * R - ey * ey;
      if (t <= 0.0) continue;
      const double wn = std::sqrt(t);
      iv.emplace_back(d[0] - wn, d[0] + wn);
    }
    area += uncovered_length(-w, w, iv);
  }
  return area * rows.h;
}

}  // namespace detail

/// Area of B_R(x) not covered by the R-balls of configuration points within
/// 2R of x.  Row quadrature: midpoint in y with quad_resolution rows per
/// radius, exact interval arithmetic in x.  Planar windows only.  The result
/// is clamped to [0, pi R^2]; the midpoint rows overshoot a lone disk by O(h^2).
inline double delta_area(const PointConfiguration& config, const Point& x, double radius, int quad_resolution) {
  if (config.dim() != 2) throw std::invalid_argument("delta_area: requires d = 2");
  const AreaInteraction a{1.0, radius, quad_resolution};
  a.validate();
  std::vector<Point> disp;
  config.for_each_within(x, 2.0 * radius, [&](std::size_t, const Point& d, double) { disp.push_back(d); });
  const double v = detail::delta_area_rows(x, disp, a, detail::RowLattice(config.window(), a));
  return std::clamp(v, 0.0, kPi * radius * radius);
}

/// One of the supported energy families, with cached range and rate bound.
class Interaction {
 public:
  using Model = std::variant<NoInteraction, PairPotential, AreaInteraction, SuperstablePair>;

  Interaction() : Interaction(NoInteraction{}) {}
  explicit Interaction(Model m) : model_(std::move(m)) {
    std::visit([this](const auto& v) { init(v); }, model_);
  }

  const Model& model() const { return model_; }
  bool is_free() const { return std::holds_alternative<NoInteraction>(model_); }

  /// Distance beyond which points do not interact.
  double range() const { return range_; }

  /// Upper bound on b(x, eta); +infinity when no bound is available.
  double birth_rate_upper_bound() const { return rate_bound_; }

  /// Rejects windows on which the minimal-image energies are ambiguous.
  void check_window(const Window& w) const {
    if (const auto* a = std::get_if<AreaInteraction>(&model_)) {
      if (w.dim() != 2) throw std::invalid_argument("area interaction requires d = 2");
      if (w.periodic() && w.half_side() < 2.0 * a->radius)
        throw std::invalid_argument("area interaction on a torus requires half_side >= 2R");
      return;
    }
    if (w.periodic() && w.half_side() < range_)
      throw std::invalid_argument("periodic window must have half_side >= interaction range");
  }

  double total_energy(const PointConfiguration& c) const {
    return std::visit([&](const auto& v) { return total(v, c); }, model_);
  }

  /// h(x, eta), with optional fixed boundary points outside the window and an
  /// optional index of eta to leave out (used for death moves).
  double conditional_energy(const Point& x, const PointConfiguration& eta,
                            const PointConfiguration* boundary = nullptr,
                            std::size_t skip = std::numeric_limits<std::size_t>::max()) const {
    if (is_free()) return 0.0;
    std::vector<Point> disp;
    auto collect = [&](std::size_t, const Point& d, double) { disp.push_back(d); };
    eta.for_each_within(x, range_, collect, skip);
    if (boundary) boundary->for_each_within(x, range_, collect);
    return std::visit([&](const auto& v) { return local(v, x, disp, eta.window()); }, model_);
  }

  double birth_rate(const Point& x, const PointConfiguration& eta, const PointConfiguration* boundary = nullptr,
                    std::size_t skip = std::numeric_limits<std::size_t>::max()) const {
    const double h = conditional_energy(x, eta, boundary, skip);
    if (h == kInfinity) return 0.0;
    return std::exp(-h);
  }

 private:
  void init(const NoInteraction&) {
    range_ = 0.0;
    rate_bound_ = 1.0;
  }
  void init(const PairPotential& p) {
    range_ = p.range();
    rate_bound_ = 1.0;
  }
  void init(const AreaInteraction& a) {
    a.validate();
    range_ = 2.0 * a.radius;
    rate_bound_ = a.gamma > 0.0 ? 1.0 : std::exp(-a.gamma * kPi * a.radius * a.radius);
  }
  void init(const SuperstablePair& s) {
    s.validate();
    range_ = s.range;
    if (s.hard_core <= 0.0) {
      rate_bound_ = kInfinity;
    } else {
      // Points pairwise >= sigma apart in a ball of radius `range`: disjoint
      // sigma/2-balls inside the (range + sigma/2)-ball.
      const double ratio = (s.range + 0.5 * s.hard_core) / (0.5 * s.hard_core);
      const double k_max = std::floor(std::pow(ratio, s.dim));
      rate_bound_ = std::exp(s.tail_bound * k_max);
    }
  }

  static double total(const NoInteraction&, const PointConfiguration&) { return 0.0; }

  template <class Phi>
  static double pair_sum(const Phi& phi, double range, const PointConfiguration& c) {
    double e = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      c.for_each_within(c[i], range, [&](std::size_t j, const Point&, double d2) {
        if (j > i) e += phi(std::sqrt(d2));
      });
      if (e == kInfinity) return e;
    }
    return e;
  }

  static double total(const PairPotential& p, const PointConfiguration& c) { return pair_sum(p, p.range(), c); }
  static double total(const SuperstablePair& s, const PointConfiguration& c) { return pair_sum(s, s.range, c); }

  static double total(const AreaInteraction& a, const PointConfiguration& c) {
    if (c.dim() != 2) throw std::invalid_argument("area interaction requires d = 2");
    if (c.empty()) return 0.0;
    const Window& w = c.window();
    const detail::RowLattice rows(w, a);
    const double R = a.radius, n = w.half_side(), L = w.side();
    std::int64_t j_min = 0, j_max = rows.rows_per_window - 1;
    if (!w.periodic()) {
      j_min = std::numeric_limits<std::int64_t>::max();
      j_max = std::numeric_limits<std::int64_t>::min();
      for (const auto& p : c.points()) {
        j_min = std::min(j_min, rows.first_row(p[1] - R));
        j_max = std::max(j_max, rows.last_row(p[1] + R));
      }
    }
    std::vector<std::vector<detail::Interval>> per_row(static_cast<std::size_t>(j_max - j_min + 1));
    for (const auto& p : c.points()) {
      for (std::int64_t j = rows.first_row(p[1] - R); j <= rows.last_row(p[1] + R); ++j) {
        const double dy = rows.y(j) - p[1];
        const double s = R * R - dy * dy;
        if (s <= 0.0) continue;
        const double hw = std::sqrt(s);
        if (!w.periodic()) {
          per_row[static_cast<std::size_t>(j - j_min)].emplace_back(p[0] - hw, p[0] + hw);
          continue;
        }
        const std::int64_t m = rows.rows_per_window;
        auto& row = per_row[static_cast<std::size_t>(((j % m) + m) % m)];
        const double lo = p[0] - hw, hi = p[0] + hw;
        if (2.0 * hw >= L) {
          row.emplace_back(-n, n);
        } else if (lo < -n) {
          row.emplace_back(lo + L, n);
          row.emplace_back(-n, hi);
        } else if (hi > n) {
          row.emplace_back(lo, n);
          row.emplace_back(-n, hi - L);
        } else {
          row.emplace_back(lo, hi);
        }
      }
    }
    double area = 0.0;
    for (auto& row : per_row) area += detail::union_length(row);
    return a.gamma * area * rows.h;
  }

  static double local(const NoInteraction&, const Point&, const std::vector<Point>&, const Window&) { return 0.0; }

  static double local(const PairPotential& p, const Point&, const std::vector<Point>& disp, const Window&) {
    double e = 0.0;
    for (const auto& d : disp) e += p(std::hypot(d[0], d[1], d[2]));
    return e;
  }

  static double local(const SuperstablePair& s, const Point&, const std::vector<Point>& disp, const Window&) {
    double e = 0.0;
    for (const auto& d : disp) {
      const double v = s(std::hypot(d[0], d[1], d[2]));
      if (v == kInfinity) return kInfinity;
      e += v;
    }
    return e;
  }

  static double local(const AreaInteraction& a, const Point& x, const std::vector<Point>& disp, const Window& w) {
    return a.gamma * detail::delta_area_rows(x, disp, a, detail::RowLattice(w, a));
  }

  Model model_;
  double range_ = 0.0;
  double rate_bound_ = 1.0;
};

inline Interaction strauss(double strength, double range) {
  return Interaction(PairPotential::strauss(strength, range));
}

inline Interaction area_interaction(double gamma, double radius, int quad_resolution = 256) {
  return Interaction(AreaInteraction{gamma, radius, quad_resolution});
}

/// Hard core sigma with a constant well of depth `depth` on [sigma, range].
inline Interaction square_well(double hard_core, double depth, double range, int dim = 2) {
  return Interaction(SuperstablePair{hard_core, [depth](double) { return -depth; }, std::abs(depth), range, dim});
}

}  // namespace gibbslab
