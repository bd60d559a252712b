#pragma once
// Kernel observables f(eta) = sign * exp(-sum_{x in eta} g(x)), their space
// averages F_n = int_{[-n,n]^d} f(theta_x eta) dx, add-one gradients and the
// gradient constants beta = int |1 - e^{-g}| and alpha_n^2 = beta^2 |Lambda_n|.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "gibbslab/geometry.hpp"

namespace gibbslab {

/// Non-negative bounded g supported in the sup-norm box [-r, r]^d.
class Kernel {
 public:
  using Fn = std::function<double(const Point&)>;

  Kernel(Fn g, double support_radius, int sign, int dim, std::string id = "custom")
      : g_(std::move(g)), radius_(support_radius), sign_(sign), dim_(dim), id_(std::move(id)) {
    if (!(support_radius > 0.0)) throw std::invalid_argument("Kernel: support radius must be positive");
    if (sign != 1 && sign != -1) throw std::invalid_argument("Kernel: sign must be +1 or -1");
    if (dim < 1 || dim > 3) throw std::invalid_argument("Kernel: dim must be 1, 2 or 3");
  }

  /// g(x) = a * max(0, 1 - |x| / r), Euclidean norm.
  static Kernel tent(double amplitude, double radius, int sign, int dim) {
    if (!(amplitude >= 0.0)) throw std::invalid_argument("tent kernel: amplitude must be >= 0");
    auto g = [amplitude, radius](const Point& x) {
      const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
      return r < radius ? amplitude * (1.0 - r / radius) : 0.0;
    };
    return Kernel(g, radius, sign, dim, "tent");
  }

  /// g = a on the cube [-h, h]^d, zero outside.
  static Kernel box(double amplitude, double half_width, int sign, int dim) {
    if (!(amplitude >= 0.0)) throw std::invalid_argument("box kernel: amplitude must be >= 0");
    auto g = [amplitude, half_width, dim](const Point& x) {
      for (int k = 0; k < dim; ++k)
        if (!(std::abs(x[k]) < half_width)) return 0.0;
      return amplitude;
    };
    return Kernel(g, half_width, sign, dim, "box");
  }

  double operator()(const Point& x) const {
    for (int k = 0; k < dim_; ++k)
      if (std::abs(x[k]) > radius_) return 0.0;
    const double v = g_(x);
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::domain_error("Kernel: g must be finite and non-negative");
    return v;
  }

  double support_radius() const { return radius_; }
  /// Euclidean radius of the support box, for neighbour queries.
  double query_radius() const { return radius_ * std::sqrt(static_cast<double>(dim_)); }
  int sign() const { return sign_; }
  int dim() const { return dim_; }
  const std::string& id() const { return id_; }

  Kernel with_sign(int s) const {
    Kernel k = *this;
    if (s != 1 && s != -1) throw std::invalid_argument("Kernel: sign must be +1 or -1");
    k.sign_ = s;
    return k;
  }

 private:
  Fn g_;
  double radius_;
  int sign_;
  int dim_;
  std::string id_;
};

/// sum_{p in eta} g(p - x), torus displacement under periodic windows.
inline double kernel_sum_at(const Kernel& k, const PointConfiguration& config, const Point& x) {
  double s = 0.0;
  config.for_each_within(x, k.query_radius(), [&](std::size_t, const Point& d, double) { s += k(d); });
  return s;
}

/// f(theta_x eta).
inline double eval_f_at(const Kernel& k, const PointConfiguration& config, const Point& x) {
  return static_cast<double>(k.sign()) * std::exp(-kernel_sum_at(k, config, x));
}

inline double eval_f(const Kernel& k, const PointConfiguration& config) {
  return eval_f_at(k, config, Point{0.0, 0.0, 0.0});
}

/// D_x F = F(eta + x) - F(eta) for an arbitrary configuration functional.
template <class F>
double discrete_gradient(F&& functional, const Point& x, const PointConfiguration& config) {
  PointConfiguration plus = config;
  plus.insert(x);
  return functional(plus) - functional(config);
}

/// Midpoint lattice over [-n, n]^d with spacing close to (and not above) delta.
struct MidpointGrid {
  double half_side;
  int dim;
  std::int64_t per_axis;
  double spacing;

  MidpointGrid(double n, double delta, int d) : half_side(n), dim(d) {
    per_axis = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(2.0 * n / delta - 1e-9)));
    spacing = 2.0 * n / static_cast<double>(per_axis);
  }

  double cell_volume() const { return std::pow(spacing, dim); }
  std::int64_t size() const {
    std::int64_t s = 1;
    for (int k = 0; k < dim; ++k) s *= per_axis;
    return s;
  }
  double coord(std::int64_t i) const { return -half_side + (static_cast<double>(i) + 0.5) * spacing; }

  template <class Fn>
  void for_each(Fn&& fn) const {
    Point x{0.0, 0.0, 0.0};
    const std::int64_t m1 = dim > 1 ? per_axis : 1, m2 = dim > 2 ? per_axis : 1;
    for (std::int64_t a = 0; a < per_axis; ++a) {
      x[0] = coord(a);
      for (std::int64_t b = 0; b < m1; ++b) {
        if (dim > 1) x[1] = coord(b);
        for (std::int64_t c = 0; c < m2; ++c) {
          if (dim > 2) x[2] = coord(c);
          fn(x);
        }
      }
    }
  }
};

struct SpaceAverageSpec {
  Kernel kernel;
  double n = 1.0;             ///< averaging window [-n, n]^d
  double quad_spacing = 0.0;  ///< translation quadrature step; 0 selects r / 16

  SpaceAverageSpec(Kernel k, double half, double delta = 0.0)
      : kernel(std::move(k)), n(half), quad_spacing(delta > 0.0 ? delta : kernel.support_radius() / 16.0) {
    if (!(n > 0.0)) throw std::invalid_argument("SpaceAverageSpec: n must be positive");
    if (n < kernel.support_radius()) throw std::invalid_argument("SpaceAverageSpec: requires n >= kernel radius");
    if (quad_spacing > kernel.support_radius() / 8.0 * (1.0 + 1e-12))
      throw std::invalid_argument("SpaceAverageSpec: quad_spacing must be <= r / 8");
  }

  MidpointGrid grid() const { return MidpointGrid(n, quad_spacing, kernel.dim()); }
  double volume() const { return std::pow(2.0 * n, kernel.dim()); }
};

inline void check_space_average_window(const SpaceAverageSpec& spec, const PointConfiguration& config) {
  const Window& w = config.window();
  if (!w.periodic()) throw std::invalid_argument("space_average: requires a periodic window");
  if (w.dim() != spec.kernel.dim()) throw std::invalid_argument("space_average: kernel/window dimension mismatch");
  if (w.half_side() < spec.n + spec.kernel.support_radius() - 1e-12)
    throw std::invalid_argument("space_average: window half_side must be >= n + r");
}

/// F_n(eta) by the midpoint rule.
inline double space_average(const SpaceAverageSpec& spec, const PointConfiguration& config) {
  check_space_average_window(spec, config);
  const MidpointGrid grid = spec.grid();
  double s = 0.0;
  grid.for_each([&](const Point& x) { s += eval_f_at(spec.kernel, config, x); });
  return s * grid.cell_volume();
}

/// D_z F_n(eta) on the same quadrature grid as space_average; only grid points
/// whose kernel window contains z change, so only those are re-evaluated.
inline double space_average_gradient(const SpaceAverageSpec& spec, const PointConfiguration& config, const Point& z) {
  check_space_average_window(spec, config);
  const MidpointGrid grid = spec.grid();
  const Window& w = config.window();
  const double r = spec.kernel.support_radius();
  const int d = w.dim();
  std::int64_t lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int k = 0; k < d; ++k) {
    lo[k] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((z[k] - r + grid.half_side) / grid.spacing - 0.5)));
    hi[k] = std::min<std::int64_t>(grid.per_axis - 1,
                                   static_cast<std::int64_t>(std::ceil((z[k] + r + grid.half_side) / grid.spacing - 0.5)));
  }
  // With a torus the shifted point can also reach the grid through the wrap;
  // scan the full axis in that case.
  for (int k = 0; k < d; ++k) {
    const double L = w.side();
    if (std::abs(z[k]) + r + grid.half_side > L - 1e-12) {
      lo[k] = 0;
      hi[k] = grid.per_axis - 1;
    }
  }
  double diff = 0.0;
  Point x{0.0, 0.0, 0.0};
  for (std::int64_t a = lo[0]; a <= hi[0]; ++a) {
    x[0] = grid.coord(a);
    for (std::int64_t b = lo[1]; b <= (d > 1 ? hi[1] : 0); ++b) {
      if (d > 1) x[1] = grid.coord(b);
      for (std::int64_t c = lo[2]; c <= (d > 2 ? hi[2] : 0); ++c) {
        if (d > 2) x[2] = grid.coord(c);
        const double gz = spec.kernel(w.displacement(x, z));
        if (gz == 0.0) continue;
        const double base = kernel_sum_at(spec.kernel, config, x);
        diff += static_cast<double>(spec.kernel.sign()) * (std::exp(-(base + gz)) - std::exp(-base));
      }
    }
  }
  return diff * grid.cell_volume();
}

/// |(D_x f)(omega)| maximised over omega: |1 - e^{-g(x)}| since |f| <= 1.
inline double psi_envelope(const Kernel& k, const Point& x) { return std::abs(1.0 - std::exp(-k(x))); }

/// int |1 - e^{-g(x)}| dx by the midpoint rule over [-r, r]^d.
inline double beta_constant(const Kernel& k, double quad_spacing = 0.0) {
  const double delta = quad_spacing > 0.0 ? quad_spacing : k.support_radius() / 64.0;
  const MidpointGrid grid(k.support_radius(), delta, k.dim());
  double s = 0.0;
  grid.for_each([&](const Point& x) { s += psi_envelope(k, x); });
  return s * grid.cell_volume();
}

struct GradientConstants {
  double beta = 0.0;
  double alpha_sq_n = 0.0;
};

/// beta^2 (2n)^d.
inline double alpha_sq(double beta, double n, int dim) {
  if (!(n > 0.0)) throw std::invalid_argument("alpha_sq: n must be positive");
  return beta * beta * std::pow(2.0 * n, dim);
}

inline GradientConstants gradient_constants(const Kernel& k, double n, double quad_spacing = 0.0) {
  const double beta = beta_constant(k, quad_spacing);
  return {beta, alpha_sq(beta, n, k.dim())};
}

}  // namespace gibbslab
