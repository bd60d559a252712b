#pragma once
// Windows, point configurations and fixed-radius neighbour search.
//
// A PointConfiguration is a finite simple point set inside a cubic window
// [-n, n]^d.  Points are bucketed in a uniform cell grid whose cell width is
// at least the interaction range given at construction, so a query of radius
// r <= range only touches the 3^d cells around the query point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gibbslab {

/// Coordinates are stored in three slots; slots beyond the window dimension are zero.
using Point = std::array<double, 3>;

enum class Boundary { periodic, free };

inline const char* to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "free"; }

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "free") return Boundary::free;
  throw std::invalid_argument("unknown boundary '" + s + "' (expected periodic|free)");
}

/// The cube [-half_side, half_side]^dim.
class Window {
 public:
  Window(double half_side, int dim, Boundary boundary = Boundary::periodic)
      : half_side_(half_side), dim_(dim), boundary_(boundary) {
    if (!(half_side > 0.0) || !std::isfinite(half_side))
      throw std::invalid_argument("Window: half_side must be positive and finite");
    if (dim < 1 || dim > 3) throw std::invalid_argument("Window: dim must be 1, 2 or 3");
  }

  double half_side() const { return half_side_; }
  double side() const { return 2.0 * half_side_; }
  int dim() const { return dim_; }
  Boundary boundary() const { return boundary_; }
  bool periodic() const { return boundary_ == Boundary::periodic; }
  double volume() const { return std::pow(side(), dim_); }

  /// Half-open in every coordinate: [-n, n).
  bool contains(const Point& p) const {
    for (int k = 0; k < dim_; ++k)
      if (!(p[k] >= -half_side_ && p[k] < half_side_)) return false;
    return true;
  }

  /// Maps a coordinate back into [-n, n) along every axis (periodic windows only).
  Point wrap(Point p) const {
    for (int k = 0; k < dim_; ++k) p[k] = wrap_coord(p[k]);
    return p;
  }

  double wrap_coord(double c) const {
    const double L = side();
    double w = c - L * std::floor((c + half_side_) / L);
    if (w >= half_side_) w -= L;  // rounding at the upper edge
    if (w < -half_side_) w = -half_side_;
    return w;
  }

  /// b - a under the window metric (minimal image when periodic).
  Point displacement(const Point& a, const Point& b) const {
    Point d{0.0, 0.0, 0.0};
    const double L = side();
    for (int k = 0; k < dim_; ++k) {
      double v = b[k] - a[k];
      if (periodic()) v -= L * std::round(v / L);
      d[k] = v;
    }
    return d;
  }

  double distance_sq(const Point& a, const Point& b) const {
    const Point d = displacement(a, b);
    return d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  }

  double distance(const Point& a, const Point& b) const { return std::sqrt(distance_sq(a, b)); }

  bool operator==(const Window&) const = default;

 private:
  double half_side_;
  int dim_;
  Boundary boundary_;
};

/// Axis-aligned box [lower, upper) in plain window coordinates.
struct Box {
  Point lower{};
  Point upper{};
};

/// Closed ball under the window metric.
struct Ball {
  Point center{};
  double radius = 0.0;
};

class Region {
 public:
  Region(Box b) : shape_(b) {}    // NOLINT(google-explicit-constructor)
  Region(Ball b) : shape_(b) {}   // NOLINT(google-explicit-constructor)

  const std::variant<Box, Ball>& shape() const { return shape_; }

  bool valid(int dim) const {
    if (const auto* b = std::get_if<Box>(&shape_)) {
      for (int k = 0; k < dim; ++k)
        if (!(b->upper[k] > b->lower[k])) return false;
      return true;
    }
    return std::get<Ball>(shape_).radius > 0.0;
  }

  bool contains(const Window& w, const Point& p) const {
    if (const auto* b = std::get_if<Box>(&shape_)) {
      for (int k = 0; k < w.dim(); ++k)
        if (!(p[k] >= b->lower[k] && p[k] < b->upper[k])) return false;
      return true;
    }
    const auto& ball = std::get<Ball>(shape_);
    return w.distance_sq(ball.center, p) <= ball.radius * ball.radius;
  }

  bool inside_window(const Window& w) const {
    const double n = w.half_side();
    if (const auto* b = std::get_if<Box>(&shape_)) {
      for (int k = 0; k < w.dim(); ++k)
        if (b->lower[k] < -n || b->upper[k] > n) return false;
      return true;
    }
    const auto& ball = std::get<Ball>(shape_);
    for (int k = 0; k < w.dim(); ++k)
      if (ball.center[k] - ball.radius < -n || ball.center[k] + ball.radius > n) return false;
    return true;
  }

  double volume(int dim) const {
    if (const auto* b = std::get_if<Box>(&shape_)) {
      double v = 1.0;
      for (int k = 0; k < dim; ++k) v *= b->upper[k] - b->lower[k];
      return v;
    }
    const double r = std::get<Ball>(shape_).radius;
    constexpr double pi = 3.14159265358979323846;
    switch (dim) {
      case 1: return 2.0 * r;
      case 2: return pi * r * r;
      default: return 4.0 / 3.0 * pi * r * r * r;
    }
  }

 private:
  std::variant<Box, Ball> shape_;
};

/// Finite simple point configuration with a cell-grid index.
class PointConfiguration {
 public:
  explicit PointConfiguration(Window window, double cell_size = 1.0) : window_(window) {
    if (!(cell_size > 0.0)) throw std::invalid_argument("PointConfiguration: cell_size must be positive");
    cells_per_axis_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(window_.side() / cell_size)));
    cell_width_ = window_.side() / static_cast<double>(cells_per_axis_);
    std::size_t n_cells = 1;
    for (int k = 0; k < window_.dim(); ++k) n_cells *= static_cast<std::size_t>(cells_per_axis_);
    buckets_.resize(n_cells);
  }

  const Window& window() const { return window_; }
  int dim() const { return window_.dim(); }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Point>& points() const { return points_; }
  double cell_width() const { return cell_width_; }
  std::int64_t cells_per_axis() const { return cells_per_axis_; }

  /// Inserts p; returns nullopt if a point with identical coordinates exists
  /// (the caller redraws).  Throws if p lies outside the window.
  std::optional<std::size_t> try_insert(const Point& p) {
    Point q = normalized(p);
    if (!window_.contains(q)) throw std::out_of_range("PointConfiguration: point outside window");
    const std::size_t c = cell_of(q);
    for (std::size_t idx : buckets_[c])
      if (points_[idx] == q) return std::nullopt;
    const std::size_t i = points_.size();
    points_.push_back(q);
    cell_.push_back(c);
    slot_.push_back(buckets_[c].size());
    buckets_[c].push_back(i);
    return i;
  }

  std::size_t insert(const Point& p) {
    auto i = try_insert(p);
    if (!i) throw std::invalid_argument("PointConfiguration: duplicate point");
    return *i;
  }

  /// Removes point i; the last point takes index i.
  void erase(std::size_t i) {
    if (i >= points_.size()) throw std::out_of_range("PointConfiguration::erase");
    unlink(i);
    const std::size_t last = points_.size() - 1;
    if (i != last) {
      points_[i] = points_[last];
      cell_[i] = cell_[last];
      slot_[i] = slot_[last];
      buckets_[cell_[i]][slot_[i]] = i;
    }
    points_.pop_back();
    cell_.pop_back();
    slot_.pop_back();
  }

  void clear() {
    points_.clear();
    cell_.clear();
    slot_.clear();
    for (auto& b : buckets_) b.clear();
  }

  /// Calls fn(index, displacement from x, squared distance) for every point
  /// within distance r of x under the window metric.  `skip` excludes one index.
  template <class Fn>
  void for_each_within(const Point& x, double r, Fn&& fn,
                       std::size_t skip = std::numeric_limits<std::size_t>::max()) const {
    if (points_.empty()) return;
    const int d = dim();
    const double r2 = r * r;
    const auto rings = static_cast<std::int64_t>(std::ceil(r / cell_width_));
    std::array<std::int64_t, 3> lo{0, 0, 0}, hi{0, 0, 0};
    std::array<bool, 3> all{false, false, false};
    for (int k = 0; k < d; ++k) {
      const auto c = static_cast<std::int64_t>(std::floor((x[k] + window_.half_side()) / cell_width_));
      lo[k] = c - rings;
      hi[k] = c + rings;
      if (window_.periodic()) {
        if (hi[k] - lo[k] + 1 >= cells_per_axis_) all[k] = true;
      } else {
        lo[k] = std::max<std::int64_t>(lo[k], 0);
        hi[k] = std::min<std::int64_t>(hi[k], cells_per_axis_ - 1);
        if (lo[k] > hi[k]) return;
      }
      if (all[k]) {
        lo[k] = 0;
        hi[k] = cells_per_axis_ - 1;
      }
    }
    const std::int64_t m = cells_per_axis_;
    auto wrapc = [m](std::int64_t c) { return ((c % m) + m) % m; };
    for (std::int64_t a = lo[0]; a <= hi[0]; ++a) {
      for (std::int64_t b = (d > 1 ? lo[1] : 0); b <= (d > 1 ? hi[1] : 0); ++b) {
        for (std::int64_t c = (d > 2 ? lo[2] : 0); c <= (d > 2 ? hi[2] : 0); ++c) {
          std::size_t flat = static_cast<std::size_t>(wrapc(a));
          if (d > 1) flat = flat * static_cast<std::size_t>(m) + static_cast<std::size_t>(wrapc(b));
          if (d > 2) flat = flat * static_cast<std::size_t>(m) + static_cast<std::size_t>(wrapc(c));
          for (std::size_t idx : buckets_[flat]) {
            if (idx == skip) continue;
            const Point disp = window_.displacement(x, points_[idx]);
            const double dist2 = disp[0] * disp[0] + disp[1] * disp[1] + disp[2] * disp[2];
            if (dist2 <= r2) fn(idx, disp, dist2);
          }
        }
      }
    }
  }

  /// Indices of points within distance r of x, in increasing order.
  std::vector<std::size_t> neighbors_within(const Point& x, double r) const {
    std::vector<std::size_t> out;
    for_each_within(x, r, [&](std::size_t i, const Point&, double) { out.push_back(i); });
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t count_in(const Region& region) const {
    if (!region.valid(dim())) throw std::invalid_argument("count_in: invalid region");
    if (const auto* ball = std::get_if<Ball>(&region.shape())) {
      std::size_t n = 0;
      for_each_within(ball->center, ball->radius, [&](std::size_t, const Point&, double) { ++n; });
      return n;
    }
    std::size_t n = 0;
    for (const auto& p : points_)
      if (region.contains(window_, p)) ++n;
    return n;
  }

  /// theta_x: every point p moves to wrap(p - x).  Periodic windows only.
  PointConfiguration translate(const Point& x) const {
    if (!window_.periodic()) throw std::logic_error("translate: requires a periodic window");
    PointConfiguration out(window_, cell_width_);
    for (const auto& p : points_) {
      Point q = p;
      for (int k = 0; k < dim(); ++k) q[k] -= x[k];
      out.insert(window_.wrap(q));
    }
    return out;
  }

  /// Same points, different window/grid (points must lie inside the new window).
  PointConfiguration rebuilt(Window w, double cell_size) const {
    PointConfiguration out(w, cell_size);
    for (const auto& p : points_) out.insert(p);
    return out;
  }

  /// True if the grid buckets partition the index set and every point sits in its cell.
  bool grid_consistent() const {
    std::vector<int> seen(points_.size(), 0);
    for (std::size_t c = 0; c < buckets_.size(); ++c)
      for (std::size_t s = 0; s < buckets_[c].size(); ++s) {
        const std::size_t idx = buckets_[c][s];
        if (idx >= points_.size() || cell_[idx] != c || slot_[idx] != s) return false;
        if (cell_of(points_[idx]) != c) return false;
        ++seen[idx];
      }
    return std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; });
  }

 private:
  Point normalized(Point p) const {
    for (int k = dim(); k < 3; ++k) p[k] = 0.0;
    return p;
  }

  std::size_t cell_of(const Point& p) const {
    std::size_t flat = 0;
    for (int k = 0; k < dim(); ++k) {
      auto c = static_cast<std::int64_t>(std::floor((p[k] + window_.half_side()) / cell_width_));
      c = std::clamp<std::int64_t>(c, 0, cells_per_axis_ - 1);
      flat = flat * static_cast<std::size_t>(cells_per_axis_) + static_cast<std::size_t>(c);
    }
    return flat;
  }

  void unlink(std::size_t i) {
    auto& bucket = buckets_[cell_[i]];
    const std::size_t s = slot_[i];
    const std::size_t moved = bucket.back();
    bucket[s] = moved;
    slot_[moved] = s;
    bucket.pop_back();
  }

  Window window_;
  std::int64_t cells_per_axis_ = 1;
  double cell_width_ = 1.0;
  std::vector<Point> points_;
  std::vector<std::size_t> cell_;
  std::vector<std::size_t> slot_;
  std::vector<std::vector<std::size_t>> buckets_;
};

// Snapshot format: "d n_points half_side boundary", then one point per line.

inline void write_snapshot(std::ostream& os, const PointConfiguration& c) {
  const auto& w = c.window();
  os << std::setprecision(17);
  os << w.dim() << ' ' << c.size() << ' ' << w.half_side() << ' ' << to_string(w.boundary()) << '\n';
  for (const auto& p : c.points()) {
    for (int k = 0; k < w.dim(); ++k) os << (k ? " " : "") << p[k];
    os << '\n';
  }
}

inline PointConfiguration read_snapshot(std::istream& is, double cell_size = 1.0) {
  int d = 0;
  std::size_t n = 0;
  double half = 0.0;
  std::string bnd;
  if (!(is >> d >> n >> half >> bnd)) throw std::runtime_error("snapshot: malformed header");
  PointConfiguration c(Window(half, d, boundary_from_string(bnd)), cell_size);
  for (std::size_t i = 0; i < n; ++i) {
    Point p{0.0, 0.0, 0.0};
    for (int k = 0; k < d; ++k)
      if (!(is >> p[k])) throw std::runtime_error("snapshot: truncated point list");
    c.insert(p);
  }
  return c;
}

}  // namespace gibbslab
