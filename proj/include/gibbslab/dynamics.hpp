#pragma once
// Samplers and birth-and-death dynamics.
//
//  * sample_poisson      - Poisson process of given intensity in a window
//  * BirthDeathChain     - exact continuous-time birth/death chain (thinning)
//  * mh_steps / run_mh   - discrete-time Metropolis birth/death chain
//  * GibbsSampler        - finite-volume Gibbs sampler, periodic or with a
//                          fixed outside configuration
//
// Every chain consumes randomness only from the Rng passed in, so a fixed
// (seed, stream) pair reproduces a run exactly.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "gibbslab/geometry.hpp"
#include "gibbslab/interactions.hpp"

namespace gibbslab {

using Rng = std::mt19937_64;

struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

inline Rng make_rng(RngSeed s) {
  std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                    static_cast<std::uint32_t>(s.stream), static_cast<std::uint32_t>(s.stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Point uniform_point(const Window& w, Rng& rng) {
  Point p{0.0, 0.0, 0.0};
  std::uniform_real_distribution<double> u(-w.half_side(), w.half_side());
  for (int k = 0; k < w.dim(); ++k) p[k] = u(rng);
  return p;
}

/// Inserts a fresh uniform point, redrawing on the (probability zero) exact collision.
inline std::size_t insert_uniform(PointConfiguration& c, Rng& rng) {
  for (;;) {
    if (auto i = c.try_insert(uniform_point(c.window(), rng))) return *i;
  }
}

/// Grid cell size matching an interaction's range (unit cells for H == 0).
inline double cell_size_for(const Interaction& interaction) {
  return interaction.range() > 0.0 ? interaction.range() : 1.0;
}

inline PointConfiguration sample_poisson(const Window& w, double intensity, Rng& rng, double cell_size = 1.0) {
  if (!(intensity > 0.0)) throw std::invalid_argument("sample_poisson: intensity must be positive");
  PointConfiguration c(w, cell_size);
  const auto n = std::poisson_distribution<std::int64_t>(intensity * w.volume())(rng);
  for (std::int64_t i = 0; i < n; ++i) insert_uniform(c, rng);
  return c;
}

enum class EventKind { birth, death };

struct TrajectoryEvent {
  double time = 0.0;
  EventKind kind = EventKind::birth;
  Point location{};
};

struct Trajectory {
  PointConfiguration initial;
  std::vector<TrajectoryEvent> events;
  double t_end = 0.0;

  /// Configuration at time t (events at exactly t are applied).
  PointConfiguration state_at(double t) const {
    PointConfiguration c = initial;
    for (const auto& e : events) {
      if (e.time > t) break;
      apply(c, e);
    }
    return c;
  }

  /// Times strictly increasing, within [0, t_end], deaths hit live points.
  bool valid() const {
    PointConfiguration c = initial;
    double last = -1.0;
    for (const auto& e : events) {
      if (!(e.time > last) || e.time > t_end || e.time < 0.0) return false;
      last = e.time;
      try {
        apply(c, e);
      } catch (const std::exception&) {
        return false;
      }
    }
    return true;
  }

  /// One JSON object per line: {"t":..., "kind":"birth"|"death", "x":[...]}.
  void write_jsonl(std::ostream& os) const {
    const int d = initial.dim();
    os << std::setprecision(17);
    for (const auto& e : events) {
      os << "{\"t\":" << e.time << ",\"kind\":\"" << (e.kind == EventKind::birth ? "birth" : "death") << "\",\"x\":[";
      for (int k = 0; k < d; ++k) os << (k ? "," : "") << e.location[k];
      os << "]}\n";
    }
  }

  static void apply(PointConfiguration& c, const TrajectoryEvent& e) {
    if (e.kind == EventKind::birth) {
      c.insert(e.location);
      return;
    }
    std::optional<std::size_t> hit;
    c.for_each_within(e.location, 0.0, [&](std::size_t i, const Point&, double) {
      if (c[i] == e.location) hit = i;
    });
    if (!hit) throw std::logic_error("trajectory: death of a point that does not exist");
    c.erase(*hit);
  }
};

/// Continuous-time birth/death chain with generator
///   (L F)(eta) = int b(x, eta) D_x F dx + sum_{x in eta} (F(eta - x) - F(eta)),
/// simulated exactly by thinning candidate births at the global rate bound.
class BirthDeathChain {
 public:
  BirthDeathChain(PointConfiguration initial, Interaction interaction, double t0 = 0.0)
      : state_(std::move(initial)), interaction_(std::move(interaction)), time_(t0) {
    rate_bound_ = interaction_.birth_rate_upper_bound();
    if (!std::isfinite(rate_bound_))
      throw std::invalid_argument("birth-death chain needs a finite birth-rate bound; use run_mh instead");
    interaction_.check_window(state_.window());
  }

  const PointConfiguration& state() const { return state_; }
  double time() const { return time_; }

  /// Runs until `t`; on_event(const TrajectoryEvent&) is called for each accepted event.
  template <class OnEvent>
  void advance_to(double t, Rng& rng, OnEvent&& on_event) {
    const double birth_total = rate_bound_ * state_.window().volume();
    std::exponential_distribution<double> unit_exp(1.0);
    while (true) {
      const double total = birth_total + static_cast<double>(state_.size());
      const double dt = unit_exp(rng) / total;
      if (time_ + dt > t) {
        time_ = t;
        return;
      }
      time_ += dt;
      if (uniform01(rng) * total < birth_total) {
        const Point x = uniform_point(state_.window(), rng);
        const double b = interaction_.birth_rate(x, state_);
        if (uniform01(rng) * rate_bound_ < b) {
          if (!state_.try_insert(x)) continue;
          on_event(TrajectoryEvent{time_, EventKind::birth, x});
        }
      } else {
        const auto i = std::uniform_int_distribution<std::size_t>(0, state_.size() - 1)(rng);
        const Point x = state_[i];
        state_.erase(i);
        on_event(TrajectoryEvent{time_, EventKind::death, x});
      }
    }
  }

  void advance_to(double t, Rng& rng) {
    advance_to(t, rng, [](const TrajectoryEvent&) {});
  }

 private:
  PointConfiguration state_;
  Interaction interaction_;
  double time_;
  double rate_bound_;
};

inline Trajectory run_ctmc(const PointConfiguration& initial, const Interaction& interaction, double t_max, Rng& rng) {
  if (!(t_max >= 0.0)) throw std::invalid_argument("run_ctmc: t_max must be >= 0");
  Trajectory traj{initial, {}, t_max};
  BirthDeathChain chain(initial, interaction);
  chain.advance_to(t_max, rng, [&](const TrajectoryEvent& e) { traj.events.push_back(e); });
  return traj;
}

/// Acceptance probability of adding a point to a configuration of n points.
inline double mh_birth_acceptance(double volume, double birth_rate, std::size_t n) {
  return std::min(1.0, volume * birth_rate / static_cast<double>(n + 1));
}

/// Acceptance probability of removing one of n points whose birth rate in the
/// remaining configuration is `birth_rate`.
inline double mh_death_acceptance(double volume, double birth_rate, std::size_t n) {
  if (birth_rate <= 0.0) return 1.0;
  return std::min(1.0, static_cast<double>(n) / (volume * birth_rate));
}

struct MhStats {
  std::size_t births_proposed = 0;
  std::size_t births_accepted = 0;
  std::size_t deaths_proposed = 0;
  std::size_t deaths_accepted = 0;
};

/// n_steps Metropolis birth/death proposals on `state`, targeting density
/// exp(-H) with respect to the intensity-one Poisson process.
inline MhStats mh_steps(PointConfiguration& state, const Interaction& interaction, std::size_t n_steps, Rng& rng,
                        const PointConfiguration* boundary = nullptr) {
  MhStats st;
  const double vol = state.window().volume();
  for (std::size_t s = 0; s < n_steps; ++s) {
    if (uniform01(rng) < 0.5) {
      ++st.births_proposed;
      const Point x = uniform_point(state.window(), rng);
      const double b = interaction.birth_rate(x, state, boundary);
      if (uniform01(rng) < mh_birth_acceptance(vol, b, state.size())) {
        if (state.try_insert(x)) ++st.births_accepted;
      }
    } else {
      ++st.deaths_proposed;
      if (state.empty()) continue;
      const auto i = std::uniform_int_distribution<std::size_t>(0, state.size() - 1)(rng);
      const double b = interaction.birth_rate(state[i], state, boundary, i);
      if (uniform01(rng) < mh_death_acceptance(vol, b, state.size())) {
        state.erase(i);
        ++st.deaths_accepted;
      }
    }
  }
  return st;
}

inline PointConfiguration run_mh(PointConfiguration initial, const Interaction& interaction, std::size_t n_steps,
                                 Rng& rng) {
  interaction.check_window(initial.window());
  mh_steps(initial, interaction, n_steps, rng);
  return initial;
}

/// Outside configuration for finite-volume Gibbs sampling.  Periodic means no
/// outside points and torus distances; otherwise a fixed set of points lying
/// outside the (free-boundary) window but within interaction range of it.
class BoundaryCondition {
 public:
  static BoundaryCondition periodic() { return BoundaryCondition(); }
  static BoundaryCondition fixed(std::vector<Point> points) {
    BoundaryCondition b;
    b.fixed_ = true;
    b.points_ = std::move(points);
    return b;
  }

  bool is_periodic() const { return !fixed_; }
  const std::vector<Point>& points() const { return points_; }

 private:
  bool fixed_ = false;
  std::vector<Point> points_;
};

/// Distance from p to the cube [-n, n]^d (0 inside).
inline double distance_to_window(const Window& w, const Point& p) {
  double s = 0.0;
  for (int k = 0; k < w.dim(); ++k) {
    const double e = std::max(0.0, std::abs(p[k]) - w.half_side());
    s += e * e;
  }
  return std::sqrt(s);
}

/// Chain targeting the finite-volume Gibbs law G_{window, boundary}.  The first
/// draw runs `burn_in` Metropolis steps, each later draw `gap` more steps.
class GibbsSampler {
 public:
  GibbsSampler(const Window& window, Interaction interaction, const BoundaryCondition& boundary,
               std::size_t burn_in = 100000, std::size_t gap = 1000)
      : interaction_(std::move(interaction)),
        state_(window, cell_size_for(interaction_)),
        burn_in_(burn_in),
        gap_(gap) {
    interaction_.check_window(window);
    if (boundary.is_periodic() != window.periodic())
      throw std::invalid_argument("sample_gibbs: periodic boundary needs a periodic window and vice versa");
    if (!boundary.is_periodic()) {
      const double r = interaction_.range();
      const double reach = r > 0.0 ? r : 1.0;
      boundary_.emplace(Window(window.half_side() + reach * (1.0 + 1e-9), window.dim(), Boundary::free),
                        cell_size_for(interaction_));
      for (const auto& p : boundary.points()) {
        if (window.contains(p)) throw std::invalid_argument("sample_gibbs: boundary point inside the sampling window");
        if (distance_to_window(window, p) > reach)
          throw std::invalid_argument("sample_gibbs: boundary point beyond interaction range of the window");
        boundary_->insert(p);
      }
    }
  }

  const PointConfiguration& state() const { return state_; }
  const PointConfiguration* boundary() const { return boundary_ ? &*boundary_ : nullptr; }
  const MhStats& stats() const { return stats_; }

  PointConfiguration operator()(Rng& rng) {
    const std::size_t steps = burned_ ? gap_ : burn_in_;
    burned_ = true;
    const MhStats s = mh_steps(state_, interaction_, steps, rng, boundary());
    stats_.births_proposed += s.births_proposed;
    stats_.births_accepted += s.births_accepted;
    stats_.deaths_proposed += s.deaths_proposed;
    stats_.deaths_accepted += s.deaths_accepted;
    return state_;
  }

 private:
  Interaction interaction_;
  PointConfiguration state_;
  std::optional<PointConfiguration> boundary_;
  std::size_t burn_in_;
  std::size_t gap_;
  bool burned_ = false;
  MhStats stats_;
};

inline PointConfiguration sample_gibbs(const Window& window, const Interaction& interaction,
                                       const BoundaryCondition& boundary, std::size_t burn_in_steps, Rng& rng) {
  GibbsSampler s(window, interaction, boundary, burn_in_steps);
  return s(rng);
}

/// b(x, eta) e^{-H(eta)} - e^{-H(eta + x)}; zero by convention when both vanish.
inline double detailed_balance_residual(const Interaction& interaction, const PointConfiguration& config,
                                        const Point& x) {
  const double b = interaction.birth_rate(x, config);
  const double h0 = interaction.total_energy(config);
  PointConfiguration plus = config;
  plus.insert(x);
  const double h1 = interaction.total_energy(plus);
  if (h1 == kInfinity && b == 0.0) return 0.0;
  return b * std::exp(-h0) - std::exp(-h1);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers.  fn must only touch
/// per-index state; results are therefore independent of the thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace gibbslab
