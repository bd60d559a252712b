#pragma once
// Two-boundary-condition experiment for the area interaction: conditioned
// Gibbs sampling in a free window with either no boundary points or a dense
// shell of boundary points, interior density measured in a core at distance
// `core_margin` from the window edge.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gibbslab/dynamics.hpp"
#include "gibbslab/estimators.hpp"

namespace gibbslab {

struct PhaseScanSpec {
  std::vector<double> gammas = {0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0};
  double radius = 1.0;
  int quad_resolution = 16;
  double half_side = 4.0;
  double core_margin = 2.0;    ///< distance of the measured core from the window edge
  double shell_spacing = 0.5;  ///< lattice spacing of the dense boundary shell
  std::size_t replicas = 10;   ///< independent chains per (gamma, boundary)
  std::size_t burn_in = 50000;
  std::size_t gap = 1000;
  std::size_t samples_per_replica = 50;

  void validate() const {
    if (gammas.empty()) throw std::invalid_argument("phase-scan: gammas must be nonempty");
    for (double g : gammas)
      if (g == 0.0 || !std::isfinite(g)) throw std::invalid_argument("phase-scan: gammas must be finite and nonzero");
    if (!(radius > 0.0)) throw std::invalid_argument("phase-scan: radius must be positive");
    if (!(half_side > 0.0)) throw std::invalid_argument("phase-scan: half_side must be positive");
    if (!(core_margin >= 0.0) || !(core_margin < half_side))
      throw std::invalid_argument("phase-scan: need 0 <= core_margin < half_side");
    if (!(shell_spacing > 0.0)) throw std::invalid_argument("phase-scan: shell_spacing must be positive");
    if (replicas < 2) throw std::invalid_argument("phase-scan: needs at least 2 replicas");
    if (samples_per_replica < 1) throw std::invalid_argument("phase-scan: samples_per_replica must be >= 1");
  }

  Window window() const { return Window(half_side, 2, Boundary::free); }
  double core_half_side() const { return half_side - core_margin; }
};

/// Lattice points with spacing `spacing` outside the window and within `reach` of it.
inline std::vector<Point> dense_shell(const Window& w, double reach, double spacing) {
  if (w.dim() != 2) throw std::invalid_argument("dense_shell: planar windows only");
  std::vector<Point> out;
  const double outer = w.half_side() + reach;
  const auto per = static_cast<std::int64_t>(std::floor(2.0 * outer / spacing));
  for (std::int64_t i = 0; i < per; ++i)
    for (std::int64_t j = 0; j < per; ++j) {
      const Point p{-outer + (static_cast<double>(i) + 0.5) * spacing, -outer + (static_cast<double>(j) + 0.5) * spacing,
                    0.0};
      if (!w.contains(p) && distance_to_window(w, p) <= reach) out.push_back(p);
    }
  return out;
}

struct PhaseScanRow {
  double gamma = 0.0;
  std::string boundary;  ///< "empty" or "dense"
  std::size_t replica = 0;
  double density = 0.0;  ///< core density averaged over the replica's samples
  std::uint64_t stream = 0;
};

/// Replica k of the scan (k enumerates gamma, boundary, replica) uses stream
/// seed.stream + k, so results do not depend on `threads`.
inline std::vector<PhaseScanRow> phase_scan(const PhaseScanSpec& spec, RngSeed seed, unsigned threads = 1) {
  spec.validate();
  const Window w = spec.window();
  const std::vector<Point> shell = dense_shell(w, 2.0 * spec.radius, spec.shell_spacing);
  const double c = spec.core_half_side();
  const Box core{{-c, -c, 0.0}, {c, c, 0.0}};
  const double core_area = 4.0 * c * c;
  const std::size_t per_gamma = 2 * spec.replicas;
  std::vector<PhaseScanRow> rows(spec.gammas.size() * per_gamma);
  parallel_for(rows.size(), threads, [&](std::size_t k) {
    const std::size_t gi = k / per_gamma, b = (k % per_gamma) / spec.replicas, r = k % spec.replicas;
    const bool dense = b == 1;
    const std::uint64_t stream = seed.stream + k;
    Rng rng = make_rng({seed.seed, stream});
    GibbsSampler sampler(w, area_interaction(spec.gammas[gi], spec.radius, spec.quad_resolution),
                         BoundaryCondition::fixed(dense ? shell : std::vector<Point>{}), spec.burn_in, spec.gap);
    double sum = 0.0;
    for (std::size_t s = 0; s < spec.samples_per_replica; ++s)
      sum += static_cast<double>(sampler(rng).count_in(core)) / core_area;
    rows[k] = {spec.gammas[gi], dense ? "dense" : "empty", r, sum / static_cast<double>(spec.samples_per_replica), stream};
  });
  return rows;
}

struct PhaseScanSummary {
  double gamma = 0.0;
  MeanEstimate empty;
  MeanEstimate dense;
  double gap = 0.0;     ///< dense - empty
  double gap_se = 0.0;
  bool separated = false;  ///< |gap| > 3 SE
};

inline std::vector<PhaseScanSummary> summarize_phase_scan(const std::vector<PhaseScanRow>& rows) {
  std::vector<PhaseScanSummary> out;
  std::vector<double> gammas;
  for (const auto& r : rows)
    if (std::find(gammas.begin(), gammas.end(), r.gamma) == gammas.end()) gammas.push_back(r.gamma);
  for (double g : gammas) {
    std::vector<double> e, d;
    for (const auto& r : rows)
      if (r.gamma == g) (r.boundary == "dense" ? d : e).push_back(r.density);
    PhaseScanSummary s;
    s.gamma = g;
    s.empty = mean_estimate(e);
    s.dense = mean_estimate(d);
    s.gap = s.dense.mean - s.empty.mean;
    s.gap_se = std::hypot(s.empty.std_error, s.dense.std_error);
    s.separated = std::abs(s.gap) > 3.0 * s.gap_se;
    out.push_back(s);
  }
  return out;
}

}  // namespace gibbslab
