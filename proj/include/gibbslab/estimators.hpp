#pragma once
// Monte Carlo estimators: means, centred log-MGFs, entropy, Dirichlet forms
// (unit rate or birth rate b), MLSI ratio probes, the Herbst majorant and
// GNZ residuals.
//
// Samplers are callables `PointConfiguration(Rng&)`.  Nonlinear statistics get
// bootstrap standard errors (kBootstrapResamples resamples).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gibbslab/dynamics.hpp"
#include "gibbslab/geometry.hpp"
#include "gibbslab/interactions.hpp"

namespace gibbslab {

inline constexpr std::size_t kBootstrapResamples = 200;
inline constexpr double kMgfExponentLimit = 700.0;

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

inline MeanEstimate mean_estimate(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("mean_estimate: needs at least 2 samples");
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n), v.size()};
}

/// Draws n configurations and returns F of each.
template <class Sampler, class F>
std::vector<double> sample_values(Sampler&& sampler, F&& functional, std::size_t n, Rng& rng) {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(functional(sampler(rng)));
  return out;
}

template <class Sampler, class F>
MeanEstimate estimate_mean(Sampler&& sampler, F&& functional, std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("estimate_mean: n_samples must be >= 2");
  const auto v = sample_values(sampler, functional, n_samples, rng);
  return mean_estimate(v);
}

/// Bootstrap standard error of a statistic of one sample vector.
template <class Stat>
double bootstrap_se(std::span<const double> v, Stat&& stat, Rng& rng, std::size_t resamples = kBootstrapResamples) {
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> buf(v.size()), stats;
  stats.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& x : buf) x = v[pick(rng)];
    const double s = stat(std::span<const double>(buf));
    if (std::isfinite(s)) stats.push_back(s);
  }
  if (stats.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return mean_estimate(stats).std_error * std::sqrt(static_cast<double>(stats.size()));
}

/// log mean exp(lambda (F_i - mean F)); NaN when the exponent range exceeds the limit.
inline double centered_log_mgf(std::span<const double> v, double lambda) {
  if (lambda == 0.0) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, lambda * (x - m));
  double s = 0.0;
  for (double x : v) s += std::exp(lambda * (x - m) - top);
  return top + std::log(s / static_cast<double>(v.size()));
}

inline bool mgf_overflows(std::span<const double> v, double lambda) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double dev = 0.0;
  for (double x : v) dev = std::max(dev, std::abs(x - m));
  return std::abs(lambda) * dev > kMgfExponentLimit;
}

struct MgfEstimate {
  std::vector<double> lambda_grid;
  std::vector<double> centered_log_mgf;
  std::vector<double> std_errors;
  std::vector<bool> overflow;
  std::size_t n_samples = 0;
};

/// 0, 0.1, ..., 2.0
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(0.1 * i);
  return g;
}

inline void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("lambda grid must be strictly increasing");
}

inline MgfEstimate log_mgf_from_values(std::span<const double> v, std::span<const double> lambda_grid, Rng& rng) {
  check_grid(lambda_grid);
  if (v.size() < 2) throw std::invalid_argument("log-MGF: needs at least 2 samples");
  MgfEstimate est;
  est.n_samples = v.size();
  est.lambda_grid.assign(lambda_grid.begin(), lambda_grid.end());
  for (double lam : lambda_grid) {
    const bool over = mgf_overflows(v, lam);
    est.overflow.push_back(over);
    if (over) {
      est.centered_log_mgf.push_back(std::numeric_limits<double>::quiet_NaN());
      est.std_errors.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    est.centered_log_mgf.push_back(centered_log_mgf(v, lam));
    est.std_errors.push_back(lam == 0.0 ? 0.0
                                        : bootstrap_se(v, [lam](std::span<const double> s) { return centered_log_mgf(s, lam); }, rng));
  }
  return est;
}

template <class Sampler, class F>
MgfEstimate estimate_log_mgf(Sampler&& sampler, F&& functional, std::span<const double> lambda_grid,
                             std::size_t n_samples, Rng& rng) {
  const auto v = sample_values(sampler, functional, n_samples, rng);
  return log_mgf_from_values(v, lambda_grid, rng);
}

/// Centred Herbst majorant c alpha^2 lambda (e^{beta lambda} - 1) / beta.
inline double herbst_bound(double c_nu, double alpha_sq, double beta, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("herbst_bound: lambda must be >= 0");
  if (beta < 1e-8) return c_nu * alpha_sq * lambda * lambda;
  return c_nu * alpha_sq * lambda * std::expm1(beta * lambda) / beta;
}

inline double phi_xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// mean Phi(F) - Phi(mean F), Phi(x) = x log x.
inline double entropy_from_values(std::span<const double> v) {
  double m = 0.0, mp = 0.0;
  for (double x : v) {
    if (!(x > 0.0)) throw std::domain_error("entropy: F must be positive on every sample (got " + std::to_string(x) + ")");
    m += x;
    mp += phi_xlogx(x);
  }
  const double n = static_cast<double>(v.size());
  return mp / n - phi_xlogx(m / n);
}

template <class Sampler, class F>
MeanEstimate estimate_entropy(Sampler&& sampler, F&& functional, std::size_t n_samples, Rng& rng) {
  const auto v = sample_values(sampler, functional, n_samples, rng);
  const double ent = entropy_from_values(v);
  const double se = bootstrap_se(v, [](std::span<const double> s) { return entropy_from_values(s); }, rng);
  return {ent, se, v.size()};
}

/// A positive configuration functional whose add-one gradient vanishes
/// outside `support`.
struct LocalFunctional {
  std::function<double(const PointConfiguration&)> value;
  Box support;
  std::string id = "F";
};

/// F(eta) = exp(lambda N_A(eta)) with support A.
inline LocalFunctional exp_count_functional(double lambda, const Box& a) {
  LocalFunctional f;
  f.value = [lambda, a](const PointConfiguration& c) { return std::exp(lambda * static_cast<double>(c.count_in(a))); };
  f.support = a;
  f.id = "exp_count(lambda=" + std::to_string(lambda) + ")";
  return f;
}

/// int rate(x, eta) (D_x F)(D_x log F) dx over F's support inflated by
/// `inflate`, midpoint rule with spacing close to quad_spacing.  rate == 1
/// when `interaction` is empty, else b(x, eta).
inline double dirichlet_integrand(const LocalFunctional& f, const PointConfiguration& eta,
                                  const Interaction* interaction, double quad_spacing, double inflate = 0.0) {
  const int d = eta.dim();
  PointConfiguration work = eta;
  const double f0 = f.value(eta);
  if (!(f0 > 0.0)) throw std::domain_error("dirichlet: F must be positive");
  const double log0 = std::log(f0);
  std::int64_t per[3] = {1, 1, 1};
  double h[3] = {1.0, 1.0, 1.0}, lo[3] = {0.0, 0.0, 0.0};
  double cell = 1.0;
  for (int k = 0; k < d; ++k) {
    lo[k] = f.support.lower[k] - inflate;
    const double len = f.support.upper[k] + inflate - lo[k];
    per[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(len / quad_spacing - 1e-9)));
    h[k] = len / static_cast<double>(per[k]);
    cell *= h[k];
  }
  double total = 0.0;
  Point x{0.0, 0.0, 0.0};
  for (std::int64_t a = 0; a < per[0]; ++a) {
    x[0] = lo[0] + (static_cast<double>(a) + 0.5) * h[0];
    for (std::int64_t b = 0; b < per[1]; ++b) {
      if (d > 1) x[1] = lo[1] + (static_cast<double>(b) + 0.5) * h[1];
      for (std::int64_t c = 0; c < per[2]; ++c) {
        if (d > 2) x[2] = lo[2] + (static_cast<double>(c) + 0.5) * h[2];
        Point xw = eta.window().periodic() ? eta.window().wrap(x) : x;
        if (!eta.window().contains(xw)) continue;
        const double rate = interaction ? interaction->birth_rate(xw, eta) : 1.0;
        if (rate == 0.0) continue;
        auto idx = work.try_insert(xw);
        if (!idx) continue;
        const double f1 = f.value(work);
        work.erase(*idx);
        if (!(f1 > 0.0)) throw std::domain_error("dirichlet: F must be positive");
        total += rate * (f1 - f0) * (std::log(f1) - log0);
      }
    }
  }
  return total * cell;
}

template <class Sampler>
MeanEstimate estimate_dirichlet(Sampler&& sampler, const Interaction* interaction, const LocalFunctional& f,
                                double quad_spacing, std::size_t n_samples, Rng& rng, double inflate = 0.0) {
  std::vector<double> v;
  v.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    v.push_back(dirichlet_integrand(f, sampler(rng), interaction, quad_spacing, inflate));
  return mean_estimate(v);
}

struct EntropyReport {
  std::string id;
  double entropy = 0.0;
  double dirichlet = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();  ///< NaN when undefined (0/0)
  double entropy_se = 0.0;
  double dirichlet_se = 0.0;
  double ratio_se = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

/// Ent/Dirichlet for each family member on one shared sample set.  A finite
/// family only certifies lower bounds on the best MLSI constant.
template <class Sampler>
std::vector<EntropyReport> mlsi_ratio_probe(Sampler&& sampler, const Interaction* interaction,
                                            const std::vector<LocalFunctional>& family, double quad_spacing,
                                            std::size_t n_samples, Rng& rng) {
  if (family.empty()) throw std::invalid_argument("mlsi_ratio_probe: empty family");
  std::vector<PointConfiguration> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(sampler(rng));

  std::vector<EntropyReport> out;
  const double n = static_cast<double>(n_samples);
  for (const auto& f : family) {
    std::vector<double> fv(n_samples), dv(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      fv[i] = f.value(samples[i]);
      dv[i] = dirichlet_integrand(f, samples[i], interaction, quad_spacing);
    }
    EntropyReport r;
    r.id = f.id;
    r.entropy = entropy_from_values(fv);
    const auto dm = mean_estimate(dv);
    r.dirichlet = dm.mean;
    r.dirichlet_se = dm.std_error;
    r.entropy_se = bootstrap_se(fv, [](std::span<const double> s) { return entropy_from_values(s); }, rng);
    const bool degenerate = std::all_of(dv.begin(), dv.end(), [](double x) { return x == 0.0; });
    if (!degenerate && r.dirichlet > 0.0) {
      r.defined = true;
      r.ratio = r.entropy / r.dirichlet;
      std::uniform_int_distribution<std::size_t> pick(0, n_samples - 1);
      std::vector<double> ratios;
      std::vector<double> bf(n_samples);
      for (std::size_t b = 0; b < kBootstrapResamples; ++b) {
        double dsum = 0.0;
        for (std::size_t i = 0; i < n_samples; ++i) {
          const std::size_t j = pick(rng);
          bf[i] = fv[j];
          dsum += dv[j];
        }
        if (dsum > 0.0) ratios.push_back(entropy_from_values(bf) / (dsum / n));
      }
      if (ratios.size() >= 2) r.ratio_se = mean_estimate(ratios).std_error * std::sqrt(static_cast<double>(ratios.size()));
    }
    out.push_back(r);
  }
  return out;
}

/// Test function for GNZ checks: u(x, eta) where `skip` names a point of eta
/// to treat as absent (so u(x, eta - x) costs no copy).
struct GnzTestFunction {
  std::function<double(const Point&, const PointConfiguration&, std::size_t skip)> u;
  Box support;  ///< u(x, .) == 0 for x outside
};

/// Per-sample residual sum_{x in eta} u(x, eta - x) - z int b(x, eta) u(x, eta) dx,
/// the integral by `mc_points` uniform points in the support box; z is the
/// activity (1 for the intensity-one reference).
inline double gnz_sample_residual(const GnzTestFunction& t, const PointConfiguration& eta,
                                  const Interaction& interaction, std::size_t mc_points, Rng& rng,
                                  const PointConfiguration* boundary = nullptr, double activity = 1.0) {
  const int d = eta.dim();
  double lhs = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    bool in = true;
    for (int k = 0; k < d; ++k)
      if (!(eta[i][k] >= t.support.lower[k] && eta[i][k] < t.support.upper[k])) in = false;
    if (in) lhs += t.u(eta[i], eta, i);
  }
  double vol = 1.0;
  for (int k = 0; k < d; ++k) vol *= t.support.upper[k] - t.support.lower[k];
  double rhs = 0.0;
  const std::size_t npos = std::numeric_limits<std::size_t>::max();
  for (std::size_t m = 0; m < mc_points; ++m) {
    Point x{0.0, 0.0, 0.0};
    for (int k = 0; k < d; ++k)
      x[k] = std::uniform_real_distribution<double>(t.support.lower[k], t.support.upper[k])(rng);
    const double b = interaction.birth_rate(x, eta, boundary);
    if (b > 0.0) rhs += b * t.u(x, eta, npos);
  }
  return lhs - activity * rhs * vol / static_cast<double>(mc_points);
}

template <class Sampler>
MeanEstimate gnz_residual(Sampler&& sampler, const Interaction& interaction, const GnzTestFunction& t,
                          std::size_t n_samples, Rng& rng, std::size_t mc_points = 64) {
  std::vector<double> v;
  v.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) v.push_back(gnz_sample_residual(t, sampler(rng), interaction, mc_points, rng));
  return mean_estimate(v);
}

}  // namespace gibbslab
