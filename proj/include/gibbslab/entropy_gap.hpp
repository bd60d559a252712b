#pragma once
// Lower bounds on the specific relative entropy between two stationary point
// processes via the Donsker-Varadhan formula:
//
//   (1/|L_n|) I_{L_{n+r}}(mu | nu) >= rho lambda - (1/|L_n|) log nu[exp(lambda (F_n - nu F_n))]
//
// with rho = mu[f] - nu[f] for a separating kernel observable f.  The analytic
// variant replaces the log-MGF by the Herbst majorant, the empirical variant
// estimates it from samples.  Also: the free birth-death relaxation of a
// Poisson(a0) start, whose specific entropy w.r.t. Poisson(1) is explicit.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gibbslab/dynamics.hpp"
#include "gibbslab/estimators.hpp"
#include "gibbslab/observables.hpp"

namespace gibbslab {

struct SeparationResult {
  bool separated = false;
  std::optional<Kernel> kernel;  ///< best kernel with the sign making rho positive
  std::size_t kernel_index = 0;
  double rho = 0.0;
  double std_error = 0.0;
  double mu_mean = 0.0;
  double nu_mean = 0.0;
  double score = 0.0;  ///< rho / SE of the chosen kernel
};

/// Picks the kernel and sign maximising rho / SE given f-values per kernel
/// (evaluated with sign +1); no separation unless some candidate exceeds 3 SE.
inline SeparationResult separation_from_values(const std::vector<Kernel>& family,
                                               const std::vector<std::vector<double>>& mu_f,
                                               const std::vector<std::vector<double>>& nu_f) {
  if (family.empty()) throw std::invalid_argument("separating_observable: empty kernel family");
  if (mu_f.size() != family.size() || nu_f.size() != family.size())
    throw std::invalid_argument("separation_from_values: one value vector per kernel");
  SeparationResult best;
  double best_score = -1.0;
  for (std::size_t k = 0; k < family.size(); ++k) {
    const auto me = mean_estimate(mu_f[k]), ne = mean_estimate(nu_f[k]);
    const double diff = me.mean - ne.mean;
    const double se = std::hypot(me.std_error, ne.std_error);
    const double score = se > 0.0 ? std::abs(diff) / se : (diff != 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (score > best_score) {
      best_score = score;
      const int sign = diff >= 0.0 ? 1 : -1;
      best.kernel = family[k].with_sign(sign);
      best.kernel_index = k;
      best.rho = std::abs(diff);
      best.std_error = se;
      best.mu_mean = sign * me.mean;
      best.nu_mean = sign * ne.mean;
      best.score = score;
    }
  }
  best.separated = best_score > 3.0;
  return best;
}

template <class MuSampler, class NuSampler>
SeparationResult separating_observable(MuSampler&& mu, NuSampler&& nu, const std::vector<Kernel>& family,
                                       std::size_t n_samples, Rng& rng) {
  if (family.empty()) throw std::invalid_argument("separating_observable: empty kernel family");
  std::vector<std::vector<double>> mv(family.size()), nv(family.size());
  auto eval_all = [&](const PointConfiguration& c, std::vector<std::vector<double>>& dst) {
    for (std::size_t k = 0; k < family.size(); ++k) dst[k].push_back(eval_f(family[k].with_sign(1), c));
  };
  for (std::size_t i = 0; i < n_samples; ++i) eval_all(mu(rng), mv);
  for (std::size_t i = 0; i < n_samples; ++i) eval_all(nu(rng), nv);
  return separation_from_values(family, mv, nv);
}

struct AnalyticDvBound {
  double lambda_star = 0.0;
  double bound_value = 0.0;
};

/// phi(lambda) = rho lambda - c beta lambda (e^{beta lambda} - 1).
inline double dv_objective(double rho, double beta, double c_nu, double lambda) {
  return rho * lambda - c_nu * beta * lambda * std::expm1(beta * lambda);
}

inline double dv_objective_derivative(double rho, double beta, double c_nu, double lambda) {
  return rho - c_nu * beta * (std::expm1(beta * lambda) + beta * lambda * std::exp(beta * lambda));
}

/// Maximises the strictly concave phi over lambda > 0.  The derivative is
/// strictly decreasing with phi'(0) = rho > 0, so the maximiser is its unique
/// root; bracket capped at 50 / beta.
inline AnalyticDvBound dv_bound_analytic(double rho, double beta, double c_nu) {
  if (!(rho > 0.0) || !(beta > 0.0) || !(c_nu > 0.0))
    throw std::invalid_argument("dv_bound_analytic: rho, beta and c_nu must be positive");
  const double cap = 50.0 / beta;
  double lo = 0.0, hi = std::min(1.0 / beta, cap);
  while (dv_objective_derivative(rho, beta, c_nu, hi) > 0.0 && hi < cap) hi = std::min(2.0 * hi, cap);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (dv_objective_derivative(rho, beta, c_nu, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double lam = 0.5 * (lo + hi);
  return {lam, dv_objective(rho, beta, c_nu, lam)};
}

enum class DvMode { analytic, empirical };

struct DvBoundReport {
  DvMode mode = DvMode::analytic;
  double rho = 0.0;
  double rho_std_error = 0.0;
  double beta = 0.0;
  double c_nu = 0.0;  ///< 0 when not used (empirical mode)
  double lambda_star = 0.0;
  double bound_value = 0.0;
  double bound_std_error = 0.0;
  std::string kernel_id;
  int kernel_sign = 1;
  double kernel_radius = 0.0;
  double n = 0.0;        ///< averaging half-side
  double n_plus_r = 0.0; ///< half-side of the window the bounded entropy lives on
  std::vector<double> lambda_grid;
  std::vector<double> per_lambda;  ///< empirical DV value at each grid lambda
  std::vector<bool> overflow;
  std::size_t n_samples = 0;
};

inline DvBoundReport dv_report_analytic(double rho, double beta, double c_nu, const SpaceAverageSpec& spec) {
  const auto a = dv_bound_analytic(rho, beta, c_nu);
  DvBoundReport r;
  r.mode = DvMode::analytic;
  r.rho = rho;
  r.beta = beta;
  r.c_nu = c_nu;
  r.lambda_star = a.lambda_star;
  r.bound_value = a.bound_value;
  r.kernel_id = spec.kernel.id();
  r.kernel_sign = spec.kernel.sign();
  r.kernel_radius = spec.kernel.support_radius();
  r.n = spec.n;
  r.n_plus_r = spec.n + spec.kernel.support_radius();
  return r;
}

/// Per-lambda empirical DV values from F_n samples under mu and nu.
inline std::vector<double> dv_profile(std::span<const double> mu_f, std::span<const double> nu_f,
                                      std::span<const double> lambda_grid, double volume) {
  const double mm = std::accumulate(mu_f.begin(), mu_f.end(), 0.0) / static_cast<double>(mu_f.size());
  const double nm = std::accumulate(nu_f.begin(), nu_f.end(), 0.0) / static_cast<double>(nu_f.size());
  std::vector<double> out;
  for (double lam : lambda_grid) {
    if (mgf_overflows(nu_f, lam)) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.push_back((lam * (mm - nm) - centered_log_mgf(nu_f, lam)) / volume);
  }
  return out;
}

inline double max_finite(std::span<const double> v, std::size_t* argmax = nullptr) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i]) && v[i] > best) {
      best = v[i];
      if (argmax) *argmax = i;
    }
  return best;
}

/// Empirical DV bound from precomputed F_n samples (bootstrap over both sample sets).
inline DvBoundReport dv_bound_from_values(std::span<const double> mu_f, std::span<const double> nu_f,
                                          const SpaceAverageSpec& spec, std::span<const double> lambda_grid, Rng& rng) {
  check_grid(lambda_grid);
  DvBoundReport r;
  r.mode = DvMode::empirical;
  r.kernel_id = spec.kernel.id();
  r.kernel_sign = spec.kernel.sign();
  r.kernel_radius = spec.kernel.support_radius();
  r.n = spec.n;
  r.n_plus_r = spec.n + spec.kernel.support_radius();
  r.beta = beta_constant(spec.kernel, spec.quad_spacing / 4.0);
  r.lambda_grid.assign(lambda_grid.begin(), lambda_grid.end());
  r.n_samples = nu_f.size();
  const double vol = spec.volume();
  r.per_lambda = dv_profile(mu_f, nu_f, lambda_grid, vol);
  for (double lam : lambda_grid) r.overflow.push_back(mgf_overflows(nu_f, lam));
  std::size_t arg = 0;
  r.bound_value = max_finite(r.per_lambda, &arg);
  r.lambda_star = lambda_grid[arg];
  const auto me = mean_estimate(mu_f), ne = mean_estimate(nu_f);
  r.rho = (me.mean - ne.mean) / vol;
  r.rho_std_error = std::hypot(me.std_error, ne.std_error) / vol;

  std::uniform_int_distribution<std::size_t> pm(0, mu_f.size() - 1), pn(0, nu_f.size() - 1);
  std::vector<double> bm(mu_f.size()), bn(nu_f.size()), boots;
  for (std::size_t b = 0; b < kBootstrapResamples; ++b) {
    for (auto& x : bm) x = mu_f[pm(rng)];
    for (auto& x : bn) x = nu_f[pn(rng)];
    const double v = max_finite(dv_profile(bm, bn, lambda_grid, vol));
    if (std::isfinite(v)) boots.push_back(v);
  }
  r.bound_std_error = boots.size() >= 2 ? mean_estimate(boots).std_error * std::sqrt(static_cast<double>(boots.size()))
                                        : std::numeric_limits<double>::quiet_NaN();
  return r;
}

template <class MuSampler, class NuSampler>
DvBoundReport dv_bound_empirical(MuSampler&& mu, NuSampler&& nu, const SpaceAverageSpec& spec,
                                 std::span<const double> lambda_grid, std::size_t n_samples, Rng& rng) {
  auto fn = [&spec](const PointConfiguration& c) { return space_average(spec, c); };
  const auto mu_f = sample_values(mu, fn, n_samples, rng);
  const auto nu_f = sample_values(nu, fn, n_samples, rng);
  return dv_bound_from_values(mu_f, nu_f, spec, lambda_grid, rng);
}

struct OuDecayPoint {
  double intensity = 1.0;
  double specific_entropy_rate = 0.0;
};

/// a log a - a + 1: specific relative entropy of Poisson(a) w.r.t. Poisson(1).
inline double poisson_specific_entropy(double a) { return a * std::log(a) - a + 1.0; }

/// Free birth-death dynamics from Poisson(a0): intensity 1 + (a0 - 1) e^{-t}.
inline OuDecayPoint ou_decay_analytic(double a0, double t) {
  if (!(a0 > 0.0)) throw std::invalid_argument("ou_decay_analytic: a0 must be positive");
  const double a = 1.0 + (a0 - 1.0) * std::exp(-t);
  return {a, poisson_specific_entropy(a)};
}

struct OuDecayRow {
  double t = 0.0;
  double density = 0.0;
  double density_se = 0.0;
  double rate_hat = 0.0;  ///< plug-in a log a - a + 1 at the estimated density
  double rate_se = 0.0;   ///< delta method: |log a| * SE(a)
  double rate_analytic = 0.0;
  double envelope = 0.0;  ///< e^{-t} r(0)
};

/// Replica i uses stream seed.stream + i; the result does not depend on `threads`.
inline std::vector<OuDecayRow> ou_decay_empirical(double a0, const Window& window, std::vector<double> t_grid,
                                                  std::size_t n_replicas, RngSeed seed, unsigned threads = 1) {
  if (!(a0 > 0.0)) throw std::invalid_argument("ou_decay_empirical: a0 must be positive");
  if (n_replicas < 2) throw std::invalid_argument("ou_decay_empirical: needs at least 2 replicas");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] < 0.0) throw std::invalid_argument("ou_decay_empirical: times must be >= 0");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("ou_decay_empirical: t grid must be sorted");
  }
  std::vector<std::vector<double>> dens(t_grid.size(), std::vector<double>(n_replicas));
  const Interaction free_dynamics;
  parallel_for(n_replicas, threads, [&](std::size_t i) {
    Rng rng = make_rng({seed.seed, seed.stream + i});
    BirthDeathChain chain(sample_poisson(window, a0, rng), free_dynamics);
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      chain.advance_to(t_grid[k], rng);
      dens[k][i] = static_cast<double>(chain.state().size()) / window.volume();
    }
  });
  std::vector<OuDecayRow> rows;
  const double r0 = poisson_specific_entropy(a0);
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const auto m = mean_estimate(dens[k]);
    OuDecayRow row;
    row.t = t_grid[k];
    row.density = m.mean;
    row.density_se = m.std_error;
    row.rate_hat = m.mean > 0.0 ? poisson_specific_entropy(m.mean) : 1.0;
    row.rate_se = m.mean > 0.0 ? std::abs(std::log(m.mean)) * m.std_error : std::numeric_limits<double>::quiet_NaN();
    row.rate_analytic = ou_decay_analytic(a0, row.t).specific_entropy_rate;
    row.envelope = std::exp(-row.t) * r0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gibbslab
