#pragma once
// Goodness-of-fit helpers shared by the statistical tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace gibbslab::testing {

inline double poisson_pmf(double mean, std::size_t k) {
  return std::exp(static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0));
}

/// Chi-square goodness of fit of integer counts against Poisson(mean).
/// Bins are merged from both tails until every expected count is >= 5.
inline double chi_square_poisson_pvalue(const std::vector<std::size_t>& counts, double mean) {
  const double n = static_cast<double>(counts.size());
  std::size_t kmax = 0;
  for (auto c : counts) kmax = std::max(kmax, c);
  kmax = std::max<std::size_t>(kmax, static_cast<std::size_t>(mean * 3 + 10));
  std::vector<double> obs(kmax + 1, 0.0), expct(kmax + 1, 0.0);
  for (auto c : counts) obs[c] += 1.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < kmax; ++k) {
    expct[k] = n * poisson_pmf(mean, k);
    acc += expct[k];
  }
  expct[kmax] = n - acc;  // upper tail
  // merge into bins with expected >= 5
  std::vector<double> eb, ob;
  double e = 0.0, o = 0.0;
  for (std::size_t k = 0; k <= kmax; ++k) {
    e += expct[k];
    o += obs[k];
    if (e >= 5.0) {
      eb.push_back(e);
      ob.push_back(o);
      e = o = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    eb.back() += e;
    ob.back() += o;
  }
  double chi = 0.0;
  for (std::size_t i = 0; i < eb.size(); ++i) chi += (ob[i] - eb[i]) * (ob[i] - eb[i]) / eb[i];
  const auto dof = static_cast<double>(eb.size() - 1);
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), chi));
}

/// Two-sample chi-square homogeneity test on integer counts (bins merged so
/// that each pooled bin holds at least 10 observations).
inline double chi_square_two_sample_pvalue(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::size_t, std::pair<double, double>> h;
  for (auto v : a) h[v].first += 1.0;
  for (auto v : b) h[v].second += 1.0;
  std::vector<std::pair<double, double>> bins;
  std::pair<double, double> cur{0.0, 0.0};
  for (const auto& [k, c] : h) {
    cur.first += c.first;
    cur.second += c.second;
    if (cur.first + cur.second >= 10.0) {
      bins.push_back(cur);
      cur = {0.0, 0.0};
    }
  }
  if (cur.first + cur.second > 0.0) {
    if (bins.empty()) bins.push_back(cur);
    else {
      bins.back().first += cur.first;
      bins.back().second += cur.second;
    }
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double chi = 0.0;
  for (const auto& [x, y] : bins) {
    const double tot = x + y;
    const double ea = tot * na / (na + nb), e2 = tot * nb / (na + nb);
    chi += (x - ea) * (x - ea) / ea + (y - e2) * (y - e2) / e2;
  }
  if (bins.size() < 2) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(bins.size() - 1)), chi));
}

/// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.  Ties are handled
/// by evaluating both empirical CDFs at every distinct value.
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  double d = 0.0;
  for (double v : all) {
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), v) - a.begin()) / a.size();
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), v) - b.begin()) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) p += 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lam * lam);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace gibbslab::testing
