#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gibbslab/dynamics.hpp"
#include "gibbslab/estimators.hpp"
#include "stat_oracles.hpp"

using namespace gibbslab;
using gibbslab::testing::chi_square_poisson_pvalue;
using gibbslab::testing::chi_square_two_sample_pvalue;
using gibbslab::testing::ks_two_sample_pvalue;

namespace {

Box square(double lo, double hi) { return Box{{lo, lo, 0.0}, {hi, hi, 0.0}}; }

std::size_t close_pairs(const PointConfiguration& c, double r) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    c.for_each_within(c[i], r, [&](std::size_t j, const Point&, double) { n += j > i; });
  return n;
}

}  // namespace

TEST(SamplePoisson, MomentsOverManyDraws) {
  Rng rng = make_rng({1, 0});
  const Window w(2.0, 2);
  std::vector<double> counts;
  for (int i = 0; i < 10000; ++i) counts.push_back(static_cast<double>(sample_poisson(w, 1.0, rng).size()));
  const auto m = mean_estimate(counts);
  EXPECT_NEAR(m.mean, 16.0, 3.0 * 4.0 / 100.0);
  const double var = m.std_error * m.std_error * counts.size();
  EXPECT_GE(var / m.mean, 0.94);
  EXPECT_LE(var / m.mean, 1.06);
}

TEST(SamplePoisson, VanishingIntensityGivesEmpty) {
  Rng rng = make_rng({2, 0});
  int empty = 0;
  for (int i = 0; i < 1000; ++i) empty += sample_poisson(Window(2.0, 2), 1e-9, rng).empty();
  EXPECT_EQ(empty, 1000);
  EXPECT_THROW(sample_poisson(Window(1.0, 2), 0.0, rng), std::invalid_argument);
}

TEST(RunCtmc, FreeBirthDeathIsStationaryPoisson) {
  Rng rng = make_rng({3, 0});
  const Window w(2.0, 2);
  BirthDeathChain chain(sample_poisson(w, 1.0, rng), Interaction());
  std::vector<std::size_t> sub;
  for (int i = 1; i <= 3000; ++i) {
    chain.advance_to(5.0 * i, rng);
    sub.push_back(chain.state().count_in(square(-1.0, 1.0)));
  }
  EXPECT_GT(chi_square_poisson_pvalue(sub, 4.0), 0.01);
}

TEST(RunCtmc, TransientMeanFromEmpty) {
  Rng rng = make_rng({4, 0});
  const Window w(2.0, 2);
  const std::vector<double> ts = {0.25, 1.0, 3.0};
  std::vector<std::vector<double>> counts(ts.size());
  for (int r = 0; r < 1000; ++r) {
    BirthDeathChain chain{PointConfiguration(w), Interaction()};
    for (std::size_t k = 0; k < ts.size(); ++k) {
      chain.advance_to(ts[k], rng);
      counts[k].push_back(static_cast<double>(chain.state().size()));
    }
  }
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto m = mean_estimate(counts[k]);
    EXPECT_NEAR(m.mean, 16.0 * (1.0 - std::exp(-ts[k])), 3.0 * m.std_error) << ts[k];
  }
}

TEST(RunCtmc, StrongStraussSuppressesClosePairs) {
  Rng rng = make_rng({5, 0});
  const double R = 0.5;
  const Window w(3.0, 2);
  BirthDeathChain chain(PointConfiguration(w, R), strauss(50.0, R));
  std::size_t pairs = 0, pts = 0;
  for (int i = 1; i <= 200; ++i) {
    chain.advance_to(5.0 * i, rng);
    pairs += close_pairs(chain.state(), R);
    pts += chain.state().size();
  }
  // Poisson reference: rho^2 |W| pi R^2 / 2 close pairs per sample.
  const double rho = static_cast<double>(pts) / (200.0 * w.volume());
  const double poisson_pairs = 200.0 * 0.5 * rho * rho * w.volume() * kPi * R * R;
  EXPECT_GT(poisson_pairs, 100.0);
  EXPECT_LT(static_cast<double>(pairs), 0.05 * poisson_pairs);
}

TEST(RunCtmc, TrajectoryReplayAndDeterminism) {
  const Window w(2.0, 2);
  auto run = [&](RngSeed s) {
    Rng rng = make_rng(s);
    const auto init = sample_poisson(w, 1.0, rng, 1.0);
    return run_ctmc(init, strauss(0.7, 1.0), 10.0, rng);
  };
  const auto a = run({77, 3}), b = run({77, 3}), c = run({77, 4});
  EXPECT_TRUE(a.valid());
  EXPECT_FALSE(a.events.empty());
  std::ostringstream sa, sb, sc;
  a.write_jsonl(sa);
  b.write_jsonl(sb);
  c.write_jsonl(sc);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(sa.str(), sc.str());
  EXPECT_EQ(a.state_at(10.0).size(), a.state_at(1e9).size());

  Trajectory bad = a;
  bad.events.insert(bad.events.begin(), TrajectoryEvent{0.0, EventKind::death, {1.234, 0.5, 0.0}});
  EXPECT_FALSE(bad.valid());
}

TEST(RunCtmc, RejectsUnboundedRate) {
  Rng rng = make_rng({6, 0});
  EXPECT_THROW(run_ctmc(PointConfiguration(Window(2.0, 2)), square_well(0.0, 0.5, 1.0), 1.0, rng),
               std::invalid_argument);
}

TEST(Mh, AcceptanceRatioIdentity) {
  Rng rng = make_rng({7, 0});
  for (int t = 0; t < 1000; ++t) {
    const double vol = 1.0 + 30.0 * uniform01(rng);
    const double b = std::exp(-5.0 * uniform01(rng));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 40)(rng);
    const double ratio = mh_birth_acceptance(vol, b, n) / mh_death_acceptance(vol, b, n + 1);
    EXPECT_NEAR(ratio, vol * b / static_cast<double>(n + 1), 1e-12 * ratio);
  }
  EXPECT_EQ(mh_birth_acceptance(16.0, 0.0, 3), 0.0);
}

TEST(Mh, FreeChainTargetsPoisson) {
  Rng rng = make_rng({8, 0});
  PointConfiguration s(Window(2.0, 2));
  mh_steps(s, Interaction(), 10000, rng);
  std::vector<std::size_t> counts;
  for (int i = 0; i < 3000; ++i) {
    mh_steps(s, Interaction(), 400, rng);
    counts.push_back(s.size());
  }
  EXPECT_GT(chi_square_poisson_pvalue(counts, 16.0), 0.01);
}

TEST(Mh, HardCoreViolationNeverAccepted) {
  Rng rng = make_rng({9, 0});
  const auto hc = square_well(0.4, 0.2, 0.8);
  PointConfiguration s(Window(2.0, 2), 0.8);
  mh_steps(s, hc, 50000, rng);
  EXPECT_GT(s.size(), 5u);
  EXPECT_TRUE(std::isfinite(hc.total_energy(s)));
  for (std::size_t i = 0; i < s.size(); ++i)
    s.for_each_within(s[i], 0.4, [&](std::size_t j, const Point&, double d2) {
      if (j != i) {
        EXPECT_GE(std::sqrt(d2), 0.4);
      }
    });
}

TEST(Mh, AgreesWithCtmcOnStraussCounts) {
  Rng rng = make_rng({10, 0});
  const Window w(2.0, 2);
  const auto s = strauss(0.8, 0.7);
  BirthDeathChain chain(PointConfiguration(w, 0.7), s);
  std::vector<std::size_t> ctmc, mh;
  for (int i = 1; i <= 2000; ++i) {
    chain.advance_to(4.0 * i, rng);
    ctmc.push_back(chain.state().size());
  }
  GibbsSampler g(w, s, BoundaryCondition::periodic(), 20000, 500);
  for (int i = 0; i < 2000; ++i) mh.push_back(g(rng).size());
  EXPECT_GT(chi_square_two_sample_pvalue(ctmc, mh), 0.01);
}

TEST(SampleGibbs, EmptyBoundaryFreeModelIsPoisson) {
  Rng rng = make_rng({11, 0});
  const Window w(1.5, 2, Boundary::free);
  GibbsSampler g(w, Interaction(), BoundaryCondition::fixed({}), 5000, 300);
  std::vector<std::size_t> counts;
  for (int i = 0; i < 3000; ++i) counts.push_back(g(rng).size());
  EXPECT_GT(chi_square_poisson_pvalue(counts, 9.0), 0.01);
}

TEST(SampleGibbs, BoundaryValidation) {
  const Window w(2.0, 2, Boundary::free);
  const auto s = strauss(1.0, 1.0);
  EXPECT_THROW(GibbsSampler(w, s, BoundaryCondition::fixed({{0.0, 0.0, 0.0}})), std::invalid_argument);
  EXPECT_THROW(GibbsSampler(w, s, BoundaryCondition::fixed({{3.5, 0.0, 0.0}})), std::invalid_argument);
  EXPECT_THROW(GibbsSampler(Window(2.0, 2), s, BoundaryCondition::fixed({})), std::invalid_argument);
  EXPECT_THROW(GibbsSampler(w, s, BoundaryCondition::periodic()), std::invalid_argument);
  EXPECT_NO_THROW(GibbsSampler(w, s, BoundaryCondition::fixed({{2.5, 0.0, 0.0}})));
}

TEST(SampleGibbs, RepulsiveBoundaryDepletesEdge) {
  Rng rng = make_rng({12, 0});
  const Window w(1.0, 2, Boundary::free);
  const auto s = strauss(5.0, 0.5);
  std::vector<Point> wall;
  for (int i = 0; i < 40; ++i) wall.push_back({1.05, -1.0 + 0.05 * i, 0.0});
  GibbsSampler with(w, s, BoundaryCondition::fixed(wall), 5000, 200);
  GibbsSampler without(w, s, BoundaryCondition::fixed({}), 5000, 200);
  const Box strip{{0.6, -1.0, 0.0}, {1.0, 1.0, 0.0}};
  double a = 0.0, b = 0.0;
  for (int i = 0; i < 2000; ++i) {
    a += static_cast<double>(with(rng).count_in(strip));
    b += static_cast<double>(without(rng).count_in(strip));
  }
  EXPECT_LT(a, 0.2 * b);
}

TEST(DetailedBalance, ResidualIdentities) {
  Rng rng = make_rng({13, 0});
  const Window w(2.5, 2);
  PointConfiguration c = sample_poisson(w, 1.0, rng, 1.0);
  EXPECT_EQ(detailed_balance_residual(Interaction(), c, uniform_point(w, rng)), 0.0);

  const auto s = strauss(0.3, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto eta = sample_poisson(w, 0.5, rng, 1.0);
    const double r = detailed_balance_residual(s, eta, uniform_point(w, rng));
    EXPECT_LE(std::abs(r), 1e-9 * std::exp(-s.total_energy(eta)));
  }

  const auto hc = square_well(0.5, 0.2, 1.0);
  PointConfiguration one(w, 1.0);
  one.insert({0.0, 0.0, 0.0});
  EXPECT_EQ(detailed_balance_residual(hc, one, {0.1, 0.0, 0.0}), 0.0);

  const auto a = area_interaction(0.2, 0.5, 64);
  for (int t = 0; t < 30; ++t) {
    PointConfiguration eta(w, 1.0);
    for (int i = 0; i < 5; ++i) insert_uniform(eta, rng);
    const double r = detailed_balance_residual(a, eta, uniform_point(w, rng));
    EXPECT_LE(std::abs(r), 1e-3 * std::exp(-a.total_energy(eta)));
  }
}

TEST(Stationarity, CtmcFromGibbsKeepsCountLaw) {
  Rng rng = make_rng({14, 0});
  const Window w(2.0, 2);
  const auto s = strauss(0.8, 0.7);
  GibbsSampler g(w, s, BoundaryCondition::periodic(), 20000, 300);
  std::vector<double> at0, at5;
  for (int r = 0; r < 1000; ++r) {
    const auto init = g(rng);
    at0.push_back(static_cast<double>(init.size()));
    BirthDeathChain chain(init, s);
    chain.advance_to(5.0, rng);
    at5.push_back(static_cast<double>(chain.state().size()));
  }
  EXPECT_GT(ks_two_sample_pvalue(at0, at5), 0.01);
}

TEST(ParallelFor, CoversEveryIndexAndPropagatesErrors) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
