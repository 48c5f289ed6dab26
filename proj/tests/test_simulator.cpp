#include <gtest/gtest.h>

#include <algorithm>

#include "lawpal/simulator.hpp"

using namespace lawpal;

namespace {

CompartmentalSpec sir(Count n, double beta, double gamma) {
  return {n, ProbVector({0.995, 0.005, 0.0}), Kernel::sir(beta, gamma), {1, 2}};
}

CompartmentalSpec seir_fig1(Count n) {
  return {n, ProbVector({0.99, 0.0, 0.01, 0.0}), Kernel::seir(0.8, 0.1, 0.2), {2, 3}};
}

}  // namespace

TEST(Simulate, ConservationAndFlowConsistency) {
  SeededRng rng(1);
  const auto spec = seir_fig1(5000);
  const auto traj = simulate(spec, TruncNormalReporting{0.5, 0.1}, 80, rng);
  ASSERT_EQ(traj.T(), 80);
  ASSERT_EQ(traj.x.rows(), 81);
  for (int t = 0; t <= 80; ++t) ASSERT_EQ(traj.x.row(t).sum(), 5000);
  for (int t = 1; t <= 80; ++t) {
    const auto& Z = traj.Z[static_cast<std::size_t>(t - 1)];
    ASSERT_EQ(Z.rowwise().sum().transpose(), traj.x.row(t - 1));
    ASSERT_EQ(Z.colwise().sum(), traj.x.row(t));
    ASSERT_GE(traj.y[static_cast<std::size_t>(t - 1)], 0);
    ASSERT_LE(traj.y[static_cast<std::size_t>(t - 1)], Z(1, 2));
    ASSERT_GE(traj.q[static_cast<std::size_t>(t - 1)], 0.0);
    ASSERT_LE(traj.q[static_cast<std::size_t>(t - 1)], 1.0);
  }
}

TEST(Simulate, NoTransmission) {
  SeededRng rng(2);
  const auto traj = simulate(sir(10000, 0.0, 0.1), TruncNormalReporting{0.5, 0.1}, 30, rng);
  for (int t = 1; t <= 30; ++t) EXPECT_EQ(traj.x(t, 0), traj.x(0, 0));
  for (Count y : traj.y) EXPECT_EQ(y, 0);
}

TEST(Simulate, FullReportingObservesFlow) {
  SeededRng rng(3);
  const auto traj = simulate(sir(20000, 0.4, 0.1), FixedReporting{1.0}, 40, rng);
  for (int t = 1; t <= 40; ++t) EXPECT_EQ(traj.y[static_cast<std::size_t>(t - 1)], traj.Z[static_cast<std::size_t>(t - 1)](0, 1));
}

TEST(Simulate, SeedReproducible) {
  SeededRng a(77), b(77);
  const auto ta = simulate(seir_fig1(100000), TruncNormalReporting{0.5, 0.1}, 50, a);
  const auto tb = simulate(seir_fig1(100000), TruncNormalReporting{0.5, 0.1}, 50, b);
  EXPECT_EQ(ta.x, tb.x);
  EXPECT_EQ(ta.y, tb.y);
  EXPECT_EQ(ta.q, tb.q);
}

TEST(Simulate, RejectsBadHorizon) {
  SeededRng rng(1);
  EXPECT_THROW(simulate(sir(100, 0.1, 0.1), FixedReporting{0.5}, 0, rng), DomainError);
  EXPECT_THROW(simulate(sir(100, 0.1, 0.1), FixedReporting{1.5}, 5, rng), ValidationError);
}

TEST(SimulateFixedQ, Paths) {
  SeededRng rng(4);
  const std::vector<double> zeros(25, 0.0), ones(25, 1.0);
  for (Count y : simulate_with_fixed_q_path(seir_fig1(10000), zeros, 25, rng).y) EXPECT_EQ(y, 0);
  const auto t1 = simulate_with_fixed_q_path(seir_fig1(10000), ones, 25, rng);
  for (int t = 1; t <= 25; ++t) EXPECT_EQ(t1.y[static_cast<std::size_t>(t - 1)], t1.Z[static_cast<std::size_t>(t - 1)](1, 2));
  EXPECT_THROW(simulate_with_fixed_q_path(seir_fig1(100), ones, 24, rng), ValidationError);
  std::vector<double> bad(25, 0.5);
  bad[3] = 1.2;
  EXPECT_THROW(simulate_with_fixed_q_path(seir_fig1(100), bad, 25, rng), ValidationError);
}

TEST(SimulateFixedQ, LargePopulationTracksLimitFlow) {
  const int T = 100;
  const Count n = 100000;
  SeededRng qrng(5);
  std::vector<double> q(T);
  for (auto& v : q) v = sample_trunc_normal(qrng, {0.5, 0.1});
  SeededRng rng(6);
  const auto spec = seir_fig1(n);
  const auto traj = simulate_with_fixed_q_path(spec, q, T, rng);
  const auto lim = limit_recursion(spec, T);
  double worst = 0.0;
  for (int t = 0; t < T; ++t) {
    const double expected = q[static_cast<std::size_t>(t)] * lim[static_cast<std::size_t>(t)].N(1, 2);
    worst = std::max(worst, std::abs(static_cast<double>(traj.y[static_cast<std::size_t>(t)]) / n - expected));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Simulate, LlnErrorShrinksWithPopulation) {
  const int T = 100;
  std::vector<double> medians;
  for (Count n : {1000, 10000, 100000, 1000000}) {
    const auto spec = sir(n, 0.15, 0.1);
    const auto lim = limit_recursion(spec, T);
    std::vector<double> errs;
    for (int seed = 0; seed < 5; ++seed) {
      SeededRng rng(1000 + seed);
      const auto traj = simulate(spec, FixedReporting{1.0}, T, rng);
      double sup = 0.0;
      for (int t = 1; t <= T; ++t) {
        for (int k = 0; k < 3; ++k) {
          sup = std::max(sup, std::abs(static_cast<double>(traj.x(t, k)) / n - lim[static_cast<std::size_t>(t - 1)].nu[k]));
        }
      }
      errs.push_back(sup);
    }
    std::nth_element(errs.begin(), errs.begin() + 2, errs.end());
    medians.push_back(errs[2]);
  }
  for (std::size_t k = 1; k < medians.size(); ++k) EXPECT_LE(medians[k], medians[k - 1]);
  EXPECT_LE(medians.back(), 0.01);
}
