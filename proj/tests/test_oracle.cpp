#include <gtest/gtest.h>

#include <cmath>

#include "lawpal/oracle.hpp"
#include "lawpal/simulator.hpp"

using namespace lawpal;

namespace {

void register_shift_kernel() {
  if (KernelRegistry::instance().contains("shift")) return;
  KernelRegistry::instance().add("shift", [](const std::map<std::string, double>& params, double) {
    return CustomKernel{"shift", 2, params, [](int, const Vector&, Matrix& out) {
                          out.resize(2, 2);
                          out << 0.0, 1.0, 0.0, 1.0;
                        }};
  });
}

void register_si_kernel() {
  if (KernelRegistry::instance().contains("si")) return;
  KernelRegistry::instance().add("si", [](const std::map<std::string, double>& params, double h) {
    const double beta = params.at("beta");
    return CustomKernel{"si", 2, params, [beta, h](int, const Vector& eta, Matrix& out) {
                          out.resize(2, 2);
                          const double stay = std::exp(-h * beta * eta[1]);
                          out << stay, 1.0 - stay, 0.0, 1.0;
                        }};
  });
}

}  // namespace

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto gl = oracle::gauss_legendre(16);
  double s = 0.0;
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) s += gl.weights[k] * std::pow(gl.nodes[k], 30);
  EXPECT_NEAR(s, 2.0 / 31.0, 1e-14);
}

TEST(QuadMarginal, DeltaLimitAndEmptyFlow) {
  EXPECT_NEAR(oracle::quad_marginal(100, 45, 0.5, 1e-10), log_poisson_pmf(45, 50.0), 1e-4);
  EXPECT_NEAR(oracle::quad_marginal(0, 0, 0.5, 0.1), 0.0, 1e-12);
}

TEST(QuadMarginal, MatchesMonteCarlo) {
  SeededRng rng(1);
  const int N = 1000000;
  std::vector<double> v(N);
  double mean = 0.0;
  for (int k = 0; k < N; ++k) {
    const double q = sample_trunc_normal(rng, {0.5, 0.1});
    v[static_cast<std::size_t>(k)] = std::exp(log_poisson_pmf(450, q * 1000));
    mean += v[static_cast<std::size_t>(k)];
  }
  mean /= N;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / (N - 1.0) / N);
  EXPECT_NEAR(std::exp(oracle::quad_marginal(1000, 450, 0.5, 0.1)), mean, 3.0 * se);
}

TEST(QuadMarginal, NodeDoublingIsStable) {
  for (const auto& [L, y] : std::vector<std::pair<double, Count>>{{100, 45}, {1000, 450}, {10000, 4500}, {50, 0}}) {
    oracle::QuadratureOptions fine;
    fine.low_order = 64;
    fine.high_order = 128;
    const double a = oracle::quad_marginal(L, y, 0.5, 0.1);
    const double b = oracle::quad_marginal(L, y, 0.5, 0.1, fine);
    EXPECT_NEAR(a, b, 1e-9) << L;
  }
}

TEST(QuadPosteriorMean, Limits) {
  const TruncNormalParams tn{0.3, 0.05};
  const double tn_mean = std::exp(oracle::log_integrate([&](double q) { return std::log(q) + trunc_normal_logpdf(q, tn); }, 0.0, 1.0));
  EXPECT_NEAR(oracle::quad_posterior_mean_q(0, 0, 0.3, 0.05), tn_mean, 1e-10);
  EXPECT_NEAR(oracle::quad_posterior_mean_q(1e6, 420000, 0.5, 0.1), 0.42, 1e-3);
}

TEST(GridArgmax, Examples) {
  EXPECT_NEAR(oracle::grid_argmax(10, 0, 0.5, 0.01, 1e-3), 0.4, 1e-3);
  EXPECT_NEAR(oracle::grid_argmax(50, 25, 0.5, 0.01, 1e-3), 0.5, 1e-6);
}

TEST(Enumerate, SingleDeterministicStep) {
  register_shift_kernel();
  CompartmentalSpec spec{10, ProbVector({1.0, 0.0}), Kernel::custom("shift", {}), {1, 2}};
  const TruncNormalReporting obs{0.4, 0.05};
  const auto tn = obs.prior();
  const double expected = oracle::log_integrate(
      [&](double q) { return log_binom_pmf(3, 10, q) + trunc_normal_logpdf(q, tn); }, 0.0, 1.0, {0.3});
  EXPECT_NEAR(oracle::enumerate_loglik(spec, obs, std::vector<Count>{3}), expected, 1e-10);
  EXPECT_NEAR(oracle::enumerate_loglik(spec, FixedReporting{0.3}, std::vector<Count>{3}), log_binom_pmf(3, 10, 0.3), 1e-12);
}

TEST(Enumerate, MatchesMonteCarlo) {
  register_si_kernel();
  CompartmentalSpec spec{10, ProbVector({0.7, 0.3}), Kernel::custom("si", {{"beta", 1.2}}), {1, 2}};
  const FixedReporting obs{0.6};
  const std::vector<Count> y{1, 2};
  const double exact = oracle::enumerate_loglik(spec, obs, y);
  // Plain Monte Carlo: simulate the latent path, average p(y | Z).
  SeededRng rng(2);
  const int N = 2000000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < N; ++k) {
    SeededRng path = rng.child(static_cast<std::uint64_t>(k));
    const auto traj = simulate_with_fixed_q_path(spec, std::vector<double>{0.6, 0.6}, 2, path);
    double w = 1.0;
    for (int t = 0; t < 2; ++t) w *= std::exp(log_binom_pmf(y[t], traj.Z[t](0, 1), 0.6));
    s += w;
    s2 += w * w;
  }
  const double mean = s / N;
  const double se = std::sqrt((s2 / N - mean * mean) / N);
  EXPECT_NEAR(std::exp(exact), mean, 3.0 * se);
}

TEST(Enumerate, PermutationInvariantUnderSymmetricRelabeling) {
  // m=3 with compartments 2 and 3 symmetric under the kernel: swapping their labels leaves the likelihood unchanged.
  if (!KernelRegistry::instance().contains("split")) {
    KernelRegistry::instance().add("split", [](const std::map<std::string, double>& params, double) {
      return CustomKernel{"split", 3, params, [](int, const Vector&, Matrix& out) {
                            out.resize(3, 3);
                            out << 0.4, 0.3, 0.3, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
                          }};
    });
  }
  CompartmentalSpec a{8, ProbVector({1.0, 0.0, 0.0}), Kernel::custom("split", {}), {1, 2}};
  CompartmentalSpec b = a;
  b.edge = {1, 3};
  const std::vector<Count> y{1, 2};
  const TruncNormalReporting obs{0.5, 0.1};
  EXPECT_NEAR(oracle::enumerate_loglik(a, obs, y), oracle::enumerate_loglik(b, obs, y), 1e-10);
}

TEST(Enumerate, RefusesLargeStateSpace) {
  CompartmentalSpec spec{3000, ProbVector({0.5, 0.3, 0.2}), Kernel::sir(0.5, 0.2), {1, 2}};
  oracle::EnumerationOptions opt;
  opt.budget = 1e5;
  EXPECT_THROW(oracle::enumerate_loglik(spec, FixedReporting{0.5}, std::vector<Count>{10}, opt), oracle::EnumerationBudgetError);
}
