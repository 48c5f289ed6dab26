#include <gtest/gtest.h>

#include <cmath>

#include "lawpal/model_core.hpp"
#include "lawpal/simulator.hpp"

using namespace lawpal;

namespace {

Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

Vector random_simplex(SeededRng& rng, int m) {
  Vector v(m);
  for (int k = 0; k < m; ++k) v[k] = -std::log(rng.uniform());
  return v / v.sum();
}

// m=2 kernel that moves everybody from 1 to 2.
void register_shift_kernel() {
  if (KernelRegistry::instance().contains("shift")) return;
  KernelRegistry::instance().add("shift", [](const std::map<std::string, double>& params, double) {
    return CustomKernel{"shift", 2, params, [](int, const Vector&, Matrix& out) {
                          out.resize(2, 2);
                          out << 0.0, 1.0, 0.0, 1.0;
                        }};
  });
}

}  // namespace

TEST(ProbVector, Validation) {
  EXPECT_NO_THROW(ProbVector({0.25, 0.75}));
  EXPECT_THROW(ProbVector({0.5, 0.6}), ValidationError);
  EXPECT_THROW(ProbVector({-0.1, 1.1}), ValidationError);
  EXPECT_THROW(ProbVector({0.99, 0.0, 0.1, 0.0}), ValidationError);
}

TEST(EtaNormalize, Examples) {
  EXPECT_TRUE(eta_normalize(vec({2, 2, 0, 0})).isApprox(vec({0.5, 0.5, 0, 0})));
  EXPECT_EQ(eta_normalize(vec({0, 0, 0})), vec({0, 0, 0}));
  EXPECT_TRUE(eta_normalize(vec({1, 3})).isApprox(vec({0.25, 0.75})));
  EXPECT_THROW(eta_normalize(vec({1, -1})), DomainError);
}

TEST(KernelEval, SirRows) {
  const auto k = Kernel::sir(5.0, 0.1);
  const auto K = kernel_eval(k, 1, vec({1, 0, 0}));
  EXPECT_DOUBLE_EQ(K(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(K(0, 1), 0.0);
  const auto g0 = kernel_eval(Kernel::sir(0.4, 0.0), 3, vec({0.3, 0.5, 0.2}));
  EXPECT_DOUBLE_EQ(g0(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(g0(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(g0(1, 2), 0.0);
  const auto K2 = kernel_eval(Kernel::sir(0.15, 0.1, 2.0), 1, vec({0.9, 0.1, 0.0}));
  EXPECT_NEAR(K2(0, 0), std::exp(-2.0 * 0.15 * 0.1), 1e-15);
  EXPECT_NEAR(K2(1, 1), std::exp(-2.0 * 0.1), 1e-15);
  EXPECT_EQ(K2(2, 2), 1.0);
}

TEST(KernelEval, SeirUsesInfectiousProportion) {
  const auto K = kernel_eval(Kernel::seir(0.8, 0.1, 0.2), 1, vec({0.7, 0.1, 0.2, 0.0}));
  EXPECT_NEAR(K(0, 0), std::exp(-0.8 * 0.2), 1e-15);
  EXPECT_NEAR(K(1, 1), std::exp(-0.1), 1e-15);
  EXPECT_NEAR(K(2, 2), std::exp(-0.2), 1e-15);
  EXPECT_NEAR(K(1, 2), 1.0 - std::exp(-0.1), 1e-15);
}

TEST(KernelEval, RowsStochasticOnRandomEta) {
  SeededRng rng(1);
  SeirControlParams ctrl{1.53, 0.17, 0.33, 0.09, 0.24, 3.31, 23};
  for (const auto& k : {Kernel::sir(0.3, 0.2), Kernel::seir(0.8, 0.1, 0.2), Kernel::seir_control(ctrl, 0.5)}) {
    for (int r = 0; r < 200; ++r) {
      const Vector eta = random_simplex(rng, k.compartments());
      for (int t : {0, 1, 25, 400}) {
        Matrix K;
        k.eval_into(t, eta, K);
        ASSERT_LE((K.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
        ASSERT_GE(K.minCoeff(), 0.0);
      }
    }
  }
}

TEST(KernelEval, SeirControlLimits) {
  SeirControlParams p{0.9, 0.2, 0.3, 0.25, 50.0, 2.0, 10};
  EXPECT_NEAR(p.beta_at(1000), 0.9 * 0.25, 1e-12);
  EXPECT_NEAR(p.beta_at(0), 0.9, 1e-12);
  p.alpha = 1.0;
  const auto ctrl = Kernel::seir_control(p);
  const auto plain = Kernel::seir(0.9, 0.2, 0.3);
  SeededRng rng(2);
  for (int t = 0; t < 60; ++t) {
    const Vector eta = random_simplex(rng, 4);
    EXPECT_TRUE(kernel_eval(ctrl, t, eta).matrix().isApprox(kernel_eval(plain, t, eta).matrix(), 1e-15));
  }
}

TEST(KernelEval, LipschitzSanity) {
  SeededRng rng(3);
  for (const auto& k : {Kernel::sir(0.7, 0.2, 1.5), Kernel::seir(2.0, 0.1, 0.2)}) {
    const double c = k.lipschitz_bound();
    for (int r = 0; r < 500; ++r) {
      const Vector a = random_simplex(rng, k.compartments());
      const Vector b = random_simplex(rng, k.compartments());
      const Matrix d = kernel_eval(k, 1, a).matrix() - kernel_eval(k, 1, b).matrix();
      ASSERT_LE(d.cwiseAbs().maxCoeff(), c * (a - b).cwiseAbs().maxCoeff() + 1e-15);
    }
  }
}

TEST(Kernel, ParameterValidation) {
  EXPECT_THROW(Kernel::sir(-0.1, 0.1), ValidationError);
  EXPECT_THROW(Kernel::sir(0.1, 0.1, 0.0), ValidationError);
  EXPECT_THROW(Kernel::seir_control({0.5, 0.1, 0.1, 1.5, 1.0, 1.0, 0}), ValidationError);
  auto k = Kernel::sir(0.2, 0.1);
  EXPECT_THROW(k.set("gamma", -1.0), ValidationError);
  EXPECT_DOUBLE_EQ(k.get("gamma"), 0.1);
  EXPECT_THROW(k.set("rho", 0.1), ValidationError);
  k.set("beta", 0.5);
  EXPECT_DOUBLE_EQ(k.get("beta"), 0.5);
}

TEST(Kernel, CustomRegistryAndValidator) {
  register_shift_kernel();
  const auto k = Kernel::custom("shift", {});
  EXPECT_EQ(k.compartments(), 2);
  EXPECT_THROW(Kernel::custom("nope", {}), ValidationError);
  KernelRegistry::instance().add("broken", [](const std::map<std::string, double>& params, double) {
    return CustomKernel{"broken", 2, params, [](int, const Vector&, Matrix& out) {
                          out.resize(2, 2);
                          out << 0.5, 0.6, 0.0, 1.0;
                        }};
  });
  EXPECT_THROW(Kernel::custom("broken", {}), ValidationError);
}

TEST(CompartmentalSpec, Validation) {
  CompartmentalSpec ok{100, ProbVector({0.9, 0.1, 0.0}), Kernel::sir(0.3, 0.1), {1, 2}};
  EXPECT_TRUE(ok.validate());
  CompartmentalSpec bad_edge = ok;
  bad_edge.edge = {1, 4};
  EXPECT_THROW(bad_edge.validate(), ValidationError);
  CompartmentalSpec bad_m = ok;
  bad_m.pi0 = ProbVector({0.5, 0.5});
  EXPECT_THROW(bad_m.validate(), ValidationError);
  CompartmentalSpec structural_zero = ok;
  structural_zero.edge = {2, 1};
  EXPECT_FALSE(structural_zero.validate());
}

TEST(LimitRecursion, DeterministicShift) {
  register_shift_kernel();
  CompartmentalSpec spec{10, ProbVector({1.0, 0.0}), Kernel::custom("shift", {}), {1, 2}};
  const auto s = limit_recursion(spec, 2);
  EXPECT_TRUE(s[0].nu.isApprox(vec({0, 1})));
  Matrix N1(2, 2);
  N1 << 0, 1, 0, 0;
  EXPECT_TRUE(s[0].N.isApprox(N1));
  EXPECT_THROW(limit_recursion(spec, 0), DomainError);
}

TEST(LimitRecursion, NoInfectionPressure) {
  CompartmentalSpec spec{1000, ProbVector({0.995, 0.005, 0.0}), Kernel::sir(0.0, 0.1), {1, 2}};
  for (const auto& st : limit_recursion(spec, 50)) EXPECT_DOUBLE_EQ(st.nu[0], 0.995);
}

TEST(LimitRecursion, MassConservationLongRun) {
  CompartmentalSpec spec{1000, ProbVector({0.99, 0.0, 0.01, 0.0}), Kernel::seir(0.8, 0.1, 0.2), {2, 3}};
  const auto states = limit_recursion(spec, 10000);
  for (const auto& st : states) {
    ASSERT_NEAR(st.nu.sum(), 1.0, 1e-10);
    ASSERT_LE((st.N.colwise().sum().transpose() - st.nu).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(LimitRecursion, MatchesLargeSimulationAverage) {
  CompartmentalSpec spec{1000000, ProbVector({0.995, 0.005, 0.0}), Kernel::sir(0.15, 0.1), {1, 2}};
  const int T = 100;
  const auto lim = limit_recursion(spec, T);
  Matrix avg = Matrix::Zero(T, 3);
  for (int seed = 0; seed < 5; ++seed) {
    SeededRng rng(100 + seed);
    const auto traj = simulate(spec, FixedReporting{1.0}, T, rng);
    for (int t = 1; t <= T; ++t) {
      for (int k = 0; k < 3; ++k) avg(t - 1, k) += static_cast<double>(traj.x(t, k)) / 1e6 / 5.0;
    }
  }
  double worst = 0.0;
  for (int t = 0; t < T; ++t) worst = std::max(worst, (avg.row(t).transpose() - lim[static_cast<std::size_t>(t)].nu).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 0.005);
}
