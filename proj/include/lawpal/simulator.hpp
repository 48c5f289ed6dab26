#pragma once

// Forward simulation of the latent compartmental chain, per-step reporting
// probabilities, and thinned incidence observations.
//
// Uniform consumption order (fixed, so seeds reproduce): x_0 multinomial;
// then for each t, rows of Z_t in compartment order (empty rows skipped),
// then q_t, then y_t.

#include <span>
#include <vector>

#include "lawpal/model_core.hpp"
#include "lawpal/observation.hpp"

namespace lawpal {

using CountMatrix = Eigen::Matrix<Count, Eigen::Dynamic, Eigen::Dynamic>;

struct Trajectory {
  CountMatrix x;               // (T+1) x m, row t is x_t
  std::vector<CountMatrix> Z;  // Z[t-1] is the m x m flow matrix Z_t
  std::vector<double> q;       // q_1..q_T
  std::vector<Count> y;        // y_1..y_T

  int T() const { return static_cast<int>(y.size()); }
};

namespace detail {

// Samples Z_t row by row from x_prev; returns Z_t and writes x_t into x_next.
inline void step_transitions(const Kernel& kernel, int t, std::span<const Count> x_prev, SeededRng& rng,
                             Matrix& k_buf, Vector& eta_buf, CountMatrix& z, std::span<Count> x_next) {
  const auto m = static_cast<Eigen::Index>(x_prev.size());
  Count total = 0;
  for (Count c : x_prev) total += c;
  if (eta_buf.size() != m) eta_buf.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    eta_buf[k] = total > 0 ? static_cast<double>(x_prev[static_cast<std::size_t>(k)]) / static_cast<double>(total) : 0.0;
  }
  kernel.eval_into(t, eta_buf, k_buf);
  z.setZero(m, m);
  std::vector<double> row(static_cast<std::size_t>(m));
  std::vector<Count> draw(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const Count xi = x_prev[static_cast<std::size_t>(i)];
    if (xi == 0) continue;
    for (Eigen::Index j = 0; j < m; ++j) row[static_cast<std::size_t>(j)] = k_buf(i, j);
    sample_multinomial_into(rng, xi, row, draw);
    for (Eigen::Index j = 0; j < m; ++j) z(i, j) = draw[static_cast<std::size_t>(j)];
  }
  for (Eigen::Index j = 0; j < m; ++j) x_next[static_cast<std::size_t>(j)] = z.col(j).sum();
}

template <typename ReportingFn>
Trajectory simulate_impl(const CompartmentalSpec& spec, int T, SeededRng& rng, ReportingFn&& reporting) {
  if (T < 1) throw DomainError("simulate: T must be >= 1");
  spec.validate();
  const int m = spec.m();
  Trajectory traj;
  traj.x.setZero(T + 1, m);
  traj.Z.reserve(static_cast<std::size_t>(T));
  traj.q.reserve(static_cast<std::size_t>(T));
  traj.y.reserve(static_cast<std::size_t>(T));

  std::vector<double> pi0(spec.pi0.entries().data(), spec.pi0.entries().data() + m);
  std::vector<Count> x_prev(static_cast<std::size_t>(m));
  std::vector<Count> x_next(static_cast<std::size_t>(m));
  sample_multinomial_into(rng, spec.n, pi0, x_prev);
  for (int k = 0; k < m; ++k) traj.x(0, k) = x_prev[static_cast<std::size_t>(k)];

  Matrix k_buf;
  Vector eta_buf;
  CountMatrix z;
  for (int t = 1; t <= T; ++t) {
    step_transitions(spec.kernel, t, x_prev, rng, k_buf, eta_buf, z, x_next);
    const double q = reporting(t);
    const Count y = sample_binomial(rng, z(spec.edge.i(), spec.edge.j()), q);
    for (int k = 0; k < m; ++k) traj.x(t, k) = x_next[static_cast<std::size_t>(k)];
    traj.Z.push_back(z);
    traj.q.push_back(q);
    traj.y.push_back(y);
    std::swap(x_prev, x_next);
  }
  return traj;
}

}  // namespace detail

inline Trajectory simulate(const CompartmentalSpec& spec, const ObservationModel& obs, int T, SeededRng& rng) {
  validate(obs);
  return detail::simulate_impl(spec, T, rng, [&](int) { return sample_reporting(rng, obs); });
}

/// As simulate, with q_t taken from `q_path` (length T) instead of being sampled.
inline Trajectory simulate_with_fixed_q_path(const CompartmentalSpec& spec, std::span<const double> q_path, int T,
                                             SeededRng& rng) {
  if (static_cast<int>(q_path.size()) != T) {
    throw ValidationError("q_path length " + std::to_string(q_path.size()) + " does not match T=" + std::to_string(T));
  }
  for (double q : q_path) {
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("q_path entries must lie in [0,1]");
  }
  return detail::simulate_impl(spec, T, rng, [&](int t) { return q_path[static_cast<std::size_t>(t - 1)]; });
}

}  // namespace lawpal
