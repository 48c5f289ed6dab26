#pragma once

// Bootstrap particle filter over (x_t, Z_t(i,j), q_t): the unbiased
// marginal-likelihood comparator for the deterministic filters.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lawpal/model_core.hpp"
#include "lawpal/observation.hpp"

namespace lawpal {

/// Particles keep only the counts and the observed-edge flow; weights depend on nothing else.
struct Particle {
  std::vector<Count> x;
  Count z_edge = 0;
  double q = 0.0;
  double log_w = 0.0;
};

struct PfOutput {
  double log_likelihood = 0.0;
  std::vector<double> ess_trace;       // ESS before resampling, per step
  std::vector<double> log_normalizers; // log p_hat(y_t | y_{1:t-1})
  std::vector<bool> resampled;
};

struct BpfOptions {
  /// Resample only when ESS < threshold * N. 0 (default) resamples every step.
  double ess_threshold = 0.0;
};

/// Scratch buffers reused across propagate calls.
struct PropagateWorkspace {
  Matrix k;
  Vector eta;
  std::vector<double> row;
  std::vector<Count> draw;
  std::vector<Count> next;
};

/// Advances one particle through the model dynamics at time t and draws a fresh q_t.
inline void propagate(SeededRng& rng, Particle& p, const CompartmentalSpec& spec, const ObservationModel& obs, int t,
                      PropagateWorkspace& ws) {
  const int m = spec.m();
  Count total = 0;
  for (Count c : p.x) total += c;
  ws.eta.resize(m);
  for (int k = 0; k < m; ++k) {
    ws.eta[k] = total > 0 ? static_cast<double>(p.x[static_cast<std::size_t>(k)]) / static_cast<double>(total) : 0.0;
  }
  spec.kernel.eval_into(t, ws.eta, ws.k);
  ws.row.resize(static_cast<std::size_t>(m));
  ws.draw.resize(static_cast<std::size_t>(m));
  ws.next.assign(static_cast<std::size_t>(m), 0);
  const auto ei = static_cast<std::size_t>(spec.edge.i());
  const auto ej = static_cast<std::size_t>(spec.edge.j());
  p.z_edge = 0;
  for (int i = 0; i < m; ++i) {
    const Count xi = p.x[static_cast<std::size_t>(i)];
    if (xi == 0) continue;
    for (int j = 0; j < m; ++j) ws.row[static_cast<std::size_t>(j)] = ws.k(i, j);
    sample_multinomial_into(rng, xi, ws.row, ws.draw);
    for (int j = 0; j < m; ++j) ws.next[static_cast<std::size_t>(j)] += ws.draw[static_cast<std::size_t>(j)];
    if (static_cast<std::size_t>(i) == ei) p.z_edge = ws.draw[ej];
  }
  p.x.swap(ws.next);
  p.q = sample_reporting(rng, obs);
}

inline Particle propagate(SeededRng& rng, Particle p, const CompartmentalSpec& spec, const ObservationModel& obs,
                          int t) {
  PropagateWorkspace ws;
  propagate(rng, p, spec, obs, t, ws);
  return p;
}

/// log Binomial(y_t; z_edge, q); -inf when y_t > z_edge.
inline double weight(const Particle& p, Count y) { return log_binom_pmf(y, p.z_edge, p.q); }

inline double effective_sample_size(std::span<const double> log_weights) {
  double mx = kNegInf;
  for (double lw : log_weights) mx = std::max(mx, lw);
  if (std::isinf(mx)) return 0.0;
  double s = 0.0;
  double s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - mx);
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

/// Systematic resampling with a caller-supplied offset u in [0,1).
inline std::vector<std::size_t> systematic_resample_with(double u, std::span<const double> log_weights) {
  const std::size_t n = log_weights.size();
  double mx = kNegInf;
  for (double lw : log_weights) mx = std::max(mx, lw);
  if (n == 0 || std::isinf(mx)) throw NumericalError("systematic_resample: no finite weight");
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += std::exp(log_weights[k] - mx);
    cdf[k] = acc;
  }
  std::vector<std::size_t> idx(n);
  std::size_t k = 0;
  const double step = acc / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double point = (static_cast<double>(r) + u) * step;
    while (k + 1 < n && cdf[k] <= point) ++k;
    // Never land on a zero-weight particle through roundoff at the top of the CDF.
    while (log_weights[k] == kNegInf && k > 0) --k;
    idx[r] = k;
  }
  return idx;
}

inline std::vector<std::size_t> systematic_resample(SeededRng& rng, std::span<const double> log_weights) {
  return systematic_resample_with(rng.uniform(), log_weights);
}

inline PfOutput run_bpf(const CompartmentalSpec& spec, const ObservationModel& obs, std::span<const Count> y,
                        std::size_t N, SeededRng& rng, const BpfOptions& options = {}) {
  if (N < 2) throw ValidationError("run_bpf: need at least 2 particles");
  if (y.empty()) throw ValidationError("observation series must have T >= 1");
  spec.validate();
  validate(obs);
  const int m = spec.m();
  std::vector<double> pi0(spec.pi0.entries().data(), spec.pi0.entries().data() + m);

  std::vector<Particle> particles(N);
  for (auto& p : particles) {
    p.x.resize(static_cast<std::size_t>(m));
    sample_multinomial_into(rng, spec.n, pi0, p.x);
  }
  std::vector<double> log_prev(N, -std::log(static_cast<double>(N)));  // normalized carried weights
  std::vector<double> lw(N);
  std::vector<Particle> scratch(N);
  PropagateWorkspace ws;
  PfOutput out;
  out.ess_trace.reserve(y.size());
  out.log_normalizers.reserve(y.size());

  for (std::size_t s = 0; s < y.size(); ++s) {
    const int t = static_cast<int>(s) + 1;
    double mx = kNegInf;
    for (std::size_t k = 0; k < N; ++k) {
      propagate(rng, particles[k], spec, obs, t, ws);
      particles[k].log_w = weight(particles[k], y[s]);
      lw[k] = log_prev[k] + particles[k].log_w;
      mx = std::max(mx, lw[k]);
    }
    if (std::isinf(mx)) throw DegeneracyError(t);
    double sum = 0.0;
    for (double v : lw) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    out.log_normalizers.push_back(log_norm);
    out.log_likelihood += log_norm;
    const double ess = effective_sample_size(lw);
    out.ess_trace.push_back(ess);

    const bool resample = options.ess_threshold <= 0.0 || ess < options.ess_threshold * static_cast<double>(N);
    out.resampled.push_back(resample);
    if (resample) {
      const auto idx = systematic_resample(rng, lw);
      for (std::size_t k = 0; k < N; ++k) scratch[k] = particles[idx[k]];
      particles.swap(scratch);
      std::fill(log_prev.begin(), log_prev.end(), -std::log(static_cast<double>(N)));
    } else {
      for (std::size_t k = 0; k < N; ++k) log_prev[k] = lw[k] - log_norm;
    }
  }
  return out;
}

}  // namespace lawpal
