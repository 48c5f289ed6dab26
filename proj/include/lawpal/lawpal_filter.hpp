#pragma once

// LawPAL: Poisson assumed-density filter with a per-step Laplace approximation
// over the latent reporting probability, and the equi-dispersed PAL baseline.
//
// Per step t, given the filtered intensity lambda_{t-1}:
//   Lambda_t   = (lambda_{t-1} (x) 1) o K_{t, eta(lambda_{t-1})}
//   q_bar_t    = argmax_q  y log(q L) - q L - (q - mu)^2 / (2 sigma2),  L = Lambda_t(i,j)
//   s2_t       = (y / q_bar^2 + 1 / sigma2)^-1
//   ell_t      = y log(q_bar L) - q_bar L - log y! + log phi(q_bar) + 0.5 log(2 pi s2)
//   Lambda_bar = Lambda_t except Lambda_bar(i,j) = y + (1 - q_bar) L
//   lambda_t   = column sums of Lambda_bar

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "lawpal/model_core.hpp"
#include "lawpal/observation.hpp"

namespace lawpal {

struct FilterStep {
  Matrix Lambda_pred;
  double q_bar = 0.0;
  double s2 = 0.0;
  Matrix Lambda_filt;
  Vector lambda_filt;
  double ll_inc = 0.0;
  bool clamped = false;  // unconstrained q_bar exceeded 1
  bool flagged = false;  // impossible observation (y > 0 with zero predicted flow)
};

struct FilterOutput {
  std::vector<FilterStep> steps;
  double total_ll = 0.0;

  bool flagged() const { return std::isinf(total_ll); }
};

/// Lambda_t = (lambda (x) 1_m) o K_{t, eta(lambda)}; row sums equal lambda.
inline Matrix predict_step(const Vector& lambda_prev, const Kernel& kernel, int t) {
  for (Eigen::Index k = 0; k < lambda_prev.size(); ++k) {
    if (!(lambda_prev[k] >= 0.0)) throw DomainError("predict_step: intensities must be non-negative");
  }
  Matrix k;
  kernel.eval_into(t, eta_normalize(lambda_prev), k);
  return lambda_prev.asDiagonal() * k;
}

/// Unconstrained mode of q -> y log q - L q - (q - mu)^2 / (2 sigma2): the non-negative
/// root of q^2 + (L sigma2 - mu) q - y sigma2 = 0.
inline double laplace_qbar_unclamped(double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  const double b = Lambda_ij * sigma2_q - mu_q;
  const double c = static_cast<double>(y) * sigma2_q;
  const double disc = std::sqrt(b * b + 4.0 * c);
  // Choose the cancellation-free form of the positive root.
  if (b <= 0.0) return 0.5 * (disc - b);
  return disc + b > 0.0 ? 2.0 * c / (disc + b) : 0.0;
}

inline double laplace_qbar(double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  if (!(Lambda_ij >= 0.0) || y < 0) throw DomainError("laplace_qbar: need Lambda >= 0 and y >= 0");
  return std::clamp(laplace_qbar_unclamped(Lambda_ij, y, mu_q, sigma2_q), 0.0, 1.0);
}

/// Inverse negative curvature of the joint log density at q_bar, with 0/0 = 0.
inline double laplace_s2(double q_bar, Count y, double sigma2_q) {
  if (!(q_bar >= 0.0 && q_bar <= 1.0)) throw DomainError("laplace_s2: q_bar must lie in [0,1]");
  if (y == 0) return sigma2_q;
  if (q_bar == 0.0) throw DomainError("laplace_s2: q_bar = 0 with y > 0");
  const double yd = static_cast<double>(y);
  return 1.0 / (yd / (q_bar * q_bar) + 1.0 / sigma2_q);
}

/// Laplace approximation of log p(y_t | y_{1:t-1}). -inf when y > 0 and Lambda_ij = 0.
inline double ll_increment(double Lambda_ij, Count y, double q_bar, double s2, double mu_q, double sigma2_q) {
  const double rate = q_bar * Lambda_ij;
  double data_term;
  if (y == 0) {
    data_term = -rate;
  } else if (!(rate > 0.0)) {
    return kNegInf;
  } else {
    data_term = static_cast<double>(y) * std::log(rate) - rate - log_factorial(y);
  }
  return data_term + trunc_normal_logpdf(q_bar, {mu_q, sigma2_q, 0.0, 1.0}) +
         0.5 * std::log(2.0 * std::numbers::pi * s2);
}

/// Moment-matched update: only the observed entry changes.
inline std::pair<Matrix, Vector> update_step(const Matrix& Lambda_pred, Count y, double q_bar, ObsEdge edge) {
  Matrix filt = Lambda_pred;
  const double l = Lambda_pred(edge.i(), edge.j());
  filt(edge.i(), edge.j()) = static_cast<double>(y) + (1.0 - q_bar) * l;
  Vector lambda = filt.colwise().sum().transpose();
  return {std::move(filt), std::move(lambda)};
}

namespace detail {

inline void check_series(std::span<const Count> y) {
  if (y.empty()) throw ValidationError("observation series must have T >= 1");
  for (Count v : y) {
    if (v < 0) throw ValidationError("observations must be non-negative");
  }
}

// Shared recursion. `reporting` maps (L, y) -> (q_bar, s2, ll_inc, clamped).
// `sink` receives each FilterStep when non-null.
template <typename Reporting>
double run_recursion(const CompartmentalSpec& spec, std::span<const Count> y, Reporting&& reporting,
                     std::vector<FilterStep>* sink) {
  check_series(y);
  const int m = spec.m();
  const auto i = spec.edge.i();
  const auto j = spec.edge.j();
  Vector lambda = static_cast<double>(spec.n) * spec.pi0.entries();
  Vector eta(m);
  Matrix k(m, m);
  Matrix big(m, m);
  double total = 0.0;
  for (std::size_t s = 0; s < y.size(); ++s) {
    const int t = static_cast<int>(s) + 1;
    const double mass = lambda.sum();
    eta = mass > 0.0 ? Vector(lambda / mass) : Vector::Zero(m);
    spec.kernel.eval_into(t, eta, k);
    big.noalias() = lambda.asDiagonal() * k;
    const double l = big(i, j);
    const auto r = reporting(l, y[s]);
    total += r.ll_inc;
    FilterStep step;
    if (sink) {
      step.Lambda_pred = big;
      step.q_bar = r.q_bar;
      step.s2 = r.s2;
      step.ll_inc = r.ll_inc;
      step.clamped = r.clamped;
      step.flagged = std::isinf(r.ll_inc);
    }
    big(i, j) = static_cast<double>(y[s]) + (1.0 - r.q_bar) * l;
    lambda = big.colwise().sum().transpose();
    if (sink) {
      step.Lambda_filt = big;
      step.lambda_filt = lambda;
      sink->push_back(std::move(step));
    }
  }
  return total;
}

struct StepResult {
  double q_bar;
  double s2;
  double ll_inc;
  bool clamped;
};

struct LawpalReporting {
  TruncNormalReporting obs;
  double log_norm;  // cached truncation normalizer

  StepResult operator()(double l, Count y) const {
    const double raw = laplace_qbar_unclamped(l, y, obs.mu_q, obs.sigma2_q);
    const double q_bar = std::clamp(raw, 0.0, 1.0);
    const double s2 = laplace_s2(q_bar, y, obs.sigma2_q);
    const double rate = q_bar * l;
    double ll;
    if (y > 0 && !(rate > 0.0)) {
      ll = kNegInf;
    } else {
      const double data = y == 0 ? -rate : static_cast<double>(y) * std::log(rate) - rate - log_factorial(y);
      const double z = (q_bar - obs.mu_q) / std::sqrt(obs.sigma2_q);
      const double prior = norm_logpdf(z) - 0.5 * std::log(obs.sigma2_q) - log_norm;
      ll = data + prior + 0.5 * std::log(2.0 * std::numbers::pi * s2);
    }
    return {q_bar, s2, ll, raw > 1.0};
  }
};

struct PalReporting {
  double q;

  StepResult operator()(double l, Count y) const {
    return {q, 0.0, log_poisson_pmf(y, q * l), false};
  }
};

}  // namespace detail

/// Over-dispersed filter. total_ll is -inf (not an exception) when a step is impossible.
inline FilterOutput run_lawpal(const CompartmentalSpec& spec, const TruncNormalReporting& obs,
                               std::span<const Count> y) {
  spec.validate();
  validate(ObservationModel{obs});
  FilterOutput out;
  out.steps.reserve(y.size());
  detail::LawpalReporting rep{obs, trunc_normal_log_normalizer(obs.prior())};
  out.total_ll = detail::run_recursion(spec, y, rep, &out.steps);
  return out;
}

/// Equi-dispersed baseline: q_bar = q, no Laplace term, ell = log Poisson(y; q Lambda_ij).
inline FilterOutput run_pal(const CompartmentalSpec& spec, const FixedReporting& obs, std::span<const Count> y) {
  spec.validate();
  validate(ObservationModel{obs});
  FilterOutput out;
  out.steps.reserve(y.size());
  out.total_ll = detail::run_recursion(spec, y, detail::PalReporting{obs.q}, &out.steps);
  return out;
}

inline FilterOutput run_filter(const CompartmentalSpec& spec, const ObservationModel& obs, std::span<const Count> y) {
  if (const auto* f = std::get_if<FixedReporting>(&obs)) return run_pal(spec, *f, y);
  return run_lawpal(spec, std::get<TruncNormalReporting>(obs), y);
}

/// Total approximate log-likelihood only; no per-step storage. Hot path for estimators.
inline double filter_loglik(const CompartmentalSpec& spec, const ObservationModel& obs, std::span<const Count> y) {
  if (const auto* f = std::get_if<FixedReporting>(&obs)) {
    return detail::run_recursion(spec, y, detail::PalReporting{f->q}, nullptr);
  }
  const auto& tn = std::get<TruncNormalReporting>(obs);
  return detail::run_recursion(spec, y, detail::LawpalReporting{tn, trunc_normal_log_normalizer(tn.prior())},
                               nullptr);
}

}  // namespace lawpal
