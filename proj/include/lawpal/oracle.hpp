#pragma once

// Brute-force reference computations for tests and benchmarks. Not used by the
// filters; correctness over speed. Everything accumulates in log space.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "lawpal/model_core.hpp"
#include "lawpal/observation.hpp"

namespace lawpal::oracle {

struct GaussLegendre {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// Nodes and weights by Newton iteration on P_n.
inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre gl;
  gl.nodes.resize(static_cast<std::size_t>(n));
  gl.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    gl.nodes[static_cast<std::size_t>(i)] = -x;
    gl.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    gl.weights[static_cast<std::size_t>(i)] = w;
    gl.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return gl;
}

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

using LogIntegrand = std::function<double(double)>;

struct QuadratureOptions {
  int low_order = 32;
  int high_order = 64;
  double rel_tol = 1e-13;
  int max_depth = 40;
  int base_panels = 8;
};

namespace detail {

inline double log_panel(const LogIntegrand& g, double a, double b, const GaussLegendre& gl) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double acc = kNegInf;
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    const double v = g(mid + half * gl.nodes[k]);
    if (v == kNegInf) continue;
    acc = log_sum_exp(acc, std::log(gl.weights[k] * half) + v);
  }
  return acc;
}

inline const GaussLegendre& cached_rule(int n) {
  static const std::map<int, GaussLegendre> rules = [] {
    std::map<int, GaussLegendre> r;
    for (int k : {16, 32, 64, 128}) r.emplace(k, gauss_legendre(k));
    return r;
  }();
  auto it = rules.find(n);
  if (it == rules.end()) throw DomainError("unsupported quadrature order");
  return it->second;
}

}  // namespace detail

/// log of the integral of exp(g) over [a, b]: composite Gauss-Legendre on panels split at
/// `breakpoints` and bisected until the low/high-order estimates agree.
inline double log_integrate(const LogIntegrand& g, double a, double b, std::vector<double> breakpoints = {},
                            const QuadratureOptions& opt = {}) {
  std::vector<double> cuts{a, b};
  for (int k = 1; k < opt.base_panels; ++k) cuts.push_back(a + (b - a) * k / opt.base_panels);
  for (double c : breakpoints) {
    if (c > a && c < b) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto& lo = detail::cached_rule(opt.low_order);
  const auto& hi = detail::cached_rule(opt.high_order);
  double ref = kNegInf;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) ref = log_sum_exp(ref, detail::log_panel(g, cuts[k], cuts[k + 1], hi));
  if (ref == kNegInf) return kNegInf;

  std::function<double(double, double, int)> refine = [&](double l, double r, int depth) -> double {
    const double i_hi = detail::log_panel(g, l, r, hi);
    if (i_hi == kNegInf || i_hi < ref - 60.0) return i_hi;
    const double i_lo = detail::log_panel(g, l, r, lo);
    const double scaled = std::exp(i_hi - ref) * std::fabs(std::expm1(i_lo - i_hi));
    if (scaled < opt.rel_tol || depth >= opt.max_depth) return i_hi;
    const double mid = 0.5 * (l + r);
    return log_sum_exp(refine(l, mid, depth + 1), refine(mid, r, depth + 1));
  };
  double total = kNegInf;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) total = log_sum_exp(total, refine(cuts[k], cuts[k + 1], 0));
  return total;
}

inline double grid_argmax(double Lambda_ij, Count y, double mu_q, double sigma2_q, double grid_step);

namespace detail {

// Joint log density of (y, q) under y | q ~ Poisson(q L), q ~ N_[0,1](mu, sigma2).
inline LogIntegrand poisson_tn_joint(double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  const TruncNormalParams tn{mu_q, sigma2_q, 0.0, 1.0};
  const double log_z = trunc_normal_log_normalizer(tn);
  const double s = std::sqrt(sigma2_q);
  return [=](double q) {
    const double rate = q * Lambda_ij;
    double data;
    if (y == 0) {
      data = -rate;
    } else if (!(rate > 0.0)) {
      return kNegInf;
    } else {
      data = static_cast<double>(y) * std::log(rate) - rate - log_factorial(y);
    }
    return data + norm_logpdf((q - mu_q) / s) - std::log(s) - log_z;
  };
}

// Breakpoints clustered around the posterior mode for peaked integrands.
inline std::vector<double> mode_breakpoints(double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  const double mode = grid_argmax(Lambda_ij, y, mu_q, sigma2_q, 1e-3);
  const double curv = (mode > 0.0 ? static_cast<double>(y) / (mode * mode) : 0.0) + 1.0 / sigma2_q;
  const double w = 1.0 / std::sqrt(curv);
  std::vector<double> cuts{mode};
  for (double k : {0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 32.0}) {
    cuts.push_back(mode - k * w);
    cuts.push_back(mode + k * w);
  }
  return cuts;
}

}  // namespace detail

/// log of the integral over [0,1] of Poisson(y; q L) times the truncated-normal density of q.
inline double quad_marginal(double Lambda_ij, Count y, double mu_q, double sigma2_q,
                            const QuadratureOptions& opt = {}) {
  return log_integrate(detail::poisson_tn_joint(Lambda_ij, y, mu_q, sigma2_q), 0.0, 1.0,
                       detail::mode_breakpoints(Lambda_ij, y, mu_q, sigma2_q), opt);
}

/// E[q | y] under the same model, by a ratio of quadratures.
inline double quad_posterior_mean_q(double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  const auto g = detail::poisson_tn_joint(Lambda_ij, y, mu_q, sigma2_q);
  const auto cuts = detail::mode_breakpoints(Lambda_ij, y, mu_q, sigma2_q);
  const double den = log_integrate(g, 0.0, 1.0, cuts);
  if (den == kNegInf) return std::numeric_limits<double>::quiet_NaN();
  const double num = log_integrate([&](double q) { return q > 0.0 ? std::log(q) + g(q) : kNegInf; }, 0.0, 1.0, cuts);
  return std::exp(num - den);
}

/// Objective maximized by the Laplace step: y log q - L q - (q - mu)^2 / (2 sigma2).
inline double laplace_objective(double q, double Lambda_ij, Count y, double mu_q, double sigma2_q) {
  const double data = y == 0 ? 0.0 : (q > 0.0 ? static_cast<double>(y) * std::log(q) : kNegInf);
  return data - Lambda_ij * q - (q - mu_q) * (q - mu_q) / (2.0 * sigma2_q);
}

/// Argmax over the grid {step, 2 step, ..., 1}, refined by golden-section search around the best node.
inline double grid_argmax(double Lambda_ij, Count y, double mu_q, double sigma2_q, double grid_step) {
  const auto f = [&](double q) { return laplace_objective(q, Lambda_ij, y, mu_q, sigma2_q); };
  const auto n = static_cast<long>(std::floor(1.0 / grid_step + 1e-9));
  double best_q = grid_step;
  double best = kNegInf;
  for (long k = 1; k <= n; ++k) {
    const double q = std::min(1.0, static_cast<double>(k) * grid_step);
    const double v = f(q);
    if (v > best) {
      best = v;
      best_q = q;
    }
  }
  double lo = std::max(0.0, best_q - grid_step);
  double hi = std::min(1.0, best_q + grid_step);
  constexpr double invphi = 0.6180339887498949;
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (lo + hi);
  // Boundary optima: the interior search cannot reach the endpoints exactly.
  double result = mid;
  double fr = f(mid);
  for (double edge : {0.0, 1.0}) {
    if (std::fabs(edge - mid) <= grid_step && f(edge) > fr) {
      result = edge;
      fr = f(edge);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Exact likelihood by enumeration

struct EnumerationBudgetError : DomainError {
  EnumerationBudgetError(double estimate, double budget)
      : DomainError("enumerate_loglik: state space of ~" + std::to_string(estimate) +
                    " configurations exceeds budget " + std::to_string(budget)),
        estimate(estimate) {}
  double estimate;
};

namespace detail {

inline void for_each_composition(Count total, std::size_t parts, std::vector<Count>& buf, std::size_t pos,
                                 const std::function<void(const std::vector<Count>&)>& fn) {
  if (pos + 1 == parts) {
    buf[pos] = total;
    fn(buf);
    return;
  }
  for (Count k = 0; k <= total; ++k) {
    buf[pos] = k;
    for_each_composition(total - k, parts, buf, pos + 1, fn);
  }
}

// All outcomes of Mult(total, p) restricted to the support of p, as (full-length counts, log pmf).
inline std::vector<std::pair<std::vector<Count>, double>> multinomial_support(Count total, const std::vector<double>& p) {
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) support.push_back(k);
  }
  std::vector<std::pair<std::vector<Count>, double>> out;
  if (total == 0) {
    out.emplace_back(std::vector<Count>(p.size(), 0), 0.0);
    return out;
  }
  if (support.empty()) return out;
  std::vector<Count> buf(support.size());
  for_each_composition(total, support.size(), buf, 0, [&](const std::vector<Count>& c) {
    std::vector<Count> full(p.size(), 0);
    double lp = log_factorial(total);
    for (std::size_t s = 0; s < support.size(); ++s) {
      full[support[s]] = c[s];
      lp += static_cast<double>(c[s]) * std::log(p[support[s]]) - log_factorial(c[s]);
    }
    out.emplace_back(std::move(full), lp);
  });
  return out;
}

inline double binomial_coefficient(double n, double k) {
  return std::exp(log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0));
}

}  // namespace detail

struct EnumerationOptions {
  double budget = 5e7;  // maximum transition configurations per step
};

/// Exact log p(y_{1:T}) for toy models, summing over every transition-count configuration
/// and integrating each q_t by quadrature.
inline double enumerate_loglik(const CompartmentalSpec& spec, const ObservationModel& obs, std::span<const Count> y,
                               const EnumerationOptions& opt = {}) {
  spec.validate();
  validate(obs);
  const int m = spec.m();
  const auto ei = static_cast<std::size_t>(spec.edge.i());
  const auto ej = static_cast<std::size_t>(spec.edge.j());

  // log p(y | z) for the observed edge, integrating out q.
  std::map<std::pair<Count, Count>, double> obs_cache;
  const auto log_obs = [&](Count yy, Count z) {
    auto key = std::make_pair(yy, z);
    if (auto it = obs_cache.find(key); it != obs_cache.end()) return it->second;
    double v;
    if (const auto* f = std::get_if<FixedReporting>(&obs)) {
      v = log_binom_pmf(yy, z, f->q);
    } else if (yy > z) {
      v = kNegInf;
    } else {
      const auto tn = std::get<TruncNormalReporting>(obs).prior();
      const double log_z = trunc_normal_log_normalizer(tn);
      const double s = tn.sigma();
      const auto g = [&](double q) {
        const double lb = (q <= 0.0 || q >= 1.0) ? log_binom_pmf(yy, z, std::clamp(q, 0.0, 1.0))
                                                 : log_binom_pmf(yy, z, q);
        return lb + norm_logpdf((q - tn.mu) / s) - std::log(s) - log_z;
      };
      std::vector<double> cuts;
      if (z > 0) cuts.push_back(static_cast<double>(yy) / static_cast<double>(z));
      v = log_integrate(g, 0.0, 1.0, cuts);
    }
    obs_cache.emplace(key, v);
    return v;
  };

  std::map<std::vector<Count>, double> states;  // log probabilities
  {
    std::vector<double> pi0(spec.pi0.entries().data(), spec.pi0.entries().data() + m);
    for (auto& [x, lp] : detail::multinomial_support(spec.n, pi0)) states[x] = lp;
  }
  double total_ll = 0.0;
  Matrix k;
  for (std::size_t s = 0; s < y.size(); ++s) {
    const int t = static_cast<int>(s) + 1;
    double estimate = 0.0;
    for (const auto& [x, lp] : states) {
      double prod = 1.0;
      Vector eta = Eigen::Map<const Eigen::Matrix<Count, Eigen::Dynamic, 1>>(x.data(), m).cast<double>();
      spec.kernel.eval_into(t, eta_normalize(eta), k);
      for (int i = 0; i < m; ++i) {
        int support = 0;
        for (int j = 0; j < m; ++j) support += k(i, j) > 0.0 ? 1 : 0;
        if (x[static_cast<std::size_t>(i)] > 0 && support > 1) {
          prod *= detail::binomial_coefficient(static_cast<double>(x[static_cast<std::size_t>(i)] + support - 1),
                                               static_cast<double>(support - 1));
        }
      }
      estimate += prod;
    }
    if (estimate > opt.budget) throw EnumerationBudgetError(estimate, opt.budget);

    std::map<std::vector<Count>, double> next;
    for (const auto& [x, lp] : states) {
      Vector eta = Eigen::Map<const Eigen::Matrix<Count, Eigen::Dynamic, 1>>(x.data(), m).cast<double>();
      spec.kernel.eval_into(t, eta_normalize(eta), k);
      std::vector<std::vector<std::pair<std::vector<Count>, double>>> rows(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) {
        std::vector<double> p(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) p[static_cast<std::size_t>(j)] = k(i, j);
        rows[static_cast<std::size_t>(i)] = detail::multinomial_support(x[static_cast<std::size_t>(i)], p);
      }
      // Odometer over the Cartesian product of row outcomes.
      std::vector<std::size_t> pos(static_cast<std::size_t>(m), 0);
      bool any_empty = false;
      for (const auto& r : rows) any_empty = any_empty || r.empty();
      if (any_empty) continue;
      for (;;) {
        double lpz = lp;
        std::vector<Count> x_next(static_cast<std::size_t>(m), 0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const auto& [counts, lpr] = rows[i][pos[i]];
          lpz += lpr;
          for (std::size_t j = 0; j < counts.size(); ++j) x_next[j] += counts[j];
        }
        const Count z_edge = rows[ei][pos[ei]].first[ej];
        const double lo = log_obs(y[s], z_edge);
        if (lo != kNegInf) {
          auto [it, inserted] = next.try_emplace(x_next, lpz + lo);
          if (!inserted) it->second = log_sum_exp(it->second, lpz + lo);
        }
        std::size_t r = 0;
        while (r < rows.size() && ++pos[r] == rows[r].size()) {
          pos[r] = 0;
          ++r;
        }
        if (r == rows.size()) break;
      }
    }
    double norm = kNegInf;
    for (const auto& [x, lp] : next) norm = log_sum_exp(norm, lp);
    if (norm == kNegInf) return kNegInf;
    total_ll += norm;
    for (auto& [x, lp] : next) lp -= norm;
    states = std::move(next);
  }
  return total_ll;
}

}  // namespace lawpal::oracle
