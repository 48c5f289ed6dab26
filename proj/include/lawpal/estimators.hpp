#pragma once

// Likelihood-agnostic estimation: coordinate-ascent maximization and a
// two-phase adaptive random-walk Metropolis sampler, plus prior densities.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lawpal/errors.hpp"
#include "lawpal/rand_kit.hpp"

namespace lawpal {

enum class Transform { identity, log };

struct ParamSpec {
  std::string name;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  Transform transform = Transform::identity;
  double init = 0.0;
};

/// Ordered free parameters. Search and proposals happen in transformed coordinates.
class ParamSpace {
 public:
  ParamSpace() = default;
  explicit ParamSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
      if (!(p.lo < p.hi)) throw ValidationError("parameter '" + p.name + "': need lo < hi");
      if (!(p.init >= p.lo && p.init <= p.hi)) throw ValidationError("parameter '" + p.name + "': init outside bounds");
      if (p.transform == Transform::log && !(p.lo >= 0.0 && p.init > 0.0)) {
        throw ValidationError("parameter '" + p.name + "': log transform needs a positive domain");
      }
    }
  }

  std::size_t size() const noexcept { return params_.size(); }
  const ParamSpec& operator[](std::size_t k) const { return params_[k]; }
  const std::vector<ParamSpec>& params() const noexcept { return params_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p.name);
    return out;
  }

  std::vector<double> initial() const {
    std::vector<double> out;
    for (const auto& p : params_) out.push_back(p.init);
    return out;
  }

  double to_internal(std::size_t k, double v) const {
    return params_[k].transform == Transform::log ? std::log(v) : v;
  }
  double to_natural(std::size_t k, double u) const {
    return params_[k].transform == Transform::log ? std::exp(u) : u;
  }
  /// log |d natural / d internal|
  double log_jacobian(std::size_t k, double u) const { return params_[k].transform == Transform::log ? u : 0.0; }

  double internal_lo(std::size_t k) const {
    const auto& p = params_[k];
    if (p.transform == Transform::log) return p.lo > 0.0 ? std::log(p.lo) : -std::numeric_limits<double>::infinity();
    return p.lo;
  }
  double internal_hi(std::size_t k) const {
    const auto& p = params_[k];
    return p.transform == Transform::log ? std::log(p.hi) : p.hi;
  }

  bool in_bounds(std::span<const double> natural) const {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (!(natural[k] >= params_[k].lo && natural[k] <= params_[k].hi)) return false;
    }
    return true;
  }

 private:
  std::vector<ParamSpec> params_;
};

using Objective = std::function<double(std::span<const double>)>;

// ---------------------------------------------------------------------------
// Priors

struct TruncNormalPrior {
  double mu = 0.0;
  double sigma2 = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};

struct ExponentialPrior {
  double rate = 1.0;
};

struct FlatPrior {};

using Prior = std::variant<TruncNormalPrior, BetaPrior, ExponentialPrior, FlatPrior>;

inline double log_prior(const Prior& prior, double v) {
  return std::visit(
      [v](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncNormalPrior>) {
          return trunc_normal_logpdf(v, {p.mu, p.sigma2, p.lo, p.hi});
        } else if constexpr (std::is_same_v<T, BetaPrior>) {
          if (!(p.a > 0.0 && p.b > 0.0)) throw DomainError("Beta prior: need a, b > 0");
          if (!(v >= 0.0 && v <= 1.0)) return kNegInf;
          const double lb = log_gamma(p.a + p.b) - log_gamma(p.a) - log_gamma(p.b);
          const double t1 = p.a == 1.0 ? 0.0 : (p.a - 1.0) * std::log(v);
          const double t2 = p.b == 1.0 ? 0.0 : (p.b - 1.0) * std::log1p(-v);
          return lb + t1 + t2;
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          if (!(p.rate > 0.0)) throw DomainError("Exponential prior: need rate > 0");
          return v >= 0.0 ? std::log(p.rate) - p.rate * v : kNegInf;
        } else {
          return 0.0;
        }
      },
      prior);
}

// ---------------------------------------------------------------------------
// Coordinate ascent

struct CoordinateAscentOptions {
  double tol = 1e-6;
  int max_cycles = 200;
  int max_line_iters = 60;
};

struct CoordinateAscentResult {
  std::vector<double> params;  // natural scale
  double value = kNegInf;
  int cycles = 0;
  std::vector<double> cycle_values;  // objective after each cycle; non-decreasing
};

namespace detail {

// Golden-section maximization of f on [lo, hi]; returns (argmax, max). Non-finite values lose.
inline std::pair<double, double> golden_max(const std::function<double(double)>& f, double lo, double hi, double tol,
                                            int max_iters) {
  constexpr double invphi = 0.6180339887498949;
  const auto safe = [&](double x) {
    const double v = f(x);
    return std::isnan(v) ? kNegInf : v;
  };
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = safe(c);
  double fd = safe(d);
  for (int it = 0; it < max_iters && (hi - lo) > tol; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = safe(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = safe(d);
    }
  }
  return fc >= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

}  // namespace detail

/// Cyclic one-dimensional golden-section maximization within bounds.
inline CoordinateAscentResult coordinate_ascent(const Objective& objective, const ParamSpace& space,
                                                const CoordinateAscentOptions& opt = {}) {
  std::vector<double> x = space.initial();
  double best = objective(x);
  if (!std::isfinite(best)) throw NumericalError("coordinate_ascent: objective is not finite at the initial point");
  CoordinateAscentResult res;
  std::vector<double> trial = x;
  for (int cycle = 0; cycle < opt.max_cycles; ++cycle) {
    const double start = best;
    for (std::size_t k = 0; k < space.size(); ++k) {
      double lo = space.internal_lo(k);
      double hi = space.internal_hi(k);
      if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw ValidationError("coordinate_ascent: parameter '" + space[k].name + "' needs finite search bounds");
      }
      trial = x;
      const auto line = [&](double u) {
        trial[k] = std::clamp(space.to_natural(k, u), space[k].lo, space[k].hi);
        return objective(trial);
      };
      const auto [u_star, f_star] = detail::golden_max(line, lo, hi, opt.tol, opt.max_line_iters);
      if (f_star > best) {
        best = f_star;
        x[k] = std::clamp(space.to_natural(k, u_star), space[k].lo, space[k].hi);
      }
    }
    res.cycle_values.push_back(best);
    res.cycles = cycle + 1;
    if (best - start < opt.tol) break;
  }
  res.params = x;
  res.value = best;
  return res;
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis

struct RwmOptions {
  int burn_iters = 2000;
  double burn_step_var = 0.01;
  int main_iters = 10000;
  int thin = 1;
};

struct Chain {
  std::vector<std::string> names;
  Eigen::MatrixXd samples;       // kept main-phase draws, natural scale, one row per sample
  std::vector<double> log_post;  // log target at each kept row
  double acceptance_rate = 0.0;  // main phase
  double burn_acceptance_rate = 0.0;
  Eigen::MatrixXd proposal_cov;  // phase-2 covariance, internal coordinates
  bool regularized = false;      // burn-in covariance needed a ridge

  Eigen::VectorXd mean() const { return samples.colwise().mean().transpose(); }
  Eigen::VectorXd sd() const {
    const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
    const double denom = std::max<double>(1.0, static_cast<double>(samples.rows()) - 1.0);
    return (centered.array().square().colwise().sum() / denom).sqrt().transpose();
  }
};

/// Metropolis acceptance probability min(1, exp(delta)).
inline double acceptance_probability(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

/// Phase 1: diagonal Gaussian proposals with variance burn_step_var. Phase 2: joint Gaussian
/// proposals with covariance (2.38^2 / d) * burn-in sample covariance. Out-of-bounds proposals
/// are rejected. Proposals live in internal (transformed) coordinates.
inline Chain rwm_chain(const Objective& log_post, const ParamSpace& space, const RwmOptions& opt, SeededRng& rng) {
  const std::size_t d = space.size();
  if (d == 0) throw ValidationError("rwm_chain: empty parameter space");
  if (opt.thin < 1) throw ValidationError("rwm_chain: thin must be >= 1");

  std::vector<double> nat = space.initial();
  Eigen::VectorXd u(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) u[static_cast<Eigen::Index>(k)] = space.to_internal(k, nat[k]);

  // Returns log_post + log Jacobian; writes the untransformed log_post to `lp`.
  const auto target = [&](const Eigen::VectorXd& uu, std::vector<double>& natural, double& lp) {
    double jac = 0.0;
    lp = kNegInf;
    for (std::size_t k = 0; k < d; ++k) {
      natural[k] = space.to_natural(k, uu[static_cast<Eigen::Index>(k)]);
      jac += space.log_jacobian(k, uu[static_cast<Eigen::Index>(k)]);
    }
    if (!space.in_bounds(natural)) return kNegInf;
    lp = log_post(natural);
    if (std::isnan(lp)) lp = kNegInf;
    return lp + jac;
  };

  double cur_lp = kNegInf;
  double cur = target(u, nat, cur_lp);
  if (!std::isfinite(cur)) throw NumericalError("rwm_chain: log posterior is not finite at the initial point");
  double prop_lp = kNegInf;

  std::vector<double> prop_nat(d);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  const auto normal = [&] { return norm_quantile(rng.uniform()); };

  Chain chain;
  chain.names = space.names();

  // Phase 1.
  Eigen::MatrixXd burn(std::max(opt.burn_iters, 0), static_cast<Eigen::Index>(d));
  const double step_sd = std::sqrt(opt.burn_step_var);
  int accepted = 0;
  for (int it = 0; it < opt.burn_iters; ++it) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal();
    const Eigen::VectorXd prop = u + step_sd * z;
    const double val = target(prop, prop_nat, prop_lp);
    if (rng.uniform() < acceptance_probability(val - cur)) {
      u = prop;
      cur = val;
      cur_lp = prop_lp;
      nat = prop_nat;
      ++accepted;
    }
    burn.row(it) = u.transpose();
  }
  chain.burn_acceptance_rate = opt.burn_iters > 0 ? static_cast<double>(accepted) / opt.burn_iters : 0.0;

  // Phase-2 covariance.
  Eigen::MatrixXd cov;
  if (opt.burn_iters >= 2) {
    const Eigen::RowVectorXd mean = burn.colwise().mean();
    const Eigen::MatrixXd centered = burn.rowwise() - mean;
    cov = centered.transpose() * centered / static_cast<double>(opt.burn_iters - 1);
  } else {
    cov = opt.burn_step_var * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  }
  cov *= 2.38 * 2.38 / static_cast<double>(d);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || (llt.matrixL().toDenseMatrix().diagonal().array() <= 0.0).any()) {
    cov += Eigen::MatrixXd(1e-8 * cov.diagonal().asDiagonal()) +
           1e-12 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    llt.compute(cov);
    chain.regularized = true;
    if (llt.info() != Eigen::Success) throw NumericalError("rwm_chain: proposal covariance is not positive definite");
  }
  chain.proposal_cov = cov;
  const Eigen::MatrixXd L = llt.matrixL();

  // Phase 2.
  const int kept = opt.main_iters / opt.thin;
  chain.samples.resize(kept, static_cast<Eigen::Index>(d));
  chain.log_post.reserve(static_cast<std::size_t>(kept));
  accepted = 0;
  int row = 0;
  for (int it = 0; it < opt.main_iters; ++it) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal();
    const Eigen::VectorXd prop = u + L * z;
    const double val = target(prop, prop_nat, prop_lp);
    if (rng.uniform() < acceptance_probability(val - cur)) {
      u = prop;
      cur = val;
      nat = prop_nat;
      cur_lp = prop_lp;
      ++accepted;
    }
    if ((it + 1) % opt.thin == 0 && row < kept) {
      for (std::size_t k = 0; k < d; ++k) chain.samples(row, static_cast<Eigen::Index>(k)) = nat[k];
      chain.log_post.push_back(cur_lp);
      ++row;
    }
  }
  chain.acceptance_rate = opt.main_iters > 0 ? static_cast<double>(accepted) / opt.main_iters : 0.0;
  return chain;
}

}  // namespace lawpal
