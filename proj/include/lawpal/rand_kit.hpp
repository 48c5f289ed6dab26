#pragma once

// Seeded random primitives and the special functions the filters need.
//
// Every sampler here consumes uniforms from SeededRng through its own
// deterministic transformation, so a seed reproduces the same stream on any
// platform with IEEE doubles (std:: distributions are implementation-defined
// and are deliberately not used).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "lawpal/errors.hpp"

namespace lawpal {

using Count = std::int64_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Single-owner seeded stream. Child streams are keyed by (seed, index).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent stream for replicate / worker `index`.
  SeededRng child(std::uint64_t index) const {
    return SeededRng(detail::splitmix64(seed_ ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL)));
  }

  /// Uniform on the open interval (0, 1), 53 bits.
  double uniform() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t next_u64() noexcept { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Special functions

inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

inline double log_factorial(Count k) { return log_gamma(static_cast<double>(k) + 1.0); }

/// Standard normal CDF via the complementary error function.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * (1.0 / std::numbers::sqrt2)); }

/// Upper tail 1 - Phi(x) without cancellation.
inline double norm_ccdf(double x) { return 0.5 * std::erfc(x * (1.0 / std::numbers::sqrt2)); }

inline double norm_logpdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

/// Inverse standard normal CDF (Wichura's AS241, PPND16).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("norm_quantile: p must lie in (0,1)");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
             45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
          133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
             21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
          42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

/// log Binomial(y; n, p). Returns -inf outside the support.
inline double log_binom_pmf(Count y, Count n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) {
    throw DomainError("log_binom_pmf: requires n >= 0 and p in [0,1]");
  }
  if (y < 0 || y > n) return kNegInf;
  if (p == 0.0) return y == 0 ? 0.0 : kNegInf;
  if (p == 1.0) return y == n ? 0.0 : kNegInf;
  const double yd = static_cast<double>(y);
  const double nd = static_cast<double>(n);
  return log_factorial(n) - log_factorial(y) - log_factorial(n - y) + yd * std::log(p) +
         (nd - yd) * std::log1p(-p);
}

/// log Poisson(y; lambda), with 0 * log 0 = 0 so that log_poisson_pmf(0; 0) = 0.
inline double log_poisson_pmf(Count y, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("log_poisson_pmf: lambda must be >= 0");
  if (y < 0) return kNegInf;
  if (lambda == 0.0) return y == 0 ? 0.0 : kNegInf;
  const double yd = static_cast<double>(y);
  return yd * std::log(lambda) - lambda - log_factorial(y);
}

// ---------------------------------------------------------------------------
// Truncated normal

/// Normal(mu, sigma2) restricted to [lo, hi]. Defaults to the unit interval.
struct TruncNormalParams {
  double mu = 0.5;
  double sigma2 = 0.1;
  double lo = 0.0;
  double hi = 1.0;

  double sigma() const { return std::sqrt(sigma2); }
};

namespace detail {

// Probability mass of [a, b] under N(0,1), evaluated on the side of the origin
// that keeps both tails representable.
inline double std_normal_mass(double a, double b) {
  if (a > 0.0) return norm_ccdf(a) - norm_ccdf(b);
  return norm_cdf(b) - norm_cdf(a);
}

}  // namespace detail

/// log of the truncation normalizer Phi(b') - Phi(a'). Throws when it underflows.
inline double trunc_normal_log_normalizer(const TruncNormalParams& tn) {
  if (!(tn.sigma2 > 0.0) || !(tn.lo < tn.hi)) {
    throw DomainError("truncated normal: need sigma2 > 0 and lo < hi");
  }
  const double s = tn.sigma();
  const double z = detail::std_normal_mass((tn.lo - tn.mu) / s, (tn.hi - tn.mu) / s);
  if (!(z > std::numeric_limits<double>::min())) {
    throw DomainError("truncated normal: normalizer underflow (mu too many sd outside support)");
  }
  return std::log(z);
}

/// log density of the truncated normal; -inf outside [lo, hi].
inline double trunc_normal_logpdf(double q, const TruncNormalParams& tn) {
  const double log_z = trunc_normal_log_normalizer(tn);
  if (!(q >= tn.lo && q <= tn.hi)) return kNegInf;
  const double s = tn.sigma();
  return norm_logpdf((q - tn.mu) / s) - std::log(s) - log_z;
}

/// Inverse-CDF draw: exactly one uniform per sample.
inline double sample_trunc_normal(SeededRng& rng, const TruncNormalParams& tn) {
  (void)trunc_normal_log_normalizer(tn);
  const double s = tn.sigma();
  const double a = (tn.lo - tn.mu) / s;
  const double b = (tn.hi - tn.mu) / s;
  const double u = rng.uniform();
  double z;
  if (a > 0.0) {
    // Both bounds in the upper tail: mirror so the CDF values stay away from 1.
    const double pa = norm_cdf(-b);
    const double pb = norm_cdf(-a);
    z = -norm_quantile(std::clamp(pa + u * (pb - pa), std::numeric_limits<double>::min(),
                                  1.0 - std::numeric_limits<double>::epsilon()));
  } else {
    const double pa = norm_cdf(a);
    const double pb = norm_cdf(b);
    z = norm_quantile(std::clamp(pa + u * (pb - pa), std::numeric_limits<double>::min(),
                                 1.0 - std::numeric_limits<double>::epsilon()));
  }
  return std::clamp(tn.mu + s * z, tn.lo, tn.hi);
}

// ---------------------------------------------------------------------------
// Binomial and multinomial

namespace detail {

// log(k!) - [(k + 1/2) log(k + 1) - (k + 1) + log sqrt(2 pi)]
inline double stirling_tail(double k) {
  if (k <= 9.0) {
    return log_gamma(k + 1.0) - kLogSqrt2Pi - (k + 0.5) * std::log(k + 1.0) + (k + 1.0);
  }
  const double kp1sq = (k + 1.0) * (k + 1.0);
  return (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / 1260.0 / kp1sq) / kp1sq) / (k + 1.0);
}

// Sequential-search inversion from 0; one uniform.
inline Count binomial_inversion(SeededRng& rng, Count n, double p) {
  const double q = 1.0 - p;
  const double ratio = p / q;
  double f = std::pow(q, static_cast<double>(n));
  double u = rng.uniform();
  Count x = 0;
  while (u > f) {
    u -= f;
    ++x;
    if (x > n) return n;
    f *= ratio * static_cast<double>(n - x + 1) / static_cast<double>(x);
  }
  return x;
}

// Hormann's transformed rejection with squeeze (BTRS); exact, p <= 1/2.
inline Count binomial_btrs(SeededRng& rng, Count n, double p) {
  const double nd = static_cast<double>(n);
  const double q = 1.0 - p;
  const double spq = std::sqrt(nd * p * q);
  const double b = 1.15 + 2.53 * spq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = nd * p + 0.5;
  const double v_r = 0.92 - 4.2 / b;
  const double r = p / q;
  const double alpha = (2.83 + 5.1 / b) * spq;
  const double m = std::floor((nd + 1.0) * p);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + c);
    if (k < 0.0 || k > nd) continue;
    if (us >= 0.07 && v <= v_r) return static_cast<Count>(k);
    v = std::log(v * alpha / (a / (us * us) + b));
    const double bound = (m + 0.5) * std::log((m + 1.0) / (r * (nd - m + 1.0))) +
                         (nd + 1.0) * std::log((nd - m + 1.0) / (nd - k + 1.0)) +
                         (k + 0.5) * std::log(r * (nd - k + 1.0) / (k + 1.0)) + stirling_tail(m) +
                         stirling_tail(nd - m) - stirling_tail(k) - stirling_tail(nd - k);
    if (v <= bound) return static_cast<Count>(k);
  }
}

inline constexpr double kInversionThreshold = 30.0;

}  // namespace detail

/// Exact Binomial(n, p) draw.
inline Count sample_binomial(SeededRng& rng, Count n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sample_binomial: p must lie in [0,1]");
  if (n < 0) throw DomainError("sample_binomial: n must be >= 0");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  const bool flip = p > 0.5;
  const double pp = flip ? 1.0 - p : p;
  const Count k = static_cast<double>(n) * pp <= detail::kInversionThreshold
                      ? detail::binomial_inversion(rng, n, pp)
                      : detail::binomial_btrs(rng, n, pp);
  return flip ? n - k : k;
}

/// Multinomial(n, p) by conditional binomials in index order, written into `out`.
/// The last positive-probability category takes the remainder.
inline void sample_multinomial_into(SeededRng& rng, Count n, std::span<const double> p,
                                    std::span<Count> out) {
  std::fill(out.begin(), out.end(), Count{0});
  std::size_t last = p.size();
  for (std::size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0.0) {
      last = k;
      break;
    }
  }
  if (last == p.size()) return;
  double remaining_mass = 1.0;
  Count remaining = n;
  for (std::size_t k = 0; k < last && remaining > 0; ++k) {
    if (p[k] > 0.0) {
      const double cond = remaining_mass > 0.0 ? std::clamp(p[k] / remaining_mass, 0.0, 1.0) : 1.0;
      out[k] = sample_binomial(rng, remaining, cond);
      remaining -= out[k];
    }
    remaining_mass -= p[k];
  }
  out[last] = remaining;
}

inline std::vector<Count> sample_multinomial(SeededRng& rng, Count n, std::span<const double> p) {
  if (n < 0) throw DomainError("sample_multinomial: n must be >= 0");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("sample_multinomial: p is not a probability vector");
    total += v;
  }
  if (p.empty() || std::fabs(total - 1.0) > 1e-12) {
    throw DomainError("sample_multinomial: p must sum to 1");
  }
  std::vector<Count> out(p.size(), 0);
  sample_multinomial_into(rng, n, p, out);
  return out;
}

}  // namespace lawpal
