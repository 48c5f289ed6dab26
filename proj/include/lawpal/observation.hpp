#pragma once

#include <variant>

#include "lawpal/errors.hpp"
#include "lawpal/rand_kit.hpp"

namespace lawpal {

/// Equi-dispersed reporting: q_t = q for all t.
struct FixedReporting {
  double q = 1.0;
};

/// Over-dispersed reporting: q_t ~ N_[0,1](mu_q, sigma2_q), independently per step.
struct TruncNormalReporting {
  double mu_q = 0.5;
  double sigma2_q = 0.1;

  TruncNormalParams prior() const { return {mu_q, sigma2_q, 0.0, 1.0}; }
};

using ObservationModel = std::variant<FixedReporting, TruncNormalReporting>;

inline void validate(const ObservationModel& obs) {
  if (const auto* f = std::get_if<FixedReporting>(&obs)) {
    if (!(f->q >= 0.0 && f->q <= 1.0)) throw ValidationError("fixed reporting probability must lie in [0,1]");
  } else {
    const auto& tn = std::get<TruncNormalReporting>(obs);
    if (!(tn.mu_q >= 0.0 && tn.mu_q <= 1.0)) throw ValidationError("mu_q must lie in [0,1]");
    if (!(tn.sigma2_q > 0.0)) throw ValidationError("sigma2_q must be > 0");
  }
}

inline double sample_reporting(SeededRng& rng, const ObservationModel& obs) {
  if (const auto* f = std::get_if<FixedReporting>(&obs)) return f->q;
  return sample_trunc_normal(rng, std::get<TruncNormalReporting>(obs).prior());
}

}  // namespace lawpal
