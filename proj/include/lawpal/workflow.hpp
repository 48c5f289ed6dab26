#pragma once

// Binding of named parameters onto a model, likelihood / posterior objectives,
// replicated MLE fits and posterior-predictive summaries.

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lawpal/config.hpp"
#include "lawpal/estimators.hpp"
#include "lawpal/lawpal_filter.hpp"
#include "lawpal/simulator.hpp"
#include "lawpal/smc_baseline.hpp"

namespace lawpal {

/// A model with every parameter fixed, plus a rule for overriding parameters by name.
/// Names: kernel parameters, `mu_q` / `sigma2_q` (trunc-normal reporting), `q` (fixed
/// reporting), and initial-seed names. Seeds fix x_0 counts of a compartment in
/// expectation; compartment 1 holds the remainder.
class ModelTemplate {
 public:
  ModelTemplate(CompartmentalSpec spec, ObservationModel obs, std::vector<InitialSeed> seeds = {})
      : spec_(std::move(spec)), obs_(std::move(obs)), seeds_(std::move(seeds)) {
    if (!seeds_.empty()) spec_.pi0 = seeded_pi0(spec_.pi0.entries());
    spec_.validate();
    validate(obs_);
  }

  static ModelTemplate from_config(const RunConfig& cfg) {
    const auto& mb = cfg.model;
    Kernel kernel = build_kernel(mb);
    const int m = kernel.compartments();
    Vector pi0 = Vector::Zero(m);
    if (!mb.pi0.empty()) {
      if (static_cast<int>(mb.pi0.size()) != m) {
        throw ValidationError("model.pi0 has " + std::to_string(mb.pi0.size()) + " entries but kernel " + kernel.id() +
                              " has " + std::to_string(m) + " compartments");
      }
      for (int k = 0; k < m; ++k) pi0[k] = mb.pi0[static_cast<std::size_t>(k)];
    } else if (mb.seeds.empty()) {
      throw ValidationError("model needs either 'pi0' or 'initial_seeds'");
    } else {
      pi0[0] = 1.0;
    }
    for (const auto& s : mb.seeds) {
      if (s.compartment > m) throw ValidationError("initial seed '" + s.name + "' refers to a missing compartment");
    }
    CompartmentalSpec spec{mb.n, ProbVector(pi0), std::move(kernel), mb.edge};
    ModelTemplate tmpl(std::move(spec), cfg.observation, mb.seeds);
    for (const auto& p : cfg.estimation.parameters) {
      if (!tmpl.accepts(p.spec.name)) throw ValidationError("free parameter '" + p.spec.name + "' is not in the model");
    }
    return tmpl;
  }

  const CompartmentalSpec& spec() const noexcept { return spec_; }
  const ObservationModel& obs() const noexcept { return obs_; }

  bool accepts(const std::string& name) const {
    for (const auto& k : spec_.kernel.param_names()) {
      if (k == name) return true;
    }
    for (const auto& s : seeds_) {
      if (s.name == name) return true;
    }
    if (std::holds_alternative<FixedReporting>(obs_)) return name == "q";
    return name == "mu_q" || name == "sigma2_q";
  }

  double get(const std::string& name) const {
    for (const auto& s : seeds_) {
      if (s.name == name) return s.value;
    }
    if (const auto* f = std::get_if<FixedReporting>(&obs_)) {
      if (name == "q") return f->q;
    } else {
      const auto& tn = std::get<TruncNormalReporting>(obs_);
      if (name == "mu_q") return tn.mu_q;
      if (name == "sigma2_q") return tn.sigma2_q;
    }
    return spec_.kernel.get(name);
  }

  /// Copy with the named parameters replaced. Throws ValidationError / DomainError on invalid values.
  ModelTemplate with(std::span<const std::string> names, std::span<const double> values) const {
    if (names.size() != values.size()) throw ValidationError("parameter names/values length mismatch");
    ModelTemplate out = *this;
    bool seeds_changed = false;
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto& name = names[k];
      const double v = values[k];
      bool done = false;
      for (auto& s : out.seeds_) {
        if (s.name == name) {
          s.value = v;
          seeds_changed = done = true;
        }
      }
      if (done) continue;
      if (auto* f = std::get_if<FixedReporting>(&out.obs_)) {
        if (name == "q") {
          f->q = v;
          continue;
        }
      } else {
        auto& tn = std::get<TruncNormalReporting>(out.obs_);
        if (name == "mu_q") {
          tn.mu_q = v;
          continue;
        }
        if (name == "sigma2_q") {
          tn.sigma2_q = v;
          continue;
        }
      }
      out.spec_.kernel.set(name, v);
    }
    if (seeds_changed) out.spec_.pi0 = out.seeded_pi0(out.spec_.pi0.entries());
    validate(out.obs_);
    return out;
  }

 private:
  static Kernel build_kernel(const ModelBlock& mb) {
    const auto param = [&](const std::string& name) {
      const auto it = mb.params.find(name);
      if (it == mb.params.end()) throw ValidationError("model.params: missing '" + name + "' for kernel " + mb.kernel);
      return it->second;
    };
    std::vector<std::string> allowed = kernel_param_names(mb.kernel);
    Kernel kernel;
    if (mb.kernel == "SIR") {
      kernel = Kernel::sir(param("beta"), param("gamma"), mb.h);
    } else if (mb.kernel == "SEIR") {
      kernel = Kernel::seir(param("beta"), param("rho"), param("gamma"), mb.h);
    } else if (mb.kernel == "SEIRControl") {
      const double t_star = param("t_star");
      if (t_star != std::floor(t_star)) throw ValidationError("model.params.t_star must be an integer");
      kernel = Kernel::seir_control({param("beta"), param("rho"), param("gamma"), param("alpha"), param("b"),
                                     param("d"), static_cast<int>(t_star)},
                                    mb.h);
      allowed.push_back("t_star");
    } else if (KernelRegistry::instance().contains(mb.kernel)) {
      kernel = Kernel::custom(mb.kernel, mb.params, mb.h);
      allowed = kernel.param_names();
    } else {
      throw ValidationError("unknown kernel '" + mb.kernel + "'");
    }
    for (const auto& [name, value] : mb.params) {
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
        throw ValidationError("model.params: kernel " + mb.kernel + " has no parameter '" + name + "'");
      }
    }
    return kernel;
  }

  ProbVector seeded_pi0(const Vector& base) const {
    Vector pi0 = base;
    const double n = static_cast<double>(spec_.n);
    for (const auto& s : seeds_) pi0[s.compartment - 1] = s.value / n;
    double rest = 0.0;
    for (Eigen::Index k = 1; k < pi0.size(); ++k) rest += pi0[k];
    if (rest > 1.0) throw ValidationError("initial seeds exceed the population");
    pi0[0] = 1.0 - rest;
    return ProbVector(pi0);
  }

  CompartmentalSpec spec_;
  ObservationModel obs_;
  std::vector<InitialSeed> seeds_;
};

// ---------------------------------------------------------------------------
// Objectives

/// LawPAL (or PAL, for fixed reporting) log-likelihood as a function of the named parameters.
/// Invalid parameter values evaluate to -inf.
inline Objective make_loglik_objective(const ModelTemplate& tmpl, std::vector<std::string> names,
                                       std::vector<Count> y) {
  return [tmpl, names = std::move(names), y = std::move(y)](std::span<const double> v) {
    try {
      const auto bound = tmpl.with(names, v);
      return filter_loglik(bound.spec(), bound.obs(), y);
    } catch (const ValidationError&) {
      return kNegInf;
    } catch (const DomainError&) {
      return kNegInf;
    }
  };
}

inline double log_prior_sum(const std::vector<FreeParameter>& params, std::span<const double> v) {
  double lp = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) lp += log_prior(params[k].prior, v[k]);
  return lp;
}

inline std::vector<std::string> free_names(const std::vector<FreeParameter>& params) {
  std::vector<std::string> out;
  for (const auto& p : params) out.push_back(p.spec.name);
  return out;
}

/// log prior + deterministic filter log-likelihood.
inline Objective make_log_posterior(const ModelTemplate& tmpl, const std::vector<FreeParameter>& params,
                                    std::vector<Count> y) {
  auto ll = make_loglik_objective(tmpl, free_names(params), std::move(y));
  return [params, ll = std::move(ll)](std::span<const double> v) {
    const double lp = log_prior_sum(params, v);
    if (!std::isfinite(lp)) return kNegInf;
    return lp + ll(v);
  };
}

/// log prior + bootstrap particle filter log-likelihood estimate. Each call consumes `rng`;
/// a degenerate filter evaluates to -inf.
inline Objective make_pf_log_posterior(const ModelTemplate& tmpl, const std::vector<FreeParameter>& params,
                                       std::vector<Count> y, std::size_t particles, SeededRng& rng) {
  return [tmpl, params, y = std::move(y), particles, &rng](std::span<const double> v) {
    const double lp = log_prior_sum(params, v);
    if (!std::isfinite(lp)) return kNegInf;
    try {
      const auto bound = tmpl.with(free_names(params), v);
      return lp + run_bpf(bound.spec(), bound.obs(), y, particles, rng).log_likelihood;
    } catch (const DegeneracyError&) {
      return kNegInf;
    } catch (const ValidationError&) {
      return kNegInf;
    } catch (const DomainError&) {
      return kNegInf;
    }
  };
}

// ---------------------------------------------------------------------------
// Replicated fits

/// Runs fn(0..count-1) on up to `threads` workers. The first exception is rethrown after join.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (int k = next++; k < count; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

struct ReplicateFit {
  std::vector<double> params;
  double value = kNegInf;
  int cycles = 0;
};

/// Simulates R data sets of length T from `truth` (replicate r uses stream seed.child(r)) and
/// fits each by coordinate ascent from the space's initial values.
inline std::vector<ReplicateFit> replicate_mle(const ModelTemplate& truth, const ParamSpace& space, int T, int R,
                                               std::uint64_t seed, int threads,
                                               const CoordinateAscentOptions& opt = {}) {
  if (T < 1 || R < 1) throw ValidationError("replicate_mle: need T >= 1 and R >= 1");
  std::vector<ReplicateFit> out(static_cast<std::size_t>(R));
  const SeededRng root(seed);
  parallel_for(R, threads, [&](int r) {
    SeededRng rng = root.child(static_cast<std::uint64_t>(r));
    const auto traj = simulate(truth.spec(), truth.obs(), T, rng);
    const auto objective = make_loglik_objective(truth, space.names(), traj.y);
    const auto res = coordinate_ascent(objective, space, opt);
    out[static_cast<std::size_t>(r)] = {res.params, res.value, res.cycles};
  });
  return out;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

/// Sample mean and (n-1)-denominator standard deviation.
inline Summary summarize(std::span<const double> v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline std::vector<Summary> summarize_fits(const std::vector<ReplicateFit>& fits) {
  if (fits.empty()) return {};
  std::vector<Summary> out;
  for (std::size_t k = 0; k < fits.front().params.size(); ++k) {
    std::vector<double> col;
    for (const auto& f : fits) col.push_back(f.params[k]);
    out.push_back(summarize(col));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior predictive checks

/// Mean of |y_t - y_{t-1}| over t = 2..T.
inline double lag1_abs_increment(std::span<const Count> y) {
  if (y.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t k = 1; k < y.size(); ++k) s += std::abs(static_cast<double>(y[k] - y[k - 1]));
  return s / static_cast<double>(y.size() - 1);
}

struct PredictiveCheck {
  double data_stat = 0.0;
  std::vector<double> draws;  // statistic for each replicated series
  double mean = 0.0;
};

/// Simulates one series per evenly spaced chain row and records lag1_abs_increment.
inline PredictiveCheck posterior_predictive(const ModelTemplate& tmpl, const Chain& chain, std::span<const Count> y,
                                            int draws, SeededRng& rng) {
  PredictiveCheck out;
  out.data_stat = lag1_abs_increment(y);
  const auto rows = chain.samples.rows();
  if (rows == 0 || draws < 1) return out;
  const int T = static_cast<int>(y.size());
  std::vector<double> v(static_cast<std::size_t>(chain.samples.cols()));
  for (int k = 0; k < draws; ++k) {
    const auto row = static_cast<Eigen::Index>((static_cast<double>(k) + 0.5) * static_cast<double>(rows) / draws);
    for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) v[static_cast<std::size_t>(c)] = chain.samples(row, c);
    const auto bound = tmpl.with(chain.names, v);
    const auto traj = simulate(bound.spec(), bound.obs(), T, rng);
    out.draws.push_back(lag1_abs_increment(traj.y));
  }
  out.mean = summarize(out.draws).mean;
  return out;
}

}  // namespace lawpal
