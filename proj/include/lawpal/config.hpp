#pragma once

// JSON run configuration. Unknown keys are rejected; every number is validated.
//
// {
//   "model": {"kernel": "SIR", "params": {"beta": 0.15, "gamma": 0.1}, "n": 100000,
//             "pi0": [0.995, 0.005, 0], "h": 1, "obs_edge": [1, 2],
//             "initial_seeds": [{"compartment": 2, "name": "e0", "value": 15}]},
//   "observation": {"type": "trunc_normal", "mu_q": 0.5, "sigma2_q": 0.1}
//                | {"type": "fixed", "q": 0.5},
//   "estimation": {"parameters": [{"name": "beta", "lower": 0.01, "upper": 2, "init": 0.2,
//                                  "transform": "log", "prior": {"type": "exponential", "rate": 0.1}}],
//                  "tol": 1e-6, "max_cycles": 200, "burn_step_var": 0.01},
//   "execution": {"seed": 1, "T": 150, "replicates": 1, "threads": 1, "particles": 1000,
//                 "iters": 10000, "burnin": 2000, "thin": 1}
// }

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lawpal/estimators.hpp"
#include "lawpal/model_core.hpp"
#include "lawpal/observation.hpp"

namespace lawpal {

/// Initial count of a compartment given by a (possibly estimated) named parameter.
/// Compartment 1 takes the remainder n - sum(seeds).
struct InitialSeed {
  int compartment = 2;
  std::string name;
  double value = 0.0;
};

struct ModelBlock {
  std::string kernel = "SIR";
  std::map<std::string, double> params;
  Count n = 0;
  std::vector<double> pi0;
  std::vector<InitialSeed> seeds;
  double h = 1.0;
  ObsEdge edge;
};

struct FreeParameter {
  ParamSpec spec;
  Prior prior = FlatPrior{};
};

struct EstimationBlock {
  std::vector<FreeParameter> parameters;
  double tol = 1e-6;
  int max_cycles = 200;
  double burn_step_var = 0.01;
};

struct ExecutionBlock {
  std::uint64_t seed = 1;
  int T = 0;
  int replicates = 1;
  int threads = 1;
  std::size_t particles = 1000;
  int iters = 10000;
  int burnin = 2000;
  int thin = 1;
};

struct RunConfig {
  ModelBlock model;
  ObservationModel observation = TruncNormalReporting{};
  EstimationBlock estimation;
  ExecutionBlock execution;

  ParamSpace param_space() const {
    std::vector<ParamSpec> specs;
    for (const auto& p : estimation.parameters) specs.push_back(p.spec);
    return ParamSpace(std::move(specs));
  }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

inline double get_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError("missing '" + key + "' in " + where);
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ValidationError("'" + key + "' in " + where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError("'" + key + "' in " + where + " must be finite");
  return d;
}

inline double get_number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
  return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

// Bound that may be null / absent for infinity.
inline double get_bound(const json& obj, const std::string& key, double inf, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return inf;
  return get_number(obj, key, where);
}

inline long long get_integer(const json& obj, const std::string& key, long long fallback, const std::string& where,
                             long long min_value) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ValidationError("'" + key + "' in " + where + " must be an integer");
  }
  const long long x = v.get<long long>();
  if (x < min_value) throw ValidationError("'" + key + "' in " + where + " must be >= " + std::to_string(min_value));
  return x;
}

inline Prior parse_prior(const json& p, const std::string& where) {
  if (!p.contains("type") || !p.at("type").is_string()) throw ValidationError(where + ": prior needs a string 'type'");
  const auto type = p.at("type").get<std::string>();
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (type == "trunc_normal") {
    check_keys(p, {"type", "mu", "sigma2", "lower", "upper"}, where);
    TruncNormalPrior tn{get_number(p, "mu", where), get_number(p, "sigma2", where), get_bound(p, "lower", -inf, where),
                        get_bound(p, "upper", inf, where)};
    if (!(tn.sigma2 > 0.0) || !(tn.lo < tn.hi)) throw ValidationError(where + ": invalid trunc_normal prior");
    (void)trunc_normal_log_normalizer({tn.mu, tn.sigma2, tn.lo, tn.hi});
    return tn;
  }
  if (type == "beta") {
    check_keys(p, {"type", "a", "b"}, where);
    BetaPrior b{get_number(p, "a", where), get_number(p, "b", where)};
    if (!(b.a > 0.0 && b.b > 0.0)) throw ValidationError(where + ": beta prior needs a, b > 0");
    return b;
  }
  if (type == "exponential") {
    check_keys(p, {"type", "rate"}, where);
    ExponentialPrior e{get_number(p, "rate", where)};
    if (!(e.rate > 0.0)) throw ValidationError(where + ": exponential prior needs rate > 0");
    return e;
  }
  if (type == "flat") {
    check_keys(p, {"type"}, where);
    return FlatPrior{};
  }
  throw ValidationError(where + ": unknown prior type '" + type + "'");
}

}  // namespace detail

/// Names a kernel exposes for estimation, without building it.
inline std::vector<std::string> kernel_param_names(const std::string& kernel) {
  if (kernel == "SIR") return {"beta", "gamma"};
  if (kernel == "SEIR") return {"beta", "rho", "gamma"};
  if (kernel == "SEIRControl") return {"beta", "rho", "gamma", "alpha", "b", "d"};
  return {};
}

inline RunConfig parse_config(const nlohmann::json& root) {
  using detail::check_keys;
  using detail::get_number;
  constexpr double inf = std::numeric_limits<double>::infinity();
  RunConfig cfg;
  check_keys(root, {"model", "observation", "estimation", "execution"}, "config");

  // model
  if (!root.contains("model")) throw ValidationError("config: missing 'model' block");
  const auto& mj = root.at("model");
  check_keys(mj, {"kernel", "params", "n", "pi0", "h", "obs_edge", "initial_seeds"}, "model");
  if (!mj.contains("kernel") || !mj.at("kernel").is_string()) throw ValidationError("model: 'kernel' must be a string");
  cfg.model.kernel = mj.at("kernel").get<std::string>();
  if (mj.contains("params")) {
    if (!mj.at("params").is_object()) throw ValidationError("model.params must be an object");
    for (auto it = mj.at("params").begin(); it != mj.at("params").end(); ++it) {
      cfg.model.params[it.key()] = get_number(mj.at("params"), it.key(), "model.params");
    }
  }
  const double n = get_number(mj, "n", "model");
  if (!(n >= 1.0) || n != std::floor(n)) throw ValidationError("model.n must be a positive integer");
  cfg.model.n = static_cast<Count>(n);
  cfg.model.h = detail::get_number_or(mj, "h", 1.0, "model");
  if (!(cfg.model.h > 0.0)) throw ValidationError("model.h must be > 0");
  if (mj.contains("pi0")) {
    if (!mj.at("pi0").is_array()) throw ValidationError("model.pi0 must be an array");
    for (const auto& v : mj.at("pi0")) {
      if (!v.is_number()) throw ValidationError("model.pi0 entries must be numbers");
      cfg.model.pi0.push_back(v.get<double>());
    }
  }
  if (mj.contains("initial_seeds")) {
    if (!mj.at("initial_seeds").is_array()) throw ValidationError("model.initial_seeds must be an array");
    for (const auto& s : mj.at("initial_seeds")) {
      check_keys(s, {"compartment", "name", "value"}, "model.initial_seeds[]");
      InitialSeed seed;
      seed.compartment = static_cast<int>(detail::get_integer(s, "compartment", 0, "model.initial_seeds[]", 2));
      if (!s.contains("name") || !s.at("name").is_string()) throw ValidationError("initial seed needs a string 'name'");
      seed.name = s.at("name").get<std::string>();
      seed.value = get_number(s, "value", "model.initial_seeds[]");
      if (!(seed.value >= 0.0)) throw ValidationError("initial seed values must be >= 0");
      cfg.model.seeds.push_back(seed);
    }
  }
  if (mj.contains("obs_edge")) {
    const auto& e = mj.at("obs_edge");
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ValidationError("model.obs_edge must be [i, j] with 1-based integers");
    }
    cfg.model.edge = {e[0].get<int>(), e[1].get<int>()};
  }

  // observation
  if (!root.contains("observation")) throw ValidationError("config: missing 'observation' block");
  const auto& oj = root.at("observation");
  if (!oj.is_object() || !oj.contains("type") || !oj.at("type").is_string()) {
    throw ValidationError("observation needs a string 'type'");
  }
  const auto otype = oj.at("type").get<std::string>();
  if (otype == "fixed") {
    check_keys(oj, {"type", "q"}, "observation");
    cfg.observation = FixedReporting{get_number(oj, "q", "observation")};
  } else if (otype == "trunc_normal") {
    check_keys(oj, {"type", "mu_q", "sigma2_q"}, "observation");
    cfg.observation = TruncNormalReporting{get_number(oj, "mu_q", "observation"), get_number(oj, "sigma2_q", "observation")};
  } else {
    throw ValidationError("observation.type must be 'fixed' or 'trunc_normal'");
  }
  validate(cfg.observation);

  // estimation
  if (root.contains("estimation")) {
    const auto& ej = root.at("estimation");
    check_keys(ej, {"parameters", "tol", "max_cycles", "burn_step_var"}, "estimation");
    cfg.estimation.tol = detail::get_number_or(ej, "tol", 1e-6, "estimation");
    cfg.estimation.max_cycles = static_cast<int>(detail::get_integer(ej, "max_cycles", 200, "estimation", 1));
    cfg.estimation.burn_step_var = detail::get_number_or(ej, "burn_step_var", 0.01, "estimation");
    if (!(cfg.estimation.tol > 0.0) || !(cfg.estimation.burn_step_var > 0.0)) {
      throw ValidationError("estimation: tol and burn_step_var must be > 0");
    }
    if (ej.contains("parameters")) {
      if (!ej.at("parameters").is_array()) throw ValidationError("estimation.parameters must be an array");
      for (const auto& pj : ej.at("parameters")) {
        const std::string where = "estimation.parameters[]";
        check_keys(pj, {"name", "lower", "upper", "init", "transform", "prior"}, where);
        FreeParameter fp;
        if (!pj.contains("name") || !pj.at("name").is_string()) throw ValidationError(where + ": needs a string 'name'");
        fp.spec.name = pj.at("name").get<std::string>();
        fp.spec.lo = detail::get_bound(pj, "lower", -inf, where);
        fp.spec.hi = detail::get_bound(pj, "upper", inf, where);
        fp.spec.init = get_number(pj, "init", where);
        if (pj.contains("transform")) {
          const auto tr = pj.at("transform").get<std::string>();
          if (tr == "log") fp.spec.transform = Transform::log;
          else if (tr != "identity") throw ValidationError(where + ": transform must be 'identity' or 'log'");
        } else if (fp.spec.name == "sigma2_q") {
          fp.spec.transform = Transform::log;
        }
        if (pj.contains("prior")) fp.prior = detail::parse_prior(pj.at("prior"), where + ".prior");
        cfg.estimation.parameters.push_back(fp);
      }
    }
  }

  // execution
  if (root.contains("execution")) {
    const auto& xj = root.at("execution");
    const std::string where = "execution";
    check_keys(xj, {"seed", "T", "replicates", "threads", "particles", "iters", "burnin", "thin"}, where);
    cfg.execution.seed = static_cast<std::uint64_t>(detail::get_integer(xj, "seed", 1, where, 0));
    cfg.execution.T = static_cast<int>(detail::get_integer(xj, "T", 0, where, 0));
    cfg.execution.replicates = static_cast<int>(detail::get_integer(xj, "replicates", 1, where, 1));
    cfg.execution.threads = static_cast<int>(detail::get_integer(xj, "threads", 1, where, 1));
    cfg.execution.particles = static_cast<std::size_t>(detail::get_integer(xj, "particles", 1000, where, 2));
    cfg.execution.iters = static_cast<int>(detail::get_integer(xj, "iters", 10000, where, 0));
    cfg.execution.burnin = static_cast<int>(detail::get_integer(xj, "burnin", 2000, where, 0));
    cfg.execution.thin = static_cast<int>(detail::get_integer(xj, "thin", 1, where, 1));
  }
  (void)cfg.param_space();  // validates bounds and init values
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(root);
}

}  // namespace lawpal
