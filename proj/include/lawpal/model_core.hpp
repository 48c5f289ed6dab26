#pragma once

// Compartmental model definitions: probability vectors, row-stochastic
// transition kernels, and the deterministic large-population limit.
//
// External indexing (configuration, ObsEdge) is 1-based; storage is 0-based.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lawpal/errors.hpp"
#include "lawpal/rand_kit.hpp"

namespace lawpal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kProbTol = 1e-12;

/// Non-negative entries summing to one.
class ProbVector {
 public:
  ProbVector() = default;

  explicit ProbVector(Vector entries) : p_(std::move(entries)) {
    if (p_.size() == 0) throw ValidationError("probability vector must be non-empty");
    for (Eigen::Index k = 0; k < p_.size(); ++k) {
      if (!(p_[k] >= 0.0 && p_[k] <= 1.0)) {
        throw ValidationError("probability vector entry outside [0,1]");
      }
    }
    if (std::fabs(p_.sum() - 1.0) > kProbTol) {
      throw ValidationError("probability vector does not sum to 1 (sum=" + std::to_string(p_.sum()) + ")");
    }
  }

  ProbVector(std::initializer_list<double> values)
      : ProbVector(Eigen::Map<const Vector>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

  const Vector& entries() const noexcept { return p_; }
  Eigen::Index size() const noexcept { return p_.size(); }
  double operator[](Eigen::Index k) const { return p_[k]; }

 private:
  Vector p_;
};

/// x / sum(x), or the zero vector when sum(x) == 0.
inline Vector eta_normalize(const Vector& x) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!(x[k] >= 0.0)) throw DomainError("eta_normalize: entries must be non-negative");
  }
  const double total = x.sum();
  if (total == 0.0) return Vector::Zero(x.size());
  return x / total;
}

/// Square matrix with entries in [0,1] and unit row sums.
class StochMatrix {
 public:
  StochMatrix() = default;
  explicit StochMatrix(Matrix k) : k_(std::move(k)) { validate(k_); }

  static void validate(const Matrix& k, double tol = kProbTol) {
    if (k.rows() != k.cols() || k.rows() == 0) throw ValidationError("kernel must be square and non-empty");
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        if (!(k(i, j) >= -tol && k(i, j) <= 1.0 + tol)) {
          throw ValidationError("kernel entry outside [0,1] at (" + std::to_string(i + 1) + "," +
                                std::to_string(j + 1) + ")");
        }
      }
      if (std::fabs(k.row(i).sum() - 1.0) > tol) {
        throw ValidationError("kernel row " + std::to_string(i + 1) + " does not sum to 1");
      }
    }
  }

  const Matrix& matrix() const noexcept { return k_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return k_(i, j); }
  Eigen::Index size() const noexcept { return k_.rows(); }

 private:
  Matrix k_;
};

// ---------------------------------------------------------------------------
// Kernels

struct SirParams {
  double beta = 0.0;
  double gamma = 0.0;
};

struct SeirParams {
  double beta = 0.0;
  double rho = 0.0;
  double gamma = 0.0;
};

/// SEIR with a logistic drop in transmission after the intervention time t_star.
struct SeirControlParams {
  double beta = 0.0;
  double rho = 0.0;
  double gamma = 0.0;
  double alpha = 1.0;
  double b = 0.0;
  double d = 0.0;
  int t_star = 0;

  double beta_at(int t) const {
    return beta * (alpha + (1.0 - alpha) / (1.0 + std::exp(b * (t - t_star - d))));
  }
};

/// User-supplied kernel: fills `out` (m x m) for time t and normalized state eta.
using KernelFn = std::function<void(int t, const Vector& eta, Matrix& out)>;

struct CustomKernel {
  std::string name;
  int m = 0;
  std::map<std::string, double> params;
  KernelFn fn;
};

using KernelParams = std::variant<SirParams, SeirParams, SeirControlParams, CustomKernel>;

class Kernel;

/// Factory: builds the evaluation function of a named custom kernel from its parameters and h.
using KernelFactory = std::function<CustomKernel(const std::map<std::string, double>& params, double h)>;

class KernelRegistry {
 public:
  static KernelRegistry& instance() {
    static KernelRegistry registry;
    return registry;
  }

  void add(const std::string& name, KernelFactory factory) {
    std::lock_guard lock(mu_);
    factories_[name] = std::move(factory);
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mu_);
    return factories_.count(name) != 0;
  }

  CustomKernel make(const std::string& name, const std::map<std::string, double>& params, double h) const {
    KernelFactory f;
    {
      std::lock_guard lock(mu_);
      auto it = factories_.find(name);
      if (it == factories_.end()) throw ValidationError("unknown kernel '" + name + "'");
      f = it->second;
    }
    CustomKernel k = f(params, h);
    k.name = name;
    k.params = params;
    return k;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, KernelFactory> factories_;
};

/// Pure map (t, eta) -> row-stochastic matrix, parameterized by theta and step size h.
class Kernel {
 public:
  Kernel() = default;
  Kernel(KernelParams params, double h = 1.0) : params_(std::move(params)), h_(h) {
    if (!(h_ > 0.0)) throw ValidationError("step size h must be > 0");
    check_params();
  }

  static Kernel sir(double beta, double gamma, double h = 1.0) { return Kernel(SirParams{beta, gamma}, h); }
  static Kernel seir(double beta, double rho, double gamma, double h = 1.0) {
    return Kernel(SeirParams{beta, rho, gamma}, h);
  }
  static Kernel seir_control(const SeirControlParams& p, double h = 1.0) { return Kernel(p, h); }

  /// Builds a registered custom kernel and runs the row-stochastic validator on it.
  static Kernel custom(const std::string& name, const std::map<std::string, double>& params, double h = 1.0);

  int compartments() const {
    return std::visit(
        [](const auto& p) -> int {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SirParams>) return 3;
          else if constexpr (std::is_same_v<T, CustomKernel>) return p.m;
          else return 4;
        },
        params_);
  }

  double h() const noexcept { return h_; }
  const KernelParams& params() const noexcept { return params_; }

  std::string id() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SirParams>) return "SIR";
          else if constexpr (std::is_same_v<T, SeirParams>) return "SEIR";
          else if constexpr (std::is_same_v<T, SeirControlParams>) return "SEIRControl";
          else return p.name;
        },
        params_);
  }

  /// Names accepted by get/set (t_star excluded: it is an integer index, not estimated).
  std::vector<std::string> param_names() const {
    return std::visit(
        [](const auto& p) -> std::vector<std::string> {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SirParams>) return {"beta", "gamma"};
          else if constexpr (std::is_same_v<T, SeirParams>) return {"beta", "rho", "gamma"};
          else if constexpr (std::is_same_v<T, SeirControlParams>) {
            return {"beta", "rho", "gamma", "alpha", "b", "d"};
          } else {
            std::vector<std::string> names;
            for (const auto& [k, v] : p.params) names.push_back(k);
            return names;
          }
        },
        params_);
  }

  double get(const std::string& name) const { return *const_cast<Kernel*>(this)->slot(name); }

  void set(const std::string& name, double value) {
    if (auto* custom = std::get_if<CustomKernel>(&params_)) {
      auto params = custom->params;
      if (!params.count(name)) throw ValidationError("kernel '" + custom->name + "' has no parameter '" + name + "'");
      params[name] = value;
      params_ = KernelRegistry::instance().make(custom->name, params, h_);
      return;
    }
    double* s = slot(name);
    const double old = *s;
    *s = value;
    try {
      check_params();
    } catch (...) {
      *s = old;
      throw;
    }
  }

  /// Writes K_{t,eta} into `out`, resizing if needed. No allocation once sized.
  void eval_into(int t, const Vector& eta, Matrix& out) const {
    const int m = compartments();
    if (out.rows() != m || out.cols() != m) out.resize(m, m);
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SirParams>) {
            out.setZero();
            const double stay = std::exp(-h_ * p.beta * eta[1]);
            const double recover = std::exp(-h_ * p.gamma);
            out(0, 0) = stay;
            out(0, 1) = 1.0 - stay;
            out(1, 1) = recover;
            out(1, 2) = 1.0 - recover;
            out(2, 2) = 1.0;
          } else if constexpr (std::is_same_v<T, SeirParams>) {
            fill_seir(out, p.beta, p.rho, p.gamma, eta);
          } else if constexpr (std::is_same_v<T, SeirControlParams>) {
            fill_seir(out, p.beta_at(t), p.rho, p.gamma, eta);
          } else {
            p.fn(t, eta, out);
          }
        },
        params_);
  }

  StochMatrix eval(int t, const Vector& eta) const {
    Matrix k;
    eval_into(t, eta, k);
    return StochMatrix(std::move(k));
  }

  /// Lipschitz constant of eta -> K in the sup norm for the built-ins: h * max transmission rate.
  double lipschitz_bound() const {
    return std::visit(
        [&](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, CustomKernel>) {
            return std::numeric_limits<double>::quiet_NaN();
          } else {
            return h_ * p.beta;
          }
        },
        params_);
  }

 private:
  void fill_seir(Matrix& out, double beta, double rho, double gamma, const Vector& eta) const {
    out.setZero();
    const double stay = std::exp(-h_ * beta * eta[2]);
    const double incubate = std::exp(-h_ * rho);
    const double recover = std::exp(-h_ * gamma);
    out(0, 0) = stay;
    out(0, 1) = 1.0 - stay;
    out(1, 1) = incubate;
    out(1, 2) = 1.0 - incubate;
    out(2, 2) = recover;
    out(2, 3) = 1.0 - recover;
    out(3, 3) = 1.0;
  }

  double* slot(const std::string& name) {
    double* s = std::visit(
        [&](auto& p) -> double* {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SirParams>) {
            if (name == "beta") return &p.beta;
            if (name == "gamma") return &p.gamma;
          } else if constexpr (std::is_same_v<T, SeirParams>) {
            if (name == "beta") return &p.beta;
            if (name == "rho") return &p.rho;
            if (name == "gamma") return &p.gamma;
          } else if constexpr (std::is_same_v<T, SeirControlParams>) {
            if (name == "beta") return &p.beta;
            if (name == "rho") return &p.rho;
            if (name == "gamma") return &p.gamma;
            if (name == "alpha") return &p.alpha;
            if (name == "b") return &p.b;
            if (name == "d") return &p.d;
          } else {
            auto it = p.params.find(name);
            if (it != p.params.end()) return &it->second;
          }
          return nullptr;
        },
        params_);
    if (s == nullptr) throw ValidationError("kernel " + id() + " has no parameter '" + name + "'");
    return s;
  }

  void check_params() const {
    std::visit(
        [](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, CustomKernel>) {
            if (p.m <= 0 || !p.fn) throw ValidationError("custom kernel '" + p.name + "' is incomplete");
          } else {
            if (!(p.beta >= 0.0) || !(p.gamma >= 0.0)) throw ValidationError("kernel rates must be >= 0");
            if constexpr (!std::is_same_v<T, SirParams>) {
              if (!(p.rho >= 0.0)) throw ValidationError("kernel rates must be >= 0");
            }
            if constexpr (std::is_same_v<T, SeirControlParams>) {
              if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
              if (p.t_star < 0) throw ValidationError("t_star must be a non-negative time index");
            }
          }
        },
        params_);
  }

  KernelParams params_ = SirParams{};
  double h_ = 1.0;
};

/// Evaluates a kernel on simplex vertices, the barycentre and a few random points
/// for several t, throwing ValidationError if any result is not row-stochastic.
inline void validate_kernel(const Kernel& kernel) {
  const int m = kernel.compartments();
  std::vector<Vector> etas;
  for (int k = 0; k < m; ++k) etas.push_back(Vector::Unit(m, k));
  etas.push_back(Vector::Constant(m, 1.0 / m));
  etas.push_back(Vector::Zero(m));
  SeededRng rng(0x5eed);
  for (int r = 0; r < 8; ++r) {
    Vector v(m);
    for (int k = 0; k < m; ++k) v[k] = rng.uniform();
    etas.push_back(v / v.sum());
  }
  Matrix out;
  for (int t : {0, 1, 2, 10, 100, 1000}) {
    for (const auto& eta : etas) {
      kernel.eval_into(t, eta, out);
      StochMatrix::validate(out, 1e-12);
    }
  }
}

inline Kernel Kernel::custom(const std::string& name, const std::map<std::string, double>& params, double h) {
  Kernel k(KernelRegistry::instance().make(name, params, h), h);
  validate_kernel(k);
  return k;
}

/// kernel_eval(kernel, t, eta): the row-stochastic matrix K_{t,eta}.
inline StochMatrix kernel_eval(const Kernel& kernel, int t, const Vector& eta) { return kernel.eval(t, eta); }

// ---------------------------------------------------------------------------
// Model specification

/// Observed transition (from -> to), 1-based.
struct ObsEdge {
  int from = 1;
  int to = 2;

  Eigen::Index i() const { return from - 1; }
  Eigen::Index j() const { return to - 1; }
};

struct CompartmentalSpec {
  Count n = 0;
  ProbVector pi0;
  Kernel kernel;
  ObsEdge edge;

  int m() const { return static_cast<int>(pi0.size()); }
  double h() const { return kernel.h(); }

  /// Throws ValidationError on inconsistency. Returns false when the observed edge is
  /// structurally zero at the barycentre (a warning condition, not an error).
  bool validate() const {
    if (n <= 0) throw ValidationError("population n must be positive");
    if (pi0.size() == 0) throw ValidationError("pi0 missing");
    if (kernel.compartments() != m()) {
      throw ValidationError("kernel " + kernel.id() + " has " + std::to_string(kernel.compartments()) +
                            " compartments but pi0 has " + std::to_string(m()));
    }
    if (edge.from < 1 || edge.from > m() || edge.to < 1 || edge.to > m()) {
      throw ValidationError("observed edge out of range 1.." + std::to_string(m()));
    }
    Matrix k;
    kernel.eval_into(1, Vector::Constant(m(), 1.0 / m()), k);
    return k(edge.i(), edge.j()) > 0.0;
  }
};

// ---------------------------------------------------------------------------
// Large-population limit

struct LimitState {
  Vector nu;  // limiting proportions
  Matrix N;   // limiting flows; column sums equal nu
};

/// nu_0 = pi0; N_t = (nu_{t-1} (x) 1) o K_{t, eta(nu_{t-1})}; nu_t = (1^T N_t)^T, for t = 1..T.
inline std::vector<LimitState> limit_recursion(const CompartmentalSpec& spec, int T) {
  if (T < 1) throw DomainError("limit_recursion: T must be >= 1");
  std::vector<LimitState> out;
  out.reserve(static_cast<std::size_t>(T));
  Vector nu = spec.pi0.entries();
  Matrix k;
  for (int t = 1; t <= T; ++t) {
    spec.kernel.eval_into(t, eta_normalize(nu), k);
    Matrix flows = nu.asDiagonal() * k;
    nu = flows.colwise().sum().transpose();
    out.push_back({nu, std::move(flows)});
  }
  return out;
}

}  // namespace lawpal
