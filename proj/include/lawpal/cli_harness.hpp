#pragma once

// Command implementations behind the `lawpal` executable. Each command reads a RunConfig,
// optionally a series CSV, writes files under the output directory and returns an exit code:
// 0 success, 1 validation failure, 2 numerical failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "lawpal/config.hpp"
#include "lawpal/series_io.hpp"
#include "lawpal/workflow.hpp"

namespace lawpal {

/// Command-line overrides; unset values fall back to the config's execution block.
struct CliFlags {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::size_t> particles;
  std::optional<int> iters;
  std::optional<int> burnin;
  std::optional<int> thin;
  std::optional<int> replicates;
  std::optional<int> threads;
};

namespace detail {

// Stream indices below the run seed.
inline constexpr std::uint64_t kDataStream = 0;
inline constexpr std::uint64_t kChainStream = 1;
inline constexpr std::uint64_t kFilterStream = 2;
inline constexpr std::uint64_t kPredictiveStream = 3;

struct Context {
  RunConfig cfg;
  CliFlags flags;
  std::uint64_t seed = 1;

  std::filesystem::path out_path(const std::string& file) const {
    std::filesystem::create_directories(flags.out);
    return std::filesystem::path(flags.out) / file;
  }
  std::size_t particles() const { return flags.particles.value_or(cfg.execution.particles); }
  int iters() const { return flags.iters.value_or(cfg.execution.iters); }
  int burnin() const { return flags.burnin.value_or(cfg.execution.burnin); }
  int thin() const { return flags.thin.value_or(cfg.execution.thin); }
  int replicates() const { return flags.replicates.value_or(cfg.execution.replicates); }
  int threads() const { return flags.threads.value_or(cfg.execution.threads); }
};

inline Context make_context(const CliFlags& flags) {
  Context ctx{load_config(flags.config), flags, 0};
  ctx.seed = flags.seed.value_or(ctx.cfg.execution.seed);
  if (ctx.particles() < 2) throw ValidationError("--particles must be >= 2");
  if (ctx.iters() < 0 || ctx.burnin() < 0) throw ValidationError("--iters and --burnin must be >= 0");
  if (ctx.thin() < 1) throw ValidationError("--thin must be >= 1");
  if (ctx.replicates() < 1 || ctx.threads() < 1) throw ValidationError("--replicates and --threads must be >= 1");
  return ctx;
}

inline int horizon(const Context& ctx) {
  if (ctx.cfg.execution.T < 1) throw ValidationError("execution.T must be >= 1 when no --data is given");
  return ctx.cfg.execution.T;
}

/// The series from --data, or one simulated from the config on the data stream.
inline std::vector<Count> obtain_series(const Context& ctx, const ModelTemplate& tmpl) {
  if (ctx.flags.data) return load_series(*ctx.flags.data).y;
  SeededRng rng = SeededRng(ctx.seed).child(kDataStream);
  return simulate(tmpl.spec(), tmpl.obs(), horizon(ctx), rng).y;
}

inline std::ofstream open_out(const Context& ctx, const std::string& file) {
  std::ofstream f(ctx.out_path(file));
  if (!f) throw ValidationError("cannot write '" + ctx.out_path(file).string() + "'");
  return f;
}

inline void write_filter_csv(std::ostream& f, const FilterOutput& fo, int m, ObsEdge edge) {
  f << "t,Lambda_ij_pred,q_bar,s2,ll_inc";
  for (int k = 1; k <= m; ++k) f << ",lambda_filt_" << k;
  f << '\n';
  for (std::size_t s = 0; s < fo.steps.size(); ++s) {
    const auto& st = fo.steps[s];
    f << (s + 1) << ',' << fmt_double(st.Lambda_pred(edge.i(), edge.j())) << ',' << fmt_double(st.q_bar) << ',' << fmt_double(st.s2) << ','
      << fmt_double(st.ll_inc);
    for (int k = 0; k < m; ++k) f << ',' << fmt_double(st.lambda_filt[k]);
    f << '\n';
  }
}

inline void write_chain_csv(std::ostream& f, const Chain& chain) {
  f << "iter";
  for (const auto& n : chain.names) f << ',' << n;
  f << ",log_post\n";
  for (Eigen::Index r = 0; r < chain.samples.rows(); ++r) {
    f << (r + 1);
    for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) f << ',' << fmt_double(chain.samples(r, c));
    f << ',' << fmt_double(chain.log_post[static_cast<std::size_t>(r)]) << '\n';
  }
}

inline nlohmann::ordered_json chain_summary(const Chain& chain, const PredictiveCheck& ppc) {
  nlohmann::ordered_json j;
  const Eigen::VectorXd mean = chain.mean();
  const Eigen::VectorXd sd = chain.sd();
  for (std::size_t k = 0; k < chain.names.size(); ++k) {
    j["parameters"][chain.names[k]] = {{"mean", mean[static_cast<Eigen::Index>(k)]},
                                       {"sd", sd[static_cast<Eigen::Index>(k)]}};
  }
  const auto col = [&](const std::string& name) -> std::optional<Eigen::Index> {
    for (std::size_t k = 0; k < chain.names.size(); ++k) {
      if (chain.names[k] == name) return static_cast<Eigen::Index>(k);
    }
    return std::nullopt;
  };
  if (const auto b = col("beta"), g = col("gamma"); b && g && chain.samples.rows() > 0) {
    const Eigen::ArrayXd r0 = chain.samples.col(*b).array() / chain.samples.col(*g).array();
    j["R0_mean"] = r0.mean();
  }
  j["kept_samples"] = chain.samples.rows();
  j["acceptance_rate"] = chain.acceptance_rate;
  j["burn_acceptance_rate"] = chain.burn_acceptance_rate;
  j["proposal_regularized"] = chain.regularized;
  j["ppc_lag1_abs_increment"] = {{"data", ppc.data_stat}, {"predictive_mean", ppc.mean},
                                 {"draws", ppc.draws.size()}};
  return j;
}

inline Chain run_chain(const Context& ctx, const Objective& log_post, SeededRng& rng) {
  RwmOptions opt;
  opt.burn_iters = ctx.burnin();
  opt.main_iters = ctx.iters();
  opt.thin = ctx.thin();
  opt.burn_step_var = ctx.cfg.estimation.burn_step_var;
  return rwm_chain(log_post, ctx.cfg.param_space(), opt, rng);
}

inline void require_free_parameters(const Context& ctx) {
  if (ctx.cfg.estimation.parameters.empty()) throw ValidationError("estimation.parameters is empty");
}

inline int finish_chain(const Context& ctx, const ModelTemplate& tmpl, const Chain& chain, std::span<const Count> y,
                        std::ostream& out) {
  SeededRng ppc_rng = SeededRng(ctx.seed).child(kPredictiveStream);
  const int draws = static_cast<int>(std::min<Eigen::Index>(200, chain.samples.rows()));
  const auto ppc = posterior_predictive(tmpl, chain, y, draws, ppc_rng);
  auto f = open_out(ctx, "chain.csv");
  write_chain_csv(f, chain);
  const auto summary = chain_summary(chain, ppc);
  auto js = open_out(ctx, "chain_summary.json");
  js << summary.dump(2) << '\n';
  out << summary.dump(2) << '\n';
  return 0;
}

}  // namespace detail

/// trajectory.csv (t, x_1..x_m, Z_ij, q, y; row t=0 holds x_0) and series.csv (t, y).
inline int cmd_simulate(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  SeededRng rng = SeededRng(ctx.seed).child(detail::kDataStream);
  const auto traj = simulate(tmpl.spec(), tmpl.obs(), detail::horizon(ctx), rng);
  const int m = tmpl.spec().m();
  const auto e = tmpl.spec().edge;
  auto f = detail::open_out(ctx, "trajectory.csv");
  f << "t";
  for (int k = 1; k <= m; ++k) f << ",x_" << k;
  f << ",Z_" << e.from << '_' << e.to << ",q,y\n";
  for (int t = 0; t <= traj.T(); ++t) {
    f << t;
    for (int k = 0; k < m; ++k) f << ',' << traj.x(t, k);
    if (t == 0) {
      f << ",,,\n";
      continue;
    }
    const auto s = static_cast<std::size_t>(t - 1);
    f << ',' << traj.Z[s](e.i(), e.j()) << ',' << fmt_double(traj.q[s]) << ',' << traj.y[s] << '\n';
  }
  auto sf = detail::open_out(ctx, "series.csv");
  write_series(sf, traj.y);
  out << "wrote " << ctx.out_path("trajectory.csv").string() << " and " << ctx.out_path("series.csv").string() << '\n';
  return 0;
}

namespace detail {

inline int filter_command(const CliFlags& flags, std::ostream& out, const std::string& file) {
  const auto ctx = make_context(flags);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto y = obtain_series(ctx, tmpl);
  const auto fo = run_filter(tmpl.spec(), tmpl.obs(), y);
  auto f = open_out(ctx, file);
  write_filter_csv(f, fo, tmpl.spec().m(), tmpl.spec().edge);
  out << "total_ll " << fmt_double(fo.total_ll) << '\n';
  if (fo.flagged()) {
    for (std::size_t s = 0; s < fo.steps.size(); ++s) {
      if (fo.steps[s].flagged) {
        throw NumericalError("log-likelihood is -inf: positive count on an edge with zero intensity at t=" +
                                 std::to_string(s + 1),
                             static_cast<std::ptrdiff_t>(s + 1));
      }
    }
  }
  return 0;
}

}  // namespace detail

/// filter.csv: t, Lambda_ij_pred, q_bar, s2, ll_inc, lambda_filt_1..m.
inline int cmd_filter(const CliFlags& flags, std::ostream& out) { return detail::filter_command(flags, out, "filter.csv"); }

/// loglik.csv with the filter columns; total log-likelihood on stdout.
inline int cmd_loglik(const CliFlags& flags, std::ostream& out) { return detail::filter_command(flags, out, "loglik.csv"); }

/// pf_ess.csv (t, ess, log_normalizer, resampled) and pf_summary.json.
inline int cmd_pf_loglik(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto y = detail::obtain_series(ctx, tmpl);
  SeededRng rng = SeededRng(ctx.seed).child(detail::kFilterStream);
  const auto start = std::chrono::steady_clock::now();
  const auto pf = run_bpf(tmpl.spec(), tmpl.obs(), y, ctx.particles(), rng);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  auto f = detail::open_out(ctx, "pf_ess.csv");
  f << "t,ess,log_normalizer,resampled\n";
  for (std::size_t s = 0; s < pf.ess_trace.size(); ++s) {
    f << (s + 1) << ',' << fmt_double(pf.ess_trace[s]) << ',' << fmt_double(pf.log_normalizers[s]) << ','
      << (pf.resampled[s] ? 1 : 0) << '\n';
  }
  nlohmann::ordered_json j;
  j["log_likelihood"] = pf.log_likelihood;
  j["particles"] = ctx.particles();
  j["T"] = y.size();
  j["wall_clock_seconds"] = secs;
  auto js = detail::open_out(ctx, "pf_summary.json");
  js << j.dump(2) << '\n';
  out << j.dump(2) << '\n';
  return 0;
}

/// One fit (mle.json) or, with R > 1 replicates, R simulate-and-fit runs in parallel:
/// mle_replicates.csv (replicate, params..., loglik, cycles) and mle_summary.csv (parameter, mean, sd).
inline int cmd_fit_mle(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  detail::require_free_parameters(ctx);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto space = ctx.cfg.param_space();
  const auto names = space.names();
  CoordinateAscentOptions opt;
  opt.tol = ctx.cfg.estimation.tol;
  opt.max_cycles = ctx.cfg.estimation.max_cycles;
  const int R = ctx.replicates();

  if (R == 1) {
    const auto y = detail::obtain_series(ctx, tmpl);
    const auto res = coordinate_ascent(make_loglik_objective(tmpl, names, y), space, opt);
    nlohmann::ordered_json j;
    for (std::size_t k = 0; k < names.size(); ++k) j["parameters"][names[k]] = res.params[k];
    j["loglik"] = res.value;
    j["cycles"] = res.cycles;
    auto js = detail::open_out(ctx, "mle.json");
    js << j.dump(2) << '\n';
    out << j.dump(2) << '\n';
    return 0;
  }

  if (ctx.flags.data) throw ValidationError("--replicates > 1 simulates its own data; drop --data");
  const auto fits = replicate_mle(tmpl, space, detail::horizon(ctx), R, ctx.seed, ctx.threads(), opt);
  auto f = detail::open_out(ctx, "mle_replicates.csv");
  f << "replicate";
  for (const auto& n : names) f << ',' << n;
  f << ",loglik,cycles\n";
  for (std::size_t r = 0; r < fits.size(); ++r) {
    f << (r + 1);
    for (double v : fits[r].params) f << ',' << fmt_double(v);
    f << ',' << fmt_double(fits[r].value) << ',' << fits[r].cycles << '\n';
  }
  const auto summary = summarize_fits(fits);
  auto sf = detail::open_out(ctx, "mle_summary.csv");
  sf << "parameter,truth,mean,sd\n";
  out << "parameter      truth            mean(sd)\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double truth = tmpl.get(names[k]);
    sf << names[k] << ',' << fmt_double(truth) << ',' << fmt_double(summary[k].mean) << ','
       << fmt_double(summary[k].sd) << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %-16.6g %.4g(%.3g)\n", names[k].c_str(), truth, summary[k].mean,
                  summary[k].sd);
    out << line;
  }
  return 0;
}

/// Random-walk Metropolis on prior + LawPAL/PAL likelihood: chain.csv and chain_summary.json.
inline int cmd_fit_mh(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  detail::require_free_parameters(ctx);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto y = detail::obtain_series(ctx, tmpl);
  SeededRng rng = SeededRng(ctx.seed).child(detail::kChainStream);
  const auto chain = detail::run_chain(ctx, make_log_posterior(tmpl, ctx.cfg.estimation.parameters, y), rng);
  return detail::finish_chain(ctx, tmpl, chain, y, out);
}

/// Particle marginal Metropolis-Hastings with a bootstrap filter of --particles particles.
inline int cmd_fit_pmmh(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  detail::require_free_parameters(ctx);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto y = detail::obtain_series(ctx, tmpl);
  SeededRng rng = SeededRng(ctx.seed).child(detail::kChainStream);
  SeededRng pf_rng = SeededRng(ctx.seed).child(detail::kFilterStream);
  {
    // Surface degeneracy at the initial point with its step index.
    SeededRng probe = pf_rng.child(0);
    const auto init = tmpl.with(ctx.cfg.param_space().names(), ctx.cfg.param_space().initial());
    (void)run_bpf(init.spec(), init.obs(), y, ctx.particles(), probe);
  }
  const auto log_post = make_pf_log_posterior(tmpl, ctx.cfg.estimation.parameters, y, ctx.particles(), pf_rng);
  const auto chain = detail::run_chain(ctx, log_post, rng);
  return detail::finish_chain(ctx, tmpl, chain, y, out);
}

/// limit.csv: t, nu_1..nu_m, N_i_j for all i, j (row-major), t = 1..T.
inline int cmd_limit(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto states = limit_recursion(tmpl.spec(), detail::horizon(ctx));
  const int m = tmpl.spec().m();
  auto f = detail::open_out(ctx, "limit.csv");
  f << "t";
  for (int k = 1; k <= m; ++k) f << ",nu_" << k;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= m; ++j) f << ",N_" << i << '_' << j;
  }
  f << '\n';
  for (std::size_t s = 0; s < states.size(); ++s) {
    f << (s + 1);
    for (int k = 0; k < m; ++k) f << ',' << fmt_double(states[s].nu[k]);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) f << ',' << fmt_double(states[s].N(i, j));
    }
    f << '\n';
  }
  out << "wrote " << ctx.out_path("limit.csv").string() << '\n';
  return 0;
}

struct BenchResult {
  double lawpal_seconds = 0.0;  // per evaluation
  double bpf_seconds = 0.0;     // per evaluation
  double lawpal_ll = 0.0;
  double bpf_ll = 0.0;
  double ratio() const { return bpf_seconds / lawpal_seconds; }
};

/// Wall-clock of one deterministic filter evaluation versus one bootstrap filter evaluation.
inline BenchResult bench_loglik(const ModelTemplate& tmpl, std::span<const Count> y, std::size_t particles,
                                SeededRng& rng, int bpf_reps = 3) {
  using clock = std::chrono::steady_clock;
  BenchResult r;
  int reps = 0;
  const auto t0 = clock::now();
  double elapsed = 0.0;
  do {
    r.lawpal_ll = filter_loglik(tmpl.spec(), tmpl.obs(), y);
    ++reps;
    elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  } while (elapsed < 0.2);
  r.lawpal_seconds = elapsed / reps;
  const auto t1 = clock::now();
  for (int k = 0; k < bpf_reps; ++k) r.bpf_ll = run_bpf(tmpl.spec(), tmpl.obs(), y, particles, rng).log_likelihood;
  r.bpf_seconds = std::chrono::duration<double>(clock::now() - t1).count() / bpf_reps;
  return r;
}

/// bench.json with per-evaluation timings and the speed-up ratio.
inline int cmd_bench(const CliFlags& flags, std::ostream& out) {
  const auto ctx = detail::make_context(flags);
  const auto tmpl = ModelTemplate::from_config(ctx.cfg);
  const auto y = detail::obtain_series(ctx, tmpl);
  SeededRng rng = SeededRng(ctx.seed).child(detail::kFilterStream);
  const auto r = bench_loglik(tmpl, y, ctx.particles(), rng);
  nlohmann::ordered_json j;
  j["T"] = y.size();
  j["particles"] = ctx.particles();
  j["lawpal_seconds"] = r.lawpal_seconds;
  j["bpf_seconds"] = r.bpf_seconds;
  j["speedup"] = r.ratio();
  j["lawpal_loglik"] = r.lawpal_ll;
  j["bpf_loglik"] = r.bpf_ll;
  auto js = detail::open_out(ctx, "bench.json");
  js << j.dump(2) << '\n';
  out << j.dump(2) << '\n';
  return 0;
}

/// Dispatches a subcommand and maps exceptions to exit codes, printing the message to `err`.
inline int run_command(const std::string& name, const CliFlags& flags, std::ostream& out, std::ostream& err) {
  try {
    if (name == "simulate") return cmd_simulate(flags, out);
    if (name == "filter") return cmd_filter(flags, out);
    if (name == "loglik") return cmd_loglik(flags, out);
    if (name == "pf-loglik") return cmd_pf_loglik(flags, out);
    if (name == "fit-mle") return cmd_fit_mle(flags, out);
    if (name == "fit-mh") return cmd_fit_mh(flags, out);
    if (name == "fit-pmmh") return cmd_fit_pmmh(flags, out);
    if (name == "limit") return cmd_limit(flags, out);
    if (name == "bench") return cmd_bench(flags, out);
    err << "error: unknown subcommand '" << name << "'\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error";
    if (e.step() >= 0) err << " at step " << e.step();
    err << ": " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lawpal
