#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lawpal/cli_harness.hpp"

using namespace lawpal;
namespace fs = std::filesystem;

namespace {

const char* kSirConfig = R"({
  "model": {"kernel": "SIR", "params": {"beta": 0.3, "gamma": 0.2}, "n": 5000,
            "pi0": [0.99, 0.01, 0.0], "obs_edge": [1, 2]},
  "observation": {"type": "trunc_normal", "mu_q": 0.5, "sigma2_q": 0.1},
  "estimation": {"parameters": [
      {"name": "beta", "lower": 0.05, "upper": 1.0, "init": 0.25, "transform": "log",
       "prior": {"type": "trunc_normal", "mu": 0, "sigma2": 10, "lower": 0}},
      {"name": "gamma", "lower": 0.05, "upper": 1.0, "init": 0.25, "transform": "log",
       "prior": {"type": "trunc_normal", "mu": 0, "sigma2": 10, "lower": 0}}]},
  "execution": {"seed": 11, "T": 40, "particles": 100, "iters": 200, "burnin": 100}
})";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lawpal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& body) {
    const auto p = dir_ / name;
    std::ofstream(p) << body;
    return p.string();
  }

  CliFlags flags(const std::string& config, const std::string& out = "out") {
    CliFlags f;
    f.config = config;
    f.out = (dir_ / out).string();
    return f;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  int run(const std::string& cmd, const CliFlags& f, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = run_command(cmd, f, out, err);
    if (err_text) *err_text = err.str();
    return code;
  }

  fs::path dir_;
};

}  // namespace

TEST(ParseSeries, AcceptsValidAndRejectsMalformed) {
  std::istringstream ok("\xEF\xBB\xBFt,y\r\n1,3\r\n2,0\n3,10\n");
  EXPECT_EQ(parse_series(ok).y, (std::vector<Count>{3, 0, 10}));
  std::istringstream gap("t,y\n1,3\n3,4\n");
  EXPECT_THROW(parse_series(gap), ValidationError);
  std::istringstream neg("t,y\n1,-3\n");
  EXPECT_THROW(parse_series(neg), ValidationError);
  std::istringstream header("time,count\n1,3\n");
  EXPECT_THROW(parse_series(header), ValidationError);
  std::istringstream junk("t,y\n1,3.5\n");
  EXPECT_THROW(parse_series(junk), ValidationError);
  std::istringstream empty("t,y\n");
  EXPECT_THROW(parse_series(empty), ValidationError);
}

TEST(ParseConfig, RejectsUnknownKeysAndBadValues) {
  auto j = nlohmann::json::parse(kSirConfig);
  EXPECT_NO_THROW(parse_config(j));
  auto extra = j;
  extra["model"]["colour"] = "red";
  EXPECT_THROW(parse_config(extra), ValidationError);
  auto bad_pi = j;
  bad_pi["model"]["pi0"] = {0.99, 0.0, 0.1};
  EXPECT_THROW(ModelTemplate::from_config(parse_config(bad_pi)), ValidationError);
  auto bad_param = j;
  bad_param["model"]["params"]["rho"] = 0.1;
  EXPECT_THROW(ModelTemplate::from_config(parse_config(bad_param)), ValidationError);
  auto bad_obs = j;
  bad_obs["observation"] = {{"type", "fixed"}, {"q", 1.5}};
  EXPECT_THROW(parse_config(bad_obs), ValidationError);
  auto bad_free = j;
  bad_free["estimation"]["parameters"][0]["name"] = "rho";
  EXPECT_THROW(ModelTemplate::from_config(parse_config(bad_free)), ValidationError);
  auto bad_bounds = j;
  bad_bounds["estimation"]["parameters"][0]["init"] = 5.0;
  EXPECT_THROW(parse_config(bad_bounds), ValidationError);
}

TEST(ModelTemplateTest, SeedsSetInitialDistribution) {
  auto j = nlohmann::json::parse(R"({
    "model": {"kernel": "SEIRControl",
              "params": {"beta": 1.5, "rho": 0.17, "gamma": 0.33, "alpha": 0.1, "b": 0.24, "d": 3.3, "t_star": 23},
              "n": 1000, "obs_edge": [2, 3],
              "initial_seeds": [{"compartment": 2, "name": "e0", "value": 15}, {"compartment": 3, "name": "i0", "value": 25}]},
    "observation": {"type": "fixed", "q": 0.5}})");
  const auto tmpl = ModelTemplate::from_config(parse_config(j));
  EXPECT_NEAR(tmpl.spec().pi0.entries()[0], 0.96, 1e-15);
  EXPECT_NEAR(tmpl.spec().pi0.entries()[1], 0.015, 1e-15);
  EXPECT_NEAR(tmpl.spec().pi0.entries()[2], 0.025, 1e-15);
  const std::vector<std::string> names{"i0", "q", "beta"};
  const std::vector<double> values{50.0, 0.3, 2.0};
  const auto b = tmpl.with(names, values);
  EXPECT_NEAR(b.spec().pi0.entries()[2], 0.05, 1e-15);
  EXPECT_NEAR(b.spec().pi0.entries()[0], 0.935, 1e-15);
  EXPECT_EQ(std::get<FixedReporting>(b.obs()).q, 0.3);
  EXPECT_EQ(b.spec().kernel.get("beta"), 2.0);
  const std::vector<std::string> too_many{"i0"};
  const std::vector<double> huge{2000.0};
  EXPECT_THROW(tmpl.with(too_many, huge), ValidationError);
}

TEST_F(CliTest, SimulateRoundTripReproducesFilter) {
  const auto cfg = write("c.json", kSirConfig);
  ASSERT_EQ(run("simulate", flags(cfg)), 0);
  ASSERT_EQ(run("filter", flags(cfg, "direct")), 0);
  auto f = flags(cfg, "reloaded");
  f.data = (dir_ / "out" / "series.csv").string();
  ASSERT_EQ(run("filter", f), 0);
  EXPECT_EQ(slurp(dir_ / "direct" / "filter.csv"), slurp(dir_ / "reloaded" / "filter.csv"));
  const auto header = slurp(dir_ / "direct" / "filter.csv");
  EXPECT_EQ(header.rfind("t,Lambda_ij_pred,q_bar,s2,ll_inc,lambda_filt_1,lambda_filt_2,lambda_filt_3\n", 0), 0u);
}

TEST_F(CliTest, OutputsAreDeterministicPerSeed) {
  const auto cfg = write("c.json", kSirConfig);
  for (const char* cmd : {"simulate", "loglik", "pf-loglik", "fit-mh", "limit"}) {
    ASSERT_EQ(run(cmd, flags(cfg, "a")), 0) << cmd;
    ASSERT_EQ(run(cmd, flags(cfg, "b")), 0) << cmd;
  }
  for (const char* file : {"trajectory.csv", "series.csv", "loglik.csv", "pf_ess.csv", "chain.csv", "limit.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / file), slurp(dir_ / "b" / file)) << file;
  }
  auto other = flags(cfg, "c");
  other.seed = 12;
  ASSERT_EQ(run("simulate", other), 0);
  EXPECT_NE(slurp(dir_ / "a" / "series.csv"), slurp(dir_ / "c" / "series.csv"));
}

TEST_F(CliTest, ExitCodes) {
  const auto bad = write("bad.json", R"({"model": {"kernel": "SIR"}, "surprise": 1})");
  std::string err;
  EXPECT_EQ(run("filter", flags(bad), &err), 1);
  EXPECT_NE(err.find("surprise"), std::string::npos);
  // No infectious individuals: a positive count at t=2 is impossible.
  auto j = nlohmann::json::parse(kSirConfig);
  j["model"]["pi0"] = {1.0, 0.0, 0.0};
  const auto cfg = write("c.json", j.dump());
  const auto data = write("y.csv", "t,y\n1,0\n2,4\n3,0\n");
  auto f = flags(cfg);
  f.data = data;
  EXPECT_EQ(run("loglik", f, &err), 2);
  EXPECT_NE(err.find("step 2"), std::string::npos);
  EXPECT_EQ(run("pf-loglik", f, &err), 2);
  EXPECT_NE(err.find("step 2"), std::string::npos);
  EXPECT_EQ(run("fit-mh", f, &err), 2);
  EXPECT_EQ(run("nonsense", f, &err), 1);
  const auto gap = write("gap.csv", "t,y\n1,0\n3,4\n");
  f.data = gap;
  EXPECT_EQ(run("loglik", f, &err), 1);
}

TEST_F(CliTest, FitMleReplicatesSummary) {
  const auto cfg = write("c.json", kSirConfig);
  auto f = flags(cfg);
  f.replicates = 3;
  f.threads = 2;
  ASSERT_EQ(run("fit-mle", f), 0);
  const auto summary = slurp(dir_ / "out" / "mle_summary.csv");
  EXPECT_EQ(summary.rfind("parameter,truth,mean,sd\nbeta,", 0), 0u);
  std::istringstream reps(slurp(dir_ / "out" / "mle_replicates.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(reps, line)) ++rows;
  EXPECT_EQ(rows, 4);
  // Thread count does not change results.
  auto g = flags(cfg, "serial");
  g.replicates = 3;
  g.threads = 1;
  ASSERT_EQ(run("fit-mle", g), 0);
  EXPECT_EQ(summary, slurp(dir_ / "serial" / "mle_summary.csv"));
}

TEST_F(CliTest, FitMleSingleAndChains) {
  const auto cfg = write("c.json", kSirConfig);
  ASSERT_EQ(run("fit-mle", flags(cfg)), 0);
  const auto mle = nlohmann::json::parse(slurp(dir_ / "out" / "mle.json"));
  EXPECT_TRUE(mle["parameters"].contains("beta"));
  auto j = nlohmann::json::parse(kSirConfig);
  j["estimation"]["parameters"][0]["init"] = 0.3;
  j["estimation"]["parameters"][1]["init"] = 0.2;
  auto f = flags(write("near.json", j.dump()), "pmmh");
  f.iters = 40;
  f.burnin = 20;
  f.particles = 400;
  std::string err;
  ASSERT_EQ(run("fit-pmmh", f, &err), 0) << err;
  const auto summary = nlohmann::json::parse(slurp(dir_ / "pmmh" / "chain_summary.json"));
  EXPECT_EQ(summary["kept_samples"], 40);
  EXPECT_TRUE(summary.contains("R0_mean"));
  EXPECT_TRUE(summary["ppc_lag1_abs_increment"].contains("predictive_mean"));
}

TEST_F(CliTest, LimitWithoutTransmissionIsConstant) {
  auto j = nlohmann::json::parse(kSirConfig);
  j["model"]["params"]["beta"] = 0.0;
  const auto cfg = write("c.json", j.dump());
  ASSERT_EQ(run("limit", flags(cfg)), 0);
  std::istringstream in(slurp(dir_ / "out" / "limit.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("t,nu_1,nu_2,nu_3,N_1_1,", 0), 0u);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_NEAR(std::stod(line.substr(line.find(',') + 1)), 0.99, 1e-15);
  }
  EXPECT_EQ(rows, 40);
}

TEST_F(CliTest, BenchReportsRatio) {
  const auto cfg = write("c.json", kSirConfig);
  ASSERT_EQ(run("bench", flags(cfg)), 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "out" / "bench.json"));
  EXPECT_GT(j["speedup"].get<double>(), 1.0);
}

TEST_F(CliTest, ExecutableExitCodes) {
  const auto cfg = write("c.json", kSirConfig);
  const std::string exe = LAWPAL_CLI_PATH;
  const auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status(exe + " loglik --config " + cfg + " --out " + (dir_ / "x").string()), 0);
  EXPECT_EQ(status(exe + " loglik --config " + cfg + " --thin 0"), 1);
  EXPECT_EQ(status(exe + " frobnicate --config " + cfg), 1);
  EXPECT_EQ(status(exe + " loglik"), 1);
}
