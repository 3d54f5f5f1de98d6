#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pvn/config.hpp"

namespace pvn {
namespace {

namespace fs = std::filesystem;

const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "pvn_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string err;
};

CliResult pvnlab(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string(PVNLAB_EXE) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

TEST(Config, ProfilesCarryTheTableValues) {
  const auto lin = profile_defaults("cartpole-linear");
  EXPECT_EQ(lin.num_policies, 1000u);
  EXPECT_EQ(lin.returns_per_policy, 100u);
  EXPECT_EQ(lin.bins, 41u);
  EXPECT_EQ(lin.return_limit, 30.0);
  EXPECT_EQ(lin.train_steps, 3000u);
  EXPECT_EQ(lin.pvn_lr, 0.003);
  EXPECT_EQ(lin.batch_size, 32u);
  EXPECT_EQ(lin.temperature, 3.0);
  EXPECT_EQ(lin.pvn_hidden, (std::vector<std::size_t>{80}));
  const auto mlp = profile_defaults("cartpole-mlp");
  EXPECT_EQ(mlp.policy_hidden, (std::vector<std::size_t>{30}));
  EXPECT_EQ(mlp.num_probes, 20u);
  EXPECT_EQ(mlp.ascent_steps, 400u);
  EXPECT_EQ(mlp.ascent_lr, 0.001);
  const auto poly = profile_defaults("polytope");
  EXPECT_EQ(poly.pvn_hidden, (std::vector<std::size_t>{50}));
  EXPECT_EQ(poly.pvn_lr, 0.01);
  EXPECT_EQ(poly.pvn_optimizer, OptimizerKind::rmsprop);
  EXPECT_EQ(poly.train_steps, 20000u);
  EXPECT_EQ(poly.gamma, 0.8);
  EXPECT_EQ(poly.polytope_train, 20u);
  EXPECT_EQ(poly.start_policy, (std::vector<double>{0.5, 0.0}));
}

TEST(Config, EmitIsIdempotent) {
  for (const char* profile : {"cartpole-linear", "cartpole-mlp", "polytope"}) {
    ExperimentConfig c = profile_defaults(profile);
    c.pvn_lr = 0.1 + 0.2;  // not exactly representable in short decimal form
    c.d0 = {0.3, 0.7};
    const std::string once = emit_config(c);
    const ExperimentConfig back = build_config(parse_config_text(once), "cartpole-linear");
    EXPECT_EQ(back, c);
    EXPECT_EQ(emit_config(back), once);
  }
}

TEST(Config, LaterAssignmentsWin) {
  const auto c = build_config({{"seed", "3"}, {"profile", "cartpole-mlp"}, {"seed", "5"}}, "polytope");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.ascent_steps, 400u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(build_config({{"no_such_key", "1"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"bins", "zero"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"bins", "0"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"gamma", "1.0"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"temperature", "-1"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"profile", "swimmer"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"pvn_mode", "pixels"}}, "polytope"), ConfigError);
  EXPECT_THROW(build_config({{"d0", "[0.5, 0.6]"}}, "polytope"), ConfigError);
  EXPECT_THROW(split_assignment("novalue"), ConfigError);
  EXPECT_THROW(parse_config_text("seed = 1\njunk line\n"), ConfigError);
}

TEST(Config, CommentsAndBlankLines) {
  const auto a = parse_config_text("# comment\n\nseed = 4\n  bins=21  \n");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].first, "bins");
  EXPECT_EQ(a[1].second, "21");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(pvnlab("").code, 2);
  EXPECT_EQ(pvnlab("dance").code, 2);
  EXPECT_EQ(pvnlab("polytope --seed notanumber").code, 2);
  EXPECT_EQ(pvnlab("polytope --config " + (scratch() / "missing.cfg").string()).code, 2);
  const CliResult bad_key = pvnlab("polytope --out " + (scratch() / "x").string() + " bogus=1");
  EXPECT_EQ(bad_key.code, 2);
  EXPECT_NE(bad_key.err.find("bogus"), std::string::npos);
  EXPECT_EQ(pvnlab("--help").code, 0);
}

TEST(Cli, MissingInputsExitTwo) {
  const std::string out = (scratch() / "missing").string();
  EXPECT_EQ(pvnlab("train --out " + out).code, 2);
  EXPECT_EQ(pvnlab("ascend --out " + out).code, 2);
  EXPECT_EQ(pvnlab("report --out " + out).code, 2);
}

TEST(Cli, EmptyDatasetExitsThree) {
  const fs::path dir = scratch() / "empty";
  fs::create_directories(dir);
  std::ofstream(dir / "dataset.jsonl").close();
  const CliResult r = pvnlab("train --out " + dir.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("empty dataset"), std::string::npos);
}

TEST(Cli, SchemaMismatchExitsThree) {
  const fs::path dir = scratch() / "schema";
  fs::create_directories(dir);
  std::ofstream(dir / "checkpoint.json") << "{\"mode\": \"flatten\", \"params\": []}";
  EXPECT_EQ(pvnlab("ascend --out " + dir.string()).code, 3);
  std::ofstream(dir / "dataset.jsonl") << "{\"env\":\"cartpole\"}\n";
  EXPECT_EQ(pvnlab("train --out " + dir.string()).code, 3);
}

TEST(Cli, DivergentTrainingExitsFour) {
  const std::string out = (scratch() / "diverge").string();
  ASSERT_EQ(pvnlab("collect --out " + out + " num_policies=20 returns_per_policy=5").code, 0);
  const CliResult r = pvnlab("train --out " + out + " pvn_lr=1e300 train_steps=50");
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, PipelineWritesDocumentedFiles) {
  const fs::path dir = scratch() / "pipeline";
  const std::string common = " --out " + dir.string() + " --seed 3 num_policies=30 returns_per_policy=10 "
                             "train_steps=100 ascent_steps=5 ascent_restarts=2 final_eval_rollouts=5";
  const fs::path cfg = scratch() / "pipeline.cfg";
  std::ofstream(cfg) << "profile = cartpole-linear\nbins = 21\n";
  for (const char* stage : {"collect", "train", "ascend", "report"})
    ASSERT_EQ(pvnlab(std::string(stage) + " --config " + cfg.string() + common).code, 0) << stage;
  for (const char* f : {"dataset.jsonl", "checkpoint.json", "train_report.csv", "traces.csv", "best_policy.json",
                        "histogram.csv", "ascent_curves.csv", "report.svg", "collect.config.txt", "train.config.txt",
                        "ascend.config.txt", "report.config.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "traces.csv").substr(0, 24), "restart,step,j_hat,g_mc\n");
  EXPECT_EQ(slurp(dir / "train_report.csv").substr(0, 23), "step,train_kl,test_kl\n0");
  // The effective config records both the file value and the overrides.
  const std::string eff = slurp(dir / "train.config.txt");
  EXPECT_NE(eff.find("bins = 21\n"), std::string::npos);
  EXPECT_NE(eff.find("seed = 3\n"), std::string::npos);
  // Flags win over the file.
  std::ofstream(cfg) << "seed = 9\n";
  ASSERT_EQ(pvnlab("report --config " + cfg.string() + common).code, 0);
  EXPECT_NE(slurp(dir / "report.config.txt").find("seed = 3\n"), std::string::npos);
}

TEST(Cli, PolytopeRerunIsByteIdentical) {
  const fs::path a = scratch() / "poly_a", b = scratch() / "poly_b";
  const std::string args = " --seed 1 train_steps=300";
  ASSERT_EQ(pvnlab("polytope --out " + a.string() + args).code, 0);
  ASSERT_EQ(pvnlab("polytope --out " + b.string() + args).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    std::string expected = slurp(e.path());
    std::string got = slurp(b / name);
    if (name == "polytope.config.txt") {
      // Only the output directory differs.
      expected.replace(expected.find(a.string()), a.string().size(), b.string());
    }
    EXPECT_EQ(got, expected) << name;
    ++files;
  }
  EXPECT_EQ(files, 9u);
  EXPECT_NE(slurp(a / "summary.json").find("\"exact_end\""), std::string::npos);
  EXPECT_EQ(slurp(a / "polytope.csv").substr(0, 36), "p_a1_s1,p_a1_s2,v_s1,v_s2,j,split\n0.");
}

}  // namespace
}  // namespace pvn
