#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "gibbslab/cli.hpp"

using namespace gibbslab;
using gibbslab::cli::run_command;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gibbslab_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json jparse(const std::string& s) { return json::parse(s); }

// Rows of a CSV as vectors of fields (header included).
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) row.push_back(f);
    out.push_back(row);
  }
  return out;
}

std::string config_error(const std::string& cmd, const json& cfg) {
  try {
    run_command(cmd, cfg, {}, scratch("err"));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const json kPoissonSample = jparse(R"({
  "window": {"half_side": 2},
  "model": {"interaction": {"kind": "none"}},
  "n_snapshots": 4
})");

}  // namespace

TEST(ConfigParse, InvalidJsonReportsLineAndColumn) {
  try {
    parse_config_text("{\n  \"seed\": 1,\n  \"window\": {half_side: 2}\n}", "cfg.json");
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json:3:"), std::string::npos) << e.what();
  }
}

TEST(ConfigParse, UnknownFieldsAndTypesNameTheirPath) {
  json c = kPoissonSample;
  c["window"]["halfside"] = 2;
  EXPECT_NE(config_error("sample", c).find("config.window.halfside: unknown field"), std::string::npos);
  c = kPoissonSample;
  c["n_snapshots"] = "four";
  EXPECT_NE(config_error("sample", c).find("config.n_snapshots"), std::string::npos);
  c = kPoissonSample;
  c["experiment"] = "decay";
  EXPECT_NE(config_error("sample", c).find("config.experiment"), std::string::npos);
  EXPECT_NE(config_error("no-such-command", c).find("unknown command"), std::string::npos);
}

TEST(ConfigParse, IntensityOnlyForPoisson) {
  json c = kPoissonSample;
  c["model"] = jparse(R"({"interaction": {"kind": "strauss", "strength": 1, "range": 0.5}, "intensity": 2})");
  EXPECT_NE(config_error("sample", c).find("config.model.intensity"), std::string::npos);
}

TEST(CmdSample, PoissonSnapshotsAndEchoedDefaults) {
  const auto out = scratch("sample");
  cli::Overrides ov;
  ov.seed = 99;
  run_command("sample", kPoissonSample, ov, out);
  const json resolved = jparse(slurp(out / "resolved_config.json"));
  EXPECT_EQ(resolved["seed"], 99);
  EXPECT_EQ(resolved["experiment"], "sample");
  EXPECT_EQ(resolved["method"], "mh");
  EXPECT_EQ(resolved["window"]["boundary"], "periodic");
  EXPECT_EQ(resolved["window"]["dim"], 2);
  EXPECT_EQ(resolved["model"]["intensity"], 1.0);
  EXPECT_EQ(resolved["sampler"]["burn_in"], 100000);
  EXPECT_EQ(resolved["sampler"]["gap"], 1000);

  const json manifest = jparse(slurp(out / "manifest.json"));
  ASSERT_EQ(manifest["snapshots"].size(), 4u);
  EXPECT_EQ(manifest["schema_version"], kSchemaVersion);
  for (const auto& s : manifest["snapshots"]) {
    std::ifstream f(out / s["file"].get<std::string>());
    const auto c = read_snapshot(f);
    EXPECT_EQ(c.size(), s["n_points"].get<std::size_t>());
    EXPECT_EQ(c.window().half_side(), 2.0);
  }
}

TEST(CmdSample, StraussSnapshotsAreRepulsive) {
  const auto out = scratch("strauss");
  const json c = jparse(R"({
    "window": {"half_side": 3},
    "model": {"interaction": {"kind": "strauss", "strength": 3, "range": 0.6}},
    "n_snapshots": 40,
    "sampler": {"burn_in": 20000, "gap": 500}
  })");
  run_command("sample", c, {}, out);
  const json manifest = jparse(slurp(out / "manifest.json"));
  EXPECT_LT(manifest["close_pair_ratio"].get<double>(), 0.5);
}

TEST(CmdSample, CtmcWritesTrajectories) {
  const auto out = scratch("ctmc");
  json c = kPoissonSample;
  c["method"] = "ctmc";
  run_command("sample", c, {}, out);
  std::ifstream f(out / "trajectory_r000.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(f, line));
  EXPECT_NO_THROW(json::parse(line));
}

TEST(CmdSample, FreeWindowNeedsBoundaryPoints) {
  json c = kPoissonSample;
  c["window"]["boundary"] = "free";
  EXPECT_NE(config_error("sample", c).find("boundary_points"), std::string::npos);
  c["boundary_points"] = json::array();
  EXPECT_EQ(config_error("sample", c), "");
}

TEST(CmdSample, RerunsAreByteIdenticalAcrossThreadCounts) {
  const json c = jparse(R"({
    "window": {"half_side": 2},
    "model": {"interaction": {"kind": "strauss", "strength": 1, "range": 0.5}},
    "n_snapshots": 6,
    "replicas": 3,
    "sampler": {"burn_in": 2000, "gap": 100}
  })");
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  run_command("sample", c, {}, a, 1);
  run_command("sample", jparse(slurp(a / "resolved_config.json")), {}, b, 3);
  for (const auto& e : fs::directory_iterator(a)) EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
}

TEST(CmdMgfCheck, ZeroLambdaAndOverflowRows) {
  const auto out = scratch("mgf");
  const json c = jparse(R"({
    "window": {"half_side": 2},
    "model": {"interaction": {"kind": "none"}},
    "kernel": {"amplitude": 1, "radius": 0.5},
    "n": 1.5,
    "quad_spacing": 0.0625,
    "lambda_grid": [0, 0.1, 1000],
    "n_samples": 200
  })");
  run_command("mgf-check", c, {}, out);
  const auto rows = csv_rows(out / "mgf_check.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0][0], "schema_version");
  bool margin0 = false, flagged = false, margin_at_overflow = false;
  for (const auto& r : rows) {
    if (r[1] == "margin" && r[2] == "0") margin0 = r[3] == "0" && r[4] == "0";
    if (r[1] == "overflow" && std::stod(r[2]) == 1000.0) flagged = true;
    if (r[1] == "margin" && r[2] != "lambda" && std::stod(r[2]) == 1000.0) margin_at_overflow = true;
  }
  EXPECT_TRUE(margin0);
  EXPECT_TRUE(flagged);
  EXPECT_FALSE(margin_at_overflow);
}

TEST(CmdDvBound, AnalyticModeRequiresCnu) {
  const json c = jparse(R"({
    "window": {"half_side": 2},
    "mu": {"intensity": 2}, "nu": {},
    "modes": ["analytic"]
  })");
  EXPECT_NE(config_error("dv-bound", c).find("config.c_nu"), std::string::npos);
}

TEST(CmdDvBound, IdenticalSamplersGiveNoSeparationReport) {
  const auto out = scratch("dv_same");
  const json c = jparse(R"({
    "window": {"half_side": 1.5},
    "mu": {}, "nu": {},
    "kernels": [{"family": "box", "amplitude": 1, "radius": 0.5}],
    "c_nu": 1,
    "n": 1,
    "n_samples": 400
  })");
  const json r = run_command("dv-bound", c, {}, out);
  EXPECT_FALSE(r["separation"]["separated"].get<bool>());
  EXPECT_TRUE(r["analytic"].is_null());
  EXPECT_TRUE(r["empirical"].is_null());
  EXPECT_EQ(r["reference_specific_entropy"].get<double>(), 0.0);
  EXPECT_EQ(jparse(slurp(out / "dv_bound.json")), r);
}

TEST(CmdDvBound, PoissonPairSeparatesAndBoundsTheEntropy) {
  const auto out = scratch("dv_pair");
  const json c = jparse(R"({
    "window": {"half_side": 2.5},
    "mu": {"intensity": 2}, "nu": {},
    "kernels": [{"family": "box", "amplitude": 1, "radius": 0.5}],
    "c_nu": 1,
    "n": 2,
    "n_samples": 600
  })");
  const json r = run_command("dv-bound", c, {}, out);
  ASSERT_TRUE(r["separation"]["separated"].get<bool>());
  EXPECT_EQ(r["separation"]["sign"], -1);
  const double a = r["analytic"]["bound_value"].get<double>();
  const double e = r["empirical"]["bound_value"].get<double>();
  const double e_se = r["empirical"]["bound_std_error"].get<double>();
  EXPECT_GT(a, 0.0);
  EXPECT_GT(e, 3.0 * e_se);
  EXPECT_LE(e, poisson_specific_entropy(2.0) + 3.0 * e_se);
}

TEST(CmdDecay, FlatLineAndUnsortedGrid) {
  const auto out = scratch("decay");
  const json c = jparse(R"({"window": {"half_side": 2}, "a0": 1, "t_grid": [0.5, 1], "replicas": 50})");
  run_command("decay", c, {}, out);
  const auto rows = csv_rows(out / "decay.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0][1], "t");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][6]), 0.0);  // rate_analytic
    EXPECT_NEAR(std::stod(rows[i][2]), 1.0, 3.0 * std::stod(rows[i][3]));
  }
  json bad = c;
  bad["t_grid"] = {1.0, 0.5};
  EXPECT_NE(config_error("decay", bad).find("config.t_grid"), std::string::npos);
}

TEST(CmdPhaseScan, FreeWindowWithoutBoundaryPointsIsRejected) {
  const json c = jparse(R"({"window": {"half_side": 4, "boundary": "free"}})");
  EXPECT_NE(config_error("phase-scan", c).find("boundary_points"), std::string::npos);
  json periodic = c;
  periodic["window"]["boundary"] = "periodic";
  periodic["boundary_points"] = json::object();
  EXPECT_NE(config_error("phase-scan", periodic).find("config.window.boundary"), std::string::npos);
}

TEST(CmdPhaseScan, SmallRunWritesBothFiles) {
  const auto out = scratch("phase");
  const json c = jparse(R"({
    "window": {"half_side": 2.5, "boundary": "free"},
    "boundary_points": {"spacing": 0.5},
    "interaction": {"radius": 0.5, "quad_resolution": 8},
    "gammas": [0.1],
    "core_margin": 1,
    "replicas": 2,
    "samples_per_replica": 3,
    "sampler": {"burn_in": 2000, "gap": 100}
  })");
  run_command("phase-scan", c, {}, out);
  const auto rows = csv_rows(out / "phase_scan.csv");
  ASSERT_EQ(rows.size(), 1u + 2u * 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"schema_version", "gamma", "boundary", "replica", "density", "seed",
                                               "stream"}));
  EXPECT_EQ(csv_rows(out / "phase_scan_summary.csv").size(), 2u);
}

TEST(CmdGnzCheck, ZeroTestFunctionIsExactlyZeroAndMeckeHolds) {
  const auto out = scratch("gnz");
  json c = jparse(R"({
    "window": {"half_side": 2},
    "model": {"intensity": 1.5},
    "test_function": {"kind": "zero"},
    "n_samples": 500
  })");
  json r = run_command("gnz-check", c, {}, out);
  EXPECT_EQ(r["residual"].get<double>(), 0.0);
  EXPECT_EQ(r["std_error"].get<double>(), 0.0);

  c["test_function"]["kind"] = "indicator";
  r = run_command("gnz-check", c, {}, out);
  EXPECT_TRUE(r["within_3se"].get<bool>()) << r.dump();
  const auto rows = csv_rows(out / "gnz_check.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][1], "gnz_residual");
}

#ifdef GIBBSLAB_CLI_PATH
TEST(Executable, ExitCodes) {
  const auto dir = scratch("exe");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad.json") << "{\n  \"window\": [1,\n}";
    std::ofstream(dir / "good.json") << R"({"window": {"half_side": 2}, "n_snapshots": 1})";
    std::ofstream(dir / "invalid.json") << R"({"window": {"half_side": -2}})";
  }
  const std::string exe = GIBBSLAB_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + exe + "\" " + args + " --out \"" + (dir / "out").string() + "\" >\"" +
                            (dir / "stdout").string() + "\" 2>\"" + (dir / "stderr").string() + "\"";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  EXPECT_EQ(run("sample --config \"" + (dir / "bad.json").string() + "\""), 2);
  EXPECT_NE(slurp(dir / "stderr").find("bad.json:3:"), std::string::npos) << slurp(dir / "stderr");
  EXPECT_EQ(run("sample --config \"" + (dir / "invalid.json").string() + "\""), 2);
  EXPECT_NE(slurp(dir / "stderr").find("config.window.half_side"), std::string::npos);
  EXPECT_EQ(run("sample --seed 5 --threads 2 --config \"" + (dir / "good.json").string() + "\""), 0);
  EXPECT_EQ(jparse(slurp(dir / "out" / "resolved_config.json"))["seed"], 5);
  EXPECT_EQ(run("sample"), 2);
}
#endif
