#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "schoenberg/cli.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code;
  json report;
  std::string summary;
};

Run run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"schoenberg_lab"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : storage) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = schoenberg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  json report;
  try {
    report = json::parse(out.str());
  } catch (const json::exception&) {
  }
  return {code, report, err.str()};
}

std::string temp_path(const std::string& name) { return std::string(SCHOENBERG_TEST_DATA_DIR) + "/" + name; }

double mass_between(const json& measure, double lo, double hi) {
  double mass = 0.0;
  for (const auto& a : measure["atoms"])
    if (a["s"].get<double>() >= lo && a["s"].get<double>() <= hi) mass += a["w"].get<double>();
  return mass;
}

}  // namespace

TEST(Cli, ReportShape) {
  const auto r = run_cli({"cm-check", "gaussian"});
  ASSERT_EQ(r.code, 0);
  for (const char* key : {"command", "config", "results", "pass", "wall_time_ms"})
    EXPECT_TRUE(r.report.contains(key)) << key;
  EXPECT_EQ(r.report["command"], "cm-check");
  EXPECT_TRUE(r.report["wall_time_ms"].is_number_integer());
  EXPECT_FALSE(r.summary.empty());
}

TEST(Cli, CertifyGaussianInFiveDimensions) {
  const auto r = run_cli({"certify", "gaussian", "--dim", "5", "--seed", "1"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.report["results"]["verdict"], "certified");
  EXPECT_EQ(r.report["config"]["seed"], 1);
}

TEST(Cli, CertifyTriangleInThePlaneIsRefuted) {
  const auto r = run_cli({"certify", "triangle", "--dim", "2", "--trials", "10000", "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.report["results"]["verdict"], "refuted");
  ASSERT_TRUE(r.report["results"].contains("witness"));
  EXPECT_LT(r.report["results"]["witness"]["quadratic_form"].get<double>(), -1e-8);
}

TEST(Cli, CertifyTriangleOnTheLine) {
  EXPECT_EQ(run_cli({"certify", "triangle", "--dim", "1", "--seed", "1"}).code, 0);
}

TEST(Cli, UnknownProfileIsAnError) {
  const auto r = run_cli({"certify", "no-such-profile"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.report.contains("error"));
}

TEST(Cli, BadFlagsAreErrors) {
  EXPECT_EQ(run_cli({"certify"}).code, 1);
  EXPECT_EQ(run_cli({"certify", "gaussian", "--dim", "two"}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "exp", "--metric", "l2"}).code, 1);
}

TEST(Cli, CiModeRequiresSeed) {
  EXPECT_EQ(run_cli({"--ci", "certify", "gaussian", "--trials", "10"}).code, 1);
  EXPECT_EQ(run_cli({"--ci", "certify", "gaussian", "--trials", "10", "--seed", "3"}).code, 0);
  EXPECT_EQ(run_cli({"--ci", "cm-check", "gaussian"}).code, 0);
}

TEST(Cli, DefaultSeedIsRecorded) {
  const auto r = run_cli({"certify", "gaussian", "--trials", "10"});
  EXPECT_EQ(r.report["config"]["seed"], schoenberg::cli::kDefaultSeed);
}

TEST(Cli, DecomposeGaussian) {
  const auto r = run_cli({"decompose", "gaussian"});
  EXPECT_EQ(r.code, 0);
  EXPECT_GE(mass_between(r.report["results"]["measure"], 0.9, 1.1), 0.99);
  EXPECT_LE(r.report["results"]["diagnostics"]["residual_norm"].get<double>(), 1e-6);
}

TEST(Cli, DecomposeExpMixture) {
  const auto r = run_cli({"decompose", "exp-mixture"});
  EXPECT_EQ(r.code, 0);
  EXPECT_LE(r.report["results"]["reference"]["w1"].get<double>(), 0.05);
}

TEST(Cli, DecomposeTriangleFlagsResidual) {
  const auto r = run_cli({"decompose", "triangle"});
  EXPECT_EQ(r.code, 2);
  EXPECT_GT(r.report["results"]["diagnostics"]["residual_norm"].get<double>(), 0.01);
}

TEST(Cli, DecomposeCsvWritesMeasure) {
  const auto csv = temp_path("cli_gaussian.csv");
  {
    std::ofstream out(csv);
    out << "t,f\n";
    out.precision(17);
    for (int j = 0; j <= 40; ++j) out << 0.1 * j << "," << std::exp(-0.5 * 0.01 * j * j) << "\n";
  }
  const auto out_path = temp_path("cli_measure.json");
  const auto r = run_cli({"decompose", csv, "--out", out_path});
  EXPECT_EQ(r.code, 0);
  std::ifstream in(out_path);
  const json doc = json::parse(in);
  EXPECT_TRUE(doc.contains("diagnostics"));
  const auto measure = schoenberg::measure_from_json(doc);
  EXPECT_GE(mass_between(doc, 0.9, 1.1), 0.99);
  EXPECT_NEAR(schoenberg::mixture_laplace(measure, 0.0), 1.0, 1e-9);
}

TEST(Cli, DecomposeRejectsBadCsv) {
  const auto csv = temp_path("cli_bad.csv");
  {
    std::ofstream out(csv);
    out << "t,f\n0,0.5\n1,0.2\n";
  }
  EXPECT_EQ(run_cli({"decompose", csv}).code, 1);
}

TEST(Cli, SimulateDiracAtOne) {
  const auto r = run_cli({"simulate", "delta:1", "--n", "1000", "--reps", "10000", "--seed", "5"});
  EXPECT_EQ(r.code, 0);
  EXPECT_LE(r.report["results"]["w1"].get<double>(), 0.05);
  // KS to a point mass stays near P(chi2_1000 > 1000) ~ 0.5; see the unit tests.
  EXPECT_GT(r.report["results"]["ks"].get<double>(), 0.45);
}

TEST(Cli, SimulateDiracAtZeroWritesZeroColumn) {
  const auto csv = temp_path("cli_l.csv");
  const auto r = run_cli({"simulate", "delta:0", "--n", "10", "--reps", "200", "--seed", "5", "--out", csv});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.report["results"]["all_zero"].get<bool>());
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "L");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line, "0");
    ++rows;
  }
  EXPECT_EQ(rows, 200);
}

TEST(Cli, SimulateExpFromJsonFile) {
  const auto path = temp_path("cli_exp.json");
  {
    std::ofstream out(path);
    out << schoenberg::to_json(schoenberg::exponential_measure()).dump();
  }
  const auto est = temp_path("cli_estimate.json");
  const auto r = run_cli({"simulate", path, "--n", "1000", "--reps", "10000", "--seed", "6", "--measure-out", est});
  EXPECT_EQ(r.code, 0);
  EXPECT_LE(r.report["results"]["w1"].get<double>(), 0.05);
  std::ifstream in(est);
  EXPECT_NO_THROW(schoenberg::measure_from_json(json::parse(in)));
}

TEST(Cli, SimulateRenormalizeFlag) {
  const auto path = temp_path("cli_heavy.json");
  {
    std::ofstream out(path);
    out << R"({"label":"heavy","atoms":[{"s":1,"w":2},{"s":2,"w":2}]})";
  }
  EXPECT_EQ(run_cli({"simulate", path, "--reps", "100", "--n", "10", "--threshold", "10"}).code, 1);
  EXPECT_EQ(run_cli({"--renormalize", "simulate", path, "--reps", "100", "--n", "10", "--threshold", "10"}).code, 0);
}

TEST(Cli, VerifyIdentityGaussianDirac) {
  const auto r = run_cli({"verify-identity", "gaussian", "delta:1", "--t", "1", "--reps", "20000", "--seed", "7"});
  EXPECT_EQ(r.code, 0);
  const auto& check = r.report["results"]["checks"][0];
  EXPECT_TRUE(check["agree"].get<bool>());
  EXPECT_TRUE(check["gap_shrinks"].get<bool>());
}

TEST(Cli, VerifyIdentityTinyRadius) {
  const auto r = run_cli({"verify-identity", "gaussian", "delta:1", "--t", "1e-6", "--reps", "1000", "--seed", "7"});
  EXPECT_EQ(r.code, 0);
  const auto& check = r.report["results"]["checks"][0];
  EXPECT_NEAR(check["lhs"].get<double>(), 1.0, 1e-6);
  EXPECT_NEAR(check["rhs"].get<double>(), 1.0, 1e-6);
}

TEST(Cli, VerifyIdentityMismatchIsError) {
  const auto r = run_cli({"verify-identity", "gaussian", "exp", "--reps", "100", "--seed", "7"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.report["error"].get<std::string>().find("not the transform"), std::string::npos);
}

TEST(Cli, ConsistencyAndNegativeControl) {
  EXPECT_EQ(run_cli({"consistency", "exp", "--dim", "3", "--seed", "8"}).code, 0);
  EXPECT_EQ(run_cli({"consistency", "delta:1", "--dim", "2", "--corrupt-scale", "1.5", "--seed", "8"}).code, 2);
}

TEST(Cli, CmCheck) {
  EXPECT_EQ(run_cli({"cm-check", "gaussian", "--max-order", "8"}).code, 0);
  EXPECT_EQ(run_cli({"cm-check", "exp-mixture", "--max-order", "8"}).code, 0);
  const auto r = run_cli({"cm-check", "triangle"});
  EXPECT_EQ(r.code, 2);
  EXPECT_LE(r.report["results"]["first_failing_order"].get<int>(), 3);
}

TEST(Cli, SeededResultsIgnoreThreadCount) {
  const std::vector<std::vector<std::string>> commands = {
      {"certify", "triangle", "--dim", "2", "--trials", "500", "--seed", "9"},
      {"simulate", "exp", "--reps", "1000", "--n", "100", "--seed", "9"},
      {"verify-identity", "exp-mixture", "exp", "--reps", "500", "--n", "100", "--seed", "9"},
      {"consistency", "levy", "--count", "1000", "--seed", "9"}};
  for (const auto& cmd : commands) {
    json reference;
    for (const char* threads : {"1", "3", "8"}) {
      std::vector<std::string> storage{"schoenberg_lab", "--threads", threads};
      storage.insert(storage.end(), cmd.begin(), cmd.end());
      std::vector<const char*> argv;
      for (const auto& a : storage) argv.push_back(a.c_str());
      std::ostringstream out, err;
      schoenberg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
      const json results = json::parse(out.str())["results"];
      if (reference.is_null()) {
        reference = results;
      } else {
        EXPECT_EQ(results, reference) << cmd.front() << " threads=" << threads;
      }
    }
  }
}
