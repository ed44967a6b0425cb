#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "krigdes/commands.hpp"
#include "oracle.hpp"

using namespace krigdes;

namespace {

const std::filesystem::path kSource = KRIGDES_SOURCE_DIR;

RunConfig config_from(const std::string& text) { return parse_config(json::parse(text), kSource / "configs"); }

json strip_volatile(json j) {
  if (j.is_object()) {
    j.erase("elapsed");
    if (j.contains("config")) j["config"].erase("output");
    for (auto& [k, v] : j.items()) v = strip_volatile(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_volatile(v);
  }
  return j;
}

/// Structural equality with numbers compared to a relative tolerance.
void expect_json_near(const json& a, const json& b, double tol, const std::string& path = "$") {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    EXPECT_NEAR(x, y, tol * std::max(1.0, std::abs(y))) << path;
    return;
  }
  ASSERT_EQ(a.type(), b.type()) << path;
  if (a.is_object()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (auto& [k, v] : b.items()) {
      ASSERT_TRUE(a.contains(k)) << path << "." << k;
      expect_json_near(a.at(k), v, tol, path + "." + k);
    }
  } else if (a.is_array()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (std::size_t i = 0; i < a.size(); ++i) expect_json_near(a[i], b[i], tol, path + "[" + std::to_string(i) + "]");
  } else {
    EXPECT_EQ(a, b) << path;
  }
}

std::string file_of(const CommandResult& r, const std::string& name) {
  for (const auto& [n, c] : r.files)
    if (n == name) return c;
  ADD_FAILURE() << "missing output " << name;
  return {};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> parse_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + KRIGDES_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallGrid = R"({
  "candidates": {"grid": {"n": 4, "d": 2, "spacing": 1.0}},
  "model": {"sigma2": 1.0, "phi": 1.0, "kappa": 0.5},
  "trend": {"kriging": "simple"},
  "task": {"criterion": "gv", "k": 3, "method": "exhaustive"}
})";

}  // namespace

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from(R"({"candidates": {"grid": {"n": 4}}, "model": {"sigma2": 1}, "bogus": 1})"), ConfigError);
  EXPECT_THROW(config_from(R"({"candidates": {"grid": {"n": 4}}, "model": {"sigma2": 1, "phii": 2}})"), ConfigError);
  EXPECT_THROW(config_from(R"({"model": {"sigma2": 1}})"), ConfigError);
  EXPECT_THROW(config_from(R"({"candidates": {"grid": {"n": 4}}, "model": {"sigma2": 1},
                               "task": {"method": "genetic"}})"),
               ConfigError);
  EXPECT_THROW(config_from(R"({"candidates": {"grid": {"n": 4}}, "model": {"sigma2": 1},
                               "task": {"criterion": "d_optimal"}})"),
               ConfigError);
  EXPECT_THROW(config_from(R"({"candidates": {"grid": {"n": "four"}}, "model": {"sigma2": 1}})"), ConfigError);
  EXPECT_THROW(load_config((kSource / "configs" / "no_such_file.json").string()), ConfigError);
}

TEST(Config, TaskNameMustMatchCommand) {
  RunConfig cfg = config_from(kSmallGrid);
  cfg.task.name = "study";
  EXPECT_THROW(run_task("optimize", cfg), ConfigError);
  EXPECT_THROW(run_task("frobnicate", config_from(kSmallGrid)), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : std::filesystem::directory_iterator(kSource / "configs")) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
  }
  const RunConfig study = load_config((kSource / "configs" / "study_linear9.json").string());
  EXPECT_EQ(study.task.study.kappas.size() * study.task.study.phis.size(), 54u);
}

TEST(Config, ResolvedConfigRoundTrips) {
  const RunConfig a = load_config((kSource / "configs" / "grid17_optimize.json").string());
  const json ja = resolved_json(a);
  const RunConfig b = parse_config(ja, a.base_dir);
  EXPECT_EQ(resolved_json(b), ja);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(ConfigError("x").exit_code(), ExitCode::kConfigError);
  EXPECT_EQ(CapacityError("x").exit_code(), ExitCode::kConfigError);
  EXPECT_EQ(NumericalError("x").exit_code(), ExitCode::kNumericalError);
  EXPECT_EQ(static_cast<int>(ExitCode::kValidationFailure), 4);
}

TEST(Cli, ExitStatus) {
  const auto out = std::filesystem::temp_directory_path() / "krigdes_cli_test";
  EXPECT_EQ(run_cli("optimize --config \"" + (kSource / "tests/golden/exhaustive_sk4.json").string() + "\" --out \"" +
                    out.string() + "\""),
            0);
  EXPECT_TRUE(std::filesystem::exists(out / "result.json"));
  EXPECT_EQ(run_cli("optimize --config /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("optimize"), 2);
  EXPECT_EQ(run_cli("bogus --config x.json"), 2);
  EXPECT_EQ(run_cli("study --config \"" + (kSource / "tests/golden/exhaustive_sk4.json").string() + "\""), 2);
  std::filesystem::remove_all(out);
}

TEST(Optimize, ResultDocument) {
  const CommandResult r = run_task("optimize", config_from(kSmallGrid));
  const json& j = r.doc;
  for (const char* key : {"tool", "version", "task", "seed", "config", "method", "design", "criterion",
                          "criterion_calls", "iterations", "trace", "elapsed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["task"], "optimize");
  EXPECT_EQ(j["design"]["k"], 3);
  EXPECT_EQ(j["criterion"]["name"], "gv");
  EXPECT_EQ(j["criterion"]["m"], 13);
  EXPECT_EQ(j["criterion_calls"], 560);
  const double v = j["criterion"]["value"];
  EXPECT_NEAR(j["criterion"]["scale_free"].get<double>(), std::exp(v / 13), 1e-12);
  EXPECT_EQ(strip_volatile(json::parse(file_of(r, "result.json"))), strip_volatile(j));
}

TEST(Optimize, RepeatableExceptForTiming) {
  RunConfig cfg = load_config((kSource / "configs" / "grid17_optimize.json").string());
  cfg.search.restarts = 2;
  cfg.task.k = 6;
  const json a = strip_volatile(run_task("optimize", cfg).doc);
  const json b = strip_volatile(run_task("optimize", cfg).doc);
  EXPECT_EQ(a, b);
}

TEST(Golden, ExhaustiveResult) {
  RunConfig cfg = load_config((kSource / "tests/golden/exhaustive_sk4.json").string());
  const json got = strip_volatile(run_task("optimize", cfg).doc);
  const json want = strip_volatile(json::parse(slurp(kSource / "tests/golden/exhaustive_sk4.result.json")));
  expect_json_near(got, want, 1e-9);
}

TEST(Golden, VarianceMap) {
  RunConfig cfg = load_config((kSource / "tests/golden/variance_map_ok5.json").string());
  const auto got = parse_csv(file_of(run_task("variance-map", cfg), "variance_map.csv"));
  const auto want = parse_csv(slurp(kSource / "tests/golden/variance_map_ok5.csv"));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    ASSERT_EQ(got[i].size(), want[i].size());
    for (std::size_t c = 0; c < got[i].size(); ++c) EXPECT_NEAR(got[i][c], want[i][c], 1e-12);
  }
}

TEST(VarianceMap, MatchesKrigingVariancesAndSymmetry) {
  RunConfig cfg = load_config((kSource / "tests/golden/variance_map_ok5.json").string());
  const CommandResult r = run_task("variance-map", cfg);
  const auto rows = parse_csv(file_of(r, "variance_map.csv"));
  ASSERT_EQ(rows.size(), 20u);
  const auto field = oracle::make_field(oracle::grid(5), 1.0, 2.0, 1.5, oracle::Trend::kConstant);
  const std::vector<long> design = {6, 8, 12, 16, 18};
  const auto targets = oracle::complement(design, 25);
  const Eigen::VectorXd var = oracle::krige(field, design, targets).Sigma.diagonal();
  std::map<std::pair<int, int>, double> at;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const long idx = (static_cast<long>(rows[t][0]) - 1) * 5 + static_cast<long>(rows[t][1]) - 1;
    EXPECT_EQ(idx, targets[t]) << "design sites must be excluded, rows in candidate order";
    EXPECT_NEAR(rows[t][2], var(static_cast<Eigen::Index>(t)), 1e-10);
    at[{static_cast<int>(rows[t][0]), static_cast<int>(rows[t][1])}] = rows[t][2];
  }
  // The design is invariant under the symmetries of the square.
  for (const auto& [xy, v] : at) {
    const auto [x, y] = xy;
    EXPECT_NEAR(v, at.at({6 - x, y}), 1e-10);
    EXPECT_NEAR(v, at.at({y, x}), 1e-10);
  }
  // Neighbours of design points have the smallest variances; far corners the largest.
  double near_max = 0, rest_min = 1e300;
  for (const auto& [xy, v] : at) {
    const auto [x, y] = xy;
    const bool boundary = x == 1 || x == 5 || y == 1 || y == 5;
    if (!boundary) near_max = std::max(near_max, v);
    else rest_min = std::min(rest_min, v);
  }
  EXPECT_LT(near_max, rest_min);
  EXPECT_NEAR(r.doc["variance"]["max"].get<double>(), at.at({1, 1}), 1e-12);
}

TEST(Efficiency, IdenticalDesignsAreAllOnes) {
  RunConfig cfg = config_from(kSmallGrid);
  cfg.task.designs = {{"a", {0, 5, 10}}, {"b", {0, 5, 10}}};
  const CommandResult r = run_task("efficiency", cfg);
  for (const auto& row : r.doc["rows"])
    for (const auto& [name, e] : row["efficiency"].items()) EXPECT_NEAR(e.get<double>(), 1.0, 1e-12) << name;
}

TEST(Efficiency, ExhaustiveOptimaHaveUnitDiagonal) {
  const RunConfig cfg = load_config((kSource / "configs" / "oracle_efficiency.json").string());
  const CommandResult r = run_task("efficiency", cfg);
  const auto& rows = r.doc["rows"];
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    const std::string own = row["name"].get<std::string>().substr(4);
    for (const auto& [name, e] : row["efficiency"].items()) {
      EXPECT_LE(e.get<double>(), 1.0 + 1e-9);
      if (name == own) {
        EXPECT_NEAR(e.get<double>(), 1.0, 1e-12);
      }
    }
  }
  EXPECT_FALSE(file_of(r, "efficiency.csv").empty());
}

TEST(Efficiency, MismatchedSizesRejected) {
  RunConfig cfg = config_from(kSmallGrid);
  cfg.task.designs = {{"a", {0, 5, 10}}, {"b", {0, 5, 10, 15}}};
  EXPECT_THROW(run_task("efficiency", cfg), ConfigError);
}

TEST(Increment, ChainedLogdetMatchesAudit) {
  const RunConfig cfg = load_config((kSource / "configs" / "increment.json").string());
  const json j = run_task("increment", cfg).doc;
  EXPECT_EQ(j["design"]["k"], 12);
  EXPECT_EQ(j["increment"]["k"], 8);
  const double chained = j["chained_logdet"], audit = j["criterion"]["value"];
  EXPECT_NEAR(chained, audit, 1e-8 * std::abs(audit));
}

TEST(Reduce, TrajectoryAuditsAndLimits) {
  RunConfig cfg = config_from(R"({
    "candidates": {"grid": {"n": 7, "d": 2, "spacing": 1.0}},
    "model": {"sigma2": 1.0, "phi": 2.0, "kappa": 1.5},
    "trend": {"kriging": "universal", "basis": "linear"},
    "task": {"criterion": "gv", "design_ids": [0, 3, 6, 21, 24, 27, 42, 45, 48, 10], "k_final": 5}
  })");
  const json j = run_task("reduce", cfg).doc;
  EXPECT_EQ(j["design"]["k"], 5);
  EXPECT_EQ(j["trajectory"].size(), 6u);
  EXPECT_LT(j["max_audit_rel_error"].get<double>(), 1e-9);
  for (const auto& row : j["trajectory"])
    if (row.contains("audited_logdet")) {
      EXPECT_NEAR(row["logdet"].get<double>(), row["audited_logdet"].get<double>(),
                  1e-9 * std::abs(row["audited_logdet"].get<double>()));
    }
  const double final_logdet = j["trajectory"].back()["logdet"];
  EXPECT_NEAR(final_logdet, j["criterion"]["value"].get<double>(), 1e-9 * std::abs(final_logdet));

  cfg.task.k_final = 3;
  EXPECT_THROW(run_task("reduce", cfg), ConfigError);
  cfg.task.k_final = 11;
  EXPECT_THROW(run_task("reduce", cfg), ConfigError);
  cfg.task.criterion = Criterion::kV;
  cfg.task.k_final = 5;
  EXPECT_THROW(run_task("reduce", cfg), ConfigError);
}

TEST(Reduce, NoRemovalsLooksLikeOptimize) {
  RunConfig cfg = config_from(R"({
    "candidates": {"grid": {"n": 5, "d": 2, "spacing": 1.0}},
    "model": {"sigma2": 1.0, "phi": 2.0, "kappa": 1.5},
    "trend": {"kriging": "ordinary"},
    "task": {"criterion": "gv", "design_ids": [0, 4, 12, 20, 24], "reoptimize": "none"}
  })");
  const json j = run_task("reduce", cfg).doc;
  for (const char* key : {"method", "design", "criterion", "criterion_calls", "iterations", "trace"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["iterations"], 0);
  EXPECT_EQ(j["design"]["ids"], json({0, 4, 12, 20, 24}));
  EXPECT_TRUE(j["first_exceeds_baseline"].is_null());
}

TEST(Study, SmallStudyHasUnitDiagonal) {
  RunConfig cfg = config_from(R"({
    "candidates": {"grid": {"n": 4, "d": 2, "spacing": 1.0}},
    "model": {"sigma2": 1.0},
    "trend": {"kriging": "ordinary"},
    "task": {"k": 3, "method": "exhaustive",
             "study": {"kappas": [0.5, 1.5], "phis": [1, 2], "criteria": ["gv", "g", "v"]}},
    "search": {"seed": 3, "restarts": 4}
  })");
  const CommandResult r = run_task("study", cfg);
  const json& s = r.doc["study"];
  ASSERT_EQ(s["combos"].size(), 4u);
  for (const auto& combo : s["combos"]) {
    ASSERT_FALSE(combo.contains("error"));
    for (const auto& row : combo["rows"]) {
      const std::string own = row["label"].get<std::string>().substr(3);
      for (const auto& [name, e] : row["efficiency"].items()) {
        EXPECT_LE(e.get<double>(), 1.0 + 1e-9);
        if (name == own) {
        EXPECT_NEAR(e.get<double>(), 1.0, 1e-12);
      }
      }
    }
  }
  for (const char* row : {"xi_gv", "xi_g", "xi_v"})
    EXPECT_TRUE(s["mean_efficiency"].contains(row)) << row;
  EXPECT_NE(file_of(r, "study_table.csv").find("xi_gv,mean"), std::string::npos);
}

TEST(Study, ThreadCountDoesNotChangeResults) {
  RunConfig cfg = config_from(R"({
    "candidates": {"grid": {"n": 6, "d": 2, "spacing": 1.0}},
    "model": {"sigma2": 1.0},
    "trend": {"kriging": "ordinary"},
    "task": {"k": 4, "study": {"kappas": [0.5, 1.5], "phis": [1, 2]}},
    "search": {"seed": 3, "restarts": 3}
  })");
  cfg.search.threads = 1;
  const json a = strip_volatile(run_task("study", cfg).doc);
  cfg.search.threads = 3;
  const json b = strip_volatile(run_task("study", cfg).doc);
  EXPECT_EQ(a, b);
}

TEST(Validate, SmallRunPasses) {
  RunConfig cfg = config_from(R"({
    "candidates": {"grid": {"n": 4, "d": 2, "spacing": 1.0}},
    "model": {"sigma2": 1.0},
    "task": {"validate": {"seed": 5, "update_instances": 20, "argmax_instances": 3}}
  })");
  const CommandResult r = run_task("validate", cfg);
  EXPECT_EQ(r.exit_code, 0) << r.summary;
  EXPECT_TRUE(r.doc["passed"].get<bool>());
  EXPECT_GE(r.doc["checks"].size(), 6u);
}
