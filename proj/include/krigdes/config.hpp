#pragma once

// JSON run configuration: sections candidates, model, trend, task, search, output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "krigdes/covariance.hpp"
#include "krigdes/criteria.hpp"
#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/search.hpp"
#include "krigdes/validate.hpp"

namespace krigdes {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"optimize", "increment", "reduce", "efficiency",
                                              "study", "variance-map", "validate"};
  return names;
}

struct GridSpec {
  int n = 0;
  int d = 2;
  double spacing = 1.0;
};

struct CandidatesConfig {
  std::optional<GridSpec> grid;
  std::optional<std::string> csv;  // as written in the config
  std::optional<int> dim;
};

struct TrendConfig {
  std::string kriging = "ordinary";  // simple | ordinary | universal
  std::string basis = "constant";    // constant | linear | quadratic | monomials | external_drift
  std::vector<std::vector<int>> exponents;
  std::string covariate;
  std::vector<double> mean;
};

struct NamedDesign {
  std::string name;
  std::vector<std::int64_t> ids;
};

struct StudyConfig {
  std::vector<double> kappas;
  std::vector<double> phis;
  std::vector<Criterion> criteria{Criterion::kGV, Criterion::kG, Criterion::kV};
  bool incr_decr_reference = false;
  std::vector<std::vector<double>> increment_start_coords;
};

struct TaskConfig {
  std::string name;
  Criterion criterion = Criterion::kGV;
  std::optional<Index> k;
  std::string method = "anneal";  // anneal | exhaustive | incr_decr
  std::optional<std::vector<std::int64_t>> design_ids;
  std::optional<std::string> design_result;  // path to a result JSON holding design.ids
  Index l = 0;
  std::optional<Index> k_final;
  std::string reoptimize = "polish";  // none | polish | anneal
  std::vector<NamedDesign> designs;
  std::vector<Criterion> efficiency_criteria{Criterion::kGV, Criterion::kG, Criterion::kV};
  std::vector<Criterion> optimize_for;
  StudyConfig study;
  ValidateOptions validate;
};

struct RunConfig {
  CandidatesConfig candidates;
  CovModel model;
  TrendConfig trend;
  TaskConfig task;
  SearchConfig search;
  std::string out_dir = "out";
  std::filesystem::path base_dir;  // relative paths in the config resolve against this

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("config: unknown key '" + section + "." + it.key() + "' (allowed: " + list + ")");
    }
}

template <typename T>
T get_or(const json& j, const std::string& section, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + section + "." + key + "' has the wrong type");
  }
}

inline std::vector<Criterion> parse_criteria(const json& j, const std::string& where) {
  std::vector<Criterion> out;
  if (!j.is_array()) throw ConfigError("config: '" + where + "' must be an array of criterion names");
  for (const auto& c : j) out.push_back(parse_criterion(c.get<std::string>()));
  return out;
}

inline json criteria_json(const std::vector<Criterion>& v) {
  json a = json::array();
  for (Criterion c : v) a.push_back(to_string(c));
  return a;
}

}  // namespace detail

inline RunConfig parse_config(const json& root, const std::filesystem::path& base_dir = ".") {
  using detail::get_or;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  detail::check_keys(root, "config", {"candidates", "model", "trend", "task", "search", "output"});

  // candidates
  if (!root.contains("candidates")) throw ConfigError("config: section 'candidates' is required");
  const json& cj = root.at("candidates");
  detail::check_keys(cj, "candidates", {"grid", "csv", "dim"});
  if (cj.contains("grid") == cj.contains("csv"))
    throw ConfigError("config: 'candidates' needs exactly one of 'grid' or 'csv'");
  if (cj.contains("grid")) {
    const json& g = cj.at("grid");
    detail::check_keys(g, "candidates.grid", {"n", "d", "spacing"});
    GridSpec spec;
    spec.n = get_or<int>(g, "candidates.grid", "n", 0);
    spec.d = get_or<int>(g, "candidates.grid", "d", 2);
    spec.spacing = get_or<double>(g, "candidates.grid", "spacing", 1.0);
    if (spec.n < 2) throw ConfigError("config: 'candidates.grid.n' must be >= 2");
    cfg.candidates.grid = spec;
  } else {
    cfg.candidates.csv = get_or<std::string>(cj, "candidates", "csv", "");
  }
  if (cj.contains("dim")) cfg.candidates.dim = get_or<int>(cj, "candidates", "dim", 0);

  // model
  if (!root.contains("model")) throw ConfigError("config: section 'model' is required");
  const json& mj = root.at("model");
  detail::check_keys(mj, "model", {"sigma2", "phi", "kappa", "nugget", "aniso_angle", "aniso_ratio", "note"});
  cfg.model.sigma2 = get_or<double>(mj, "model", "sigma2", 1.0);
  cfg.model.phi = get_or<double>(mj, "model", "phi", 1.0);
  cfg.model.kappa = get_or<double>(mj, "model", "kappa", 0.5);
  cfg.model.nugget = get_or<double>(mj, "model", "nugget", 0.0);
  if (mj.contains("aniso_angle") || mj.contains("aniso_ratio"))
    cfg.model.anisotropy = Anisotropy{get_or<double>(mj, "model", "aniso_angle", 0.0),
                                      get_or<double>(mj, "model", "aniso_ratio", 1.0)};
  cfg.model.validate();

  // trend
  const json tj = root.value("trend", json::object());
  detail::check_keys(tj, "trend", {"kriging", "basis", "exponents", "covariate", "mean"});
  cfg.trend.kriging = get_or<std::string>(tj, "trend", "kriging", "ordinary");
  cfg.trend.basis = get_or<std::string>(tj, "trend", "basis", cfg.trend.kriging == "universal" ? "linear" : "constant");
  cfg.trend.exponents = get_or<std::vector<std::vector<int>>>(tj, "trend", "exponents", {});
  cfg.trend.covariate = get_or<std::string>(tj, "trend", "covariate", "");
  if (tj.contains("mean")) {
    if (tj.at("mean").is_number())
      cfg.trend.mean = {tj.at("mean").get<double>()};
    else
      cfg.trend.mean = get_or<std::vector<double>>(tj, "trend", "mean", {});
  }
  static const std::set<std::string> kKriging{"simple", "ordinary", "universal"};
  static const std::set<std::string> kBasis{"constant", "linear", "quadratic", "monomials", "external_drift"};
  if (!kKriging.count(cfg.trend.kriging))
    throw ConfigError("config: 'trend.kriging' must be simple, ordinary or universal");
  if (!kBasis.count(cfg.trend.basis))
    throw ConfigError("config: 'trend.basis' must be constant, linear, quadratic, monomials or external_drift");
  if (cfg.trend.basis == "external_drift" && cfg.trend.covariate.empty())
    throw ConfigError("config: 'trend.covariate' is required for an external drift");

  // task
  const json kj = root.value("task", json::object());
  detail::check_keys(kj, "task",
                     {"name", "criterion", "k", "method", "design_ids", "design_result", "l", "k_final", "reoptimize",
                      "designs", "efficiency_criteria", "optimize_for", "study", "validate"});
  TaskConfig& t = cfg.task;
  t.name = get_or<std::string>(kj, "task", "name", "");
  t.criterion = parse_criterion(get_or<std::string>(kj, "task", "criterion", "gv"));
  if (kj.contains("k")) t.k = get_or<Index>(kj, "task", "k", 0);
  t.method = get_or<std::string>(kj, "task", "method", "anneal");
  if (t.method != "anneal" && t.method != "exhaustive" && t.method != "incr_decr")
    throw ConfigError("config: 'task.method' must be anneal, exhaustive or incr_decr");
  if (kj.contains("design_ids")) t.design_ids = get_or<std::vector<std::int64_t>>(kj, "task", "design_ids", {});
  if (kj.contains("design_result")) t.design_result = get_or<std::string>(kj, "task", "design_result", "");
  t.l = get_or<Index>(kj, "task", "l", 0);
  if (kj.contains("k_final")) t.k_final = get_or<Index>(kj, "task", "k_final", 0);
  t.reoptimize = get_or<std::string>(kj, "task", "reoptimize", "polish");
  if (t.reoptimize != "none" && t.reoptimize != "polish" && t.reoptimize != "anneal")
    throw ConfigError("config: 'task.reoptimize' must be none, polish or anneal");
  if (kj.contains("designs")) {
    const json& dj = kj.at("designs");
    if (!dj.is_object()) throw ConfigError("config: 'task.designs' must map names to id lists");
    for (auto it = dj.begin(); it != dj.end(); ++it)
      t.designs.push_back({it.key(), it.value().get<std::vector<std::int64_t>>()});
  }
  if (kj.contains("efficiency_criteria"))
    t.efficiency_criteria = detail::parse_criteria(kj.at("efficiency_criteria"), "task.efficiency_criteria");
  if (kj.contains("optimize_for")) t.optimize_for = detail::parse_criteria(kj.at("optimize_for"), "task.optimize_for");
  if (kj.contains("study")) {
    const json& sj = kj.at("study");
    detail::check_keys(sj, "task.study", {"kappas", "phis", "criteria", "incr_decr_reference", "increment_start_coords"});
    t.study.kappas = get_or<std::vector<double>>(sj, "task.study", "kappas", {});
    t.study.phis = get_or<std::vector<double>>(sj, "task.study", "phis", {});
    if (sj.contains("criteria")) t.study.criteria = detail::parse_criteria(sj.at("criteria"), "task.study.criteria");
    t.study.incr_decr_reference = get_or<bool>(sj, "task.study", "incr_decr_reference", false);
    t.study.increment_start_coords =
        get_or<std::vector<std::vector<double>>>(sj, "task.study", "increment_start_coords", {});
  }
  if (kj.contains("validate")) {
    const json& vj = kj.at("validate");
    detail::check_keys(vj, "task.validate", {"seed", "update_instances", "argmax_instances"});
    t.validate.seed = get_or<std::uint64_t>(vj, "task.validate", "seed", t.validate.seed);
    t.validate.update_instances = get_or<int>(vj, "task.validate", "update_instances", t.validate.update_instances);
    t.validate.argmax_instances = get_or<int>(vj, "task.validate", "argmax_instances", t.validate.argmax_instances);
  }

  // search
  const json sj = root.value("search", json::object());
  detail::check_keys(sj, "search",
                     {"seed", "max_outer_iters", "restarts", "neighborhood_radius", "neighborhood_count", "anneal",
                      "incr_decr", "exhaustive_cap", "threads", "polish"});
  SearchConfig& s = cfg.search;
  s.seed = get_or<std::uint64_t>(sj, "search", "seed", s.seed);
  s.max_outer_iters = get_or<int>(sj, "search", "max_outer_iters", s.max_outer_iters);
  s.restarts = get_or<int>(sj, "search", "restarts", s.restarts);
  s.neighborhood_radius = get_or<double>(sj, "search", "neighborhood_radius", s.neighborhood_radius);
  s.neighborhood_count = get_or<int>(sj, "search", "neighborhood_count", s.neighborhood_count);
  s.exhaustive_cap = get_or<long long>(sj, "search", "exhaustive_cap", s.exhaustive_cap);
  s.threads = get_or<int>(sj, "search", "threads", s.threads);
  s.polish = get_or<bool>(sj, "search", "polish", s.polish);
  if (sj.contains("anneal")) {
    const json& aj = sj.at("anneal");
    detail::check_keys(aj, "search.anneal", {"T0", "cooling", "moves_per_temperature", "spread_samples", "patience"});
    s.anneal.T0 = get_or<double>(aj, "search.anneal", "T0", s.anneal.T0);
    s.anneal.cooling = get_or<double>(aj, "search.anneal", "cooling", s.anneal.cooling);
    s.anneal.moves_per_temperature = get_or<int>(aj, "search.anneal", "moves_per_temperature", s.anneal.moves_per_temperature);
    s.anneal.spread_samples = get_or<int>(aj, "search.anneal", "spread_samples", s.anneal.spread_samples);
    s.anneal.patience = get_or<int>(aj, "search.anneal", "patience", s.anneal.patience);
  }
  if (sj.contains("incr_decr")) {
    const json& ij = sj.at("incr_decr");
    detail::check_keys(ij, "search.incr_decr", {"k_start", "l", "k1", "rounds", "random_decrements", "systematic_cap"});
    s.incr_decr.k_start = get_or<int>(ij, "search.incr_decr", "k_start", s.incr_decr.k_start);
    s.incr_decr.l = get_or<int>(ij, "search.incr_decr", "l", s.incr_decr.l);
    s.incr_decr.k1 = get_or<int>(ij, "search.incr_decr", "k1", s.incr_decr.k1);
    s.incr_decr.rounds = get_or<int>(ij, "search.incr_decr", "rounds", s.incr_decr.rounds);
    s.incr_decr.random_decrements = get_or<int>(ij, "search.incr_decr", "random_decrements", s.incr_decr.random_decrements);
    s.incr_decr.systematic_cap = get_or<long long>(ij, "search.incr_decr", "systematic_cap", s.incr_decr.systematic_cap);
  }
  s.validate();

  // output
  const json oj = root.value("output", json::object());
  detail::check_keys(oj, "output", {"dir"});
  cfg.out_dir = get_or<std::string>(oj, "output", "dir", "out");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json root;
  try {
    root = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto base = std::filesystem::path(path).parent_path();
  return parse_config(root, base.empty() ? std::filesystem::path(".") : base);
}

/// Configuration with all defaults filled in, as echoed into every output file.
inline json resolved_json(const RunConfig& cfg) {
  json j;
  json c = json::object();
  if (cfg.candidates.grid)
    c["grid"] = {{"n", cfg.candidates.grid->n}, {"d", cfg.candidates.grid->d}, {"spacing", cfg.candidates.grid->spacing}};
  if (cfg.candidates.csv) c["csv"] = *cfg.candidates.csv;
  if (cfg.candidates.dim) c["dim"] = *cfg.candidates.dim;
  j["candidates"] = c;
  json m = {{"sigma2", cfg.model.sigma2}, {"phi", cfg.model.phi}, {"kappa", cfg.model.kappa}, {"nugget", cfg.model.nugget}};
  if (cfg.model.anisotropy) {
    m["aniso_angle"] = cfg.model.anisotropy->angle;
    m["aniso_ratio"] = cfg.model.anisotropy->ratio;
  }
  j["model"] = m;
  json tr = {{"kriging", cfg.trend.kriging}, {"basis", cfg.trend.basis}};
  if (!cfg.trend.exponents.empty()) tr["exponents"] = cfg.trend.exponents;
  if (!cfg.trend.covariate.empty()) tr["covariate"] = cfg.trend.covariate;
  if (!cfg.trend.mean.empty()) tr["mean"] = cfg.trend.mean;
  j["trend"] = tr;
  const TaskConfig& t = cfg.task;
  json tk = {{"name", t.name}, {"criterion", to_string(t.criterion)}, {"method", t.method}};
  if (t.k) tk["k"] = *t.k;
  if (t.design_ids) tk["design_ids"] = *t.design_ids;
  if (t.design_result) tk["design_result"] = *t.design_result;
  if (t.l > 0) tk["l"] = t.l;
  if (t.k_final) tk["k_final"] = *t.k_final;
  tk["reoptimize"] = t.reoptimize;
  if (!t.designs.empty()) {
    json d = json::object();
    for (const auto& nd : t.designs) d[nd.name] = nd.ids;
    tk["designs"] = d;
  }
  tk["efficiency_criteria"] = detail::criteria_json(t.efficiency_criteria);
  if (!t.optimize_for.empty()) tk["optimize_for"] = detail::criteria_json(t.optimize_for);
  if (!t.study.kappas.empty() || !t.study.phis.empty())
    tk["study"] = {{"kappas", t.study.kappas},
                   {"phis", t.study.phis},
                   {"criteria", detail::criteria_json(t.study.criteria)},
                   {"incr_decr_reference", t.study.incr_decr_reference},
                   {"increment_start_coords", t.study.increment_start_coords}};
  tk["validate"] = {{"seed", t.validate.seed},
                    {"update_instances", t.validate.update_instances},
                    {"argmax_instances", t.validate.argmax_instances}};
  j["task"] = tk;
  const SearchConfig& s = cfg.search;
  j["search"] = {{"seed", s.seed},
                 {"max_outer_iters", s.max_outer_iters},
                 {"restarts", s.restarts},
                 {"neighborhood_radius", s.neighborhood_radius},
                 {"neighborhood_count", s.neighborhood_count},
                 {"anneal",
                  {{"T0", s.anneal.T0},
                   {"cooling", s.anneal.cooling},
                   {"moves_per_temperature", s.anneal.moves_per_temperature},
                   {"spread_samples", s.anneal.spread_samples},
                   {"patience", s.anneal.patience}}},
                 {"incr_decr",
                  {{"k_start", s.incr_decr.k_start},
                   {"l", s.incr_decr.l},
                   {"k1", s.incr_decr.k1},
                   {"rounds", s.incr_decr.rounds},
                   {"random_decrements", s.incr_decr.random_decrements},
                   {"systematic_cap", s.incr_decr.systematic_cap}}},
                 {"exhaustive_cap", s.exhaustive_cap},
                 {"polish", s.polish}};
  j["output"] = {{"dir", cfg.out_dir}};
  return j;
}

inline std::shared_ptr<const CandidateSet> build_candidates(const RunConfig& cfg) {
  if (cfg.candidates.grid) {
    const auto& g = *cfg.candidates.grid;
    return std::make_shared<const CandidateSet>(make_grid(g.n, g.d, g.spacing));
  }
  CsvSchema schema;
  schema.dim = cfg.candidates.dim;
  return std::make_shared<const CandidateSet>(load_candidates(cfg.resolve(*cfg.candidates.csv).string(), schema));
}

inline KrigingVariant build_variant(const TrendConfig& t) {
  if (t.kriging == "simple") return KrigingVariant::simple(t.mean);
  if (t.kriging == "ordinary") return KrigingVariant::ordinary();
  if (t.basis == "constant") return KrigingVariant::universal(TrendBasis::constant());
  if (t.basis == "linear") return KrigingVariant::universal(TrendBasis::linear());
  if (t.basis == "quadratic") return KrigingVariant::universal(TrendBasis::quadratic());
  if (t.basis == "monomials") return KrigingVariant::universal(TrendBasis::monomials(t.exponents));
  return KrigingVariant::universal(TrendBasis::external_drift(t.covariate));
}

inline Instance build_instance(const RunConfig& cfg) {
  return Instance(build_candidates(cfg), cfg.model, build_variant(cfg.trend));
}

}  // namespace krigdes
