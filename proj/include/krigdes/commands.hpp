#pragma once

// Task implementations behind the krigdes CLI. Each command returns the JSON document
// and the files it would write; write_outputs() puts them on disk.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "krigdes/config.hpp"
#include "krigdes/criteria.hpp"
#include "krigdes/incremental.hpp"
#include "krigdes/search.hpp"
#include "krigdes/study.hpp"
#include "krigdes/validate.hpp"
#include "krigdes/version.hpp"

namespace krigdes {

struct CommandResult {
  json doc;
  std::vector<std::pair<std::string, std::string>> files;  // file name -> contents
  int exit_code = 0;
  std::string summary;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON number, or null for non-finite values.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json criterion_json(const CriterionValue& v) {
  json j = {{"name", to_string(v.kind)}, {"value", number_or_null(v.value)}, {"log_scale", v.log_scale}, {"m", v.m}};
  if (v.log_scale) j["scale_free"] = number_or_null(v.scale_free());
  if (v.degenerate()) j["degenerate"] = true;
  return j;
}

inline json design_json(const Instance& inst, std::span<const Index> idx) {
  json ids = json::array(), coords = json::array(), indices = json::array();
  for (Index i : idx) {
    indices.push_back(i);
    ids.push_back(inst.set().id(i));
    json c = json::array();
    for (int a = 0; a < inst.set().dim(); ++a) c.push_back(inst.set().coords()(i, a));
    coords.push_back(c);
  }
  return {{"k", idx.size()}, {"indices", indices}, {"ids", ids}, {"coords", coords}};
}

inline json output_header(const RunConfig& cfg, const std::string& task) {
  json cfg_json = resolved_json(cfg);
  cfg_json["task"]["name"] = task;
  return {{"tool", "krigdes"}, {"version", kVersion}, {"task", task}, {"seed", cfg.search.seed}, {"config", cfg_json}};
}

inline json dump_trace(const std::vector<double>& trace) {
  json a = json::array();
  for (double v : trace) a.push_back(number_or_null(v));
  return a;
}

namespace detail {

inline IndexList ids_to_indices(const CandidateSet& set, const std::vector<std::int64_t>& ids) {
  IndexList out;
  for (auto id : ids) out.push_back(set.index_of(id));
  return out;
}

/// Design named by task.design_ids or by the design.ids array of a previous result file.
inline std::optional<IndexList> configured_design(const RunConfig& cfg, const CandidateSet& set) {
  if (cfg.task.design_ids) return ids_to_indices(set, *cfg.task.design_ids);
  if (cfg.task.design_result) {
    const auto path = cfg.resolve(*cfg.task.design_result);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open design result '" + path.string() + "'");
    json j;
    try {
      j = json::parse(in);
      return ids_to_indices(set, j.at("design").at("ids").get<std::vector<std::int64_t>>());
    } catch (const json::exception& e) {
      throw ConfigError("design result '" + path.string() + "' has no design.ids array: " + e.what());
    }
  }
  return std::nullopt;
}

inline IndexList require_design(const RunConfig& cfg, const CandidateSet& set, const std::string& task) {
  auto d = configured_design(cfg, set);
  if (!d) throw ConfigError(task + ": set task.design_ids or task.design_result");
  return *d;
}

inline Index require_k(const RunConfig& cfg, const std::string& task) {
  if (!cfg.task.k) throw ConfigError(task + ": task.k is required");
  return *cfg.task.k;
}

inline SearchResult run_optimizer(const Instance& inst, Criterion c, Index k, const RunConfig& cfg,
                                  const std::optional<Design>& start) {
  if (cfg.task.method == "exhaustive") return exhaustive_optimal(inst, c, k, cfg.search.exhaustive_cap);
  if (cfg.task.method == "incr_decr") return incr_decr_optimize(inst, c, k, cfg.search, start);
  return anneal_exchange(inst, c, k, cfg.search, start);
}

inline std::string pretty(const json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline CommandResult cmd_optimize(const RunConfig& cfg) {
  Instance inst = build_instance(cfg);
  const Index k = detail::require_k(cfg, "optimize");
  std::optional<Design> start;
  if (auto d = detail::configured_design(cfg, inst.set())) start = Design(*d, inst.size());
  SearchResult res = detail::run_optimizer(inst, cfg.task.criterion, k, cfg, start);

  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "optimize");
  j["method"] = cfg.task.method;
  j["design"] = design_json(inst, res.design.indices());
  j["criterion"] = criterion_json(res.criterion);
  j["criterion_calls"] = res.criterion_calls;
  j["iterations"] = res.iterations;
  if (cfg.task.method == "exhaustive") j["ties"] = res.ties.size();
  j["trace"] = dump_trace(res.trace);
  j["elapsed"] = res.elapsed;
  out.files.emplace_back("result.json", detail::pretty(j));
  out.summary = to_string(res.criterion.kind) + " = " + format_double(res.criterion.value) + " with k = " +
                std::to_string(k) + " (" + std::to_string(res.criterion_calls) + " criterion calls)";
  return out;
}

inline CommandResult cmd_increment(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Instance inst = build_instance(cfg);
  IndexList start = detail::require_design(cfg, inst.set(), "increment");
  if (cfg.task.l < 1) throw ConfigError("increment: task.l must be >= 1");
  const IncrementObjective obj = increment_objective_for(cfg.task.criterion);
  const bool gv = obj == IncrementObjective::kGV;
  StageState state(inst, start, gv);
  IncrementResult inc = select_increment(state, cfg.task.l, obj, cfg.search);
  Design final_design(detail::sorted_union(start, inc.increment), inst.size());
  CriterionValue audit = evaluate(inst, final_design, cfg.task.criterion);

  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "increment");
  IndexList sorted_start = start;
  std::sort(sorted_start.begin(), sorted_start.end());
  j["start_design"] = design_json(inst, sorted_start);
  j["increment"] = design_json(inst, inc.increment);
  j["design"] = design_json(inst, final_design.indices());
  j["objective"] = {{"name", gv ? "logdet_sigma2" : "trace_gain"}, {"value", number_or_null(inc.objective)}};
  j["selection"] = inc.exhaustive ? "exhaustive" : "greedy+anneal";
  if (gv) {
    j["stage_one_logdet"] = number_or_null(*state.logdet_D());
    j["chained_logdet"] = number_or_null(*state.logdet_D() - inc.objective);
  }
  j["criterion"] = criterion_json(audit);
  j["criterion_calls"] = inc.calls;
  j["elapsed"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.emplace_back("result.json", detail::pretty(j));
  out.summary = "added " + std::to_string(inc.increment.size()) + " points; " + to_string(audit.kind) + " = " +
                format_double(audit.value);
  return out;
}

/// Starting network optionally relocated by exchange, then one point removed at a time
/// (smallest conditional variance given the rest, i.e. the smallest log det increase),
/// each removal followed by the same re-optimization. Networks of different size are
/// compared through the per-site value exp(logdet / m).
inline CommandResult cmd_station_reduce(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.task.criterion != Criterion::kGV) throw ConfigError("reduce: only the gv criterion is supported");
  Instance inst = build_instance(cfg);
  IndexList cur = detail::require_design(cfg, inst.set(), "reduce");
  std::sort(cur.begin(), cur.end());
  const Index n = inst.size();
  const Index k0 = static_cast<Index>(cur.size());
  const Index k_final = cfg.task.k_final.value_or(k0);
  if (k_final > k0) throw ConfigError("reduce: k_final exceeds the starting design size");
  if (k_final < inst.p() + 1)
    throw ConfigError("reduce: cannot go below p + 1 = " + std::to_string(inst.p() + 1) + " points");

  long long calls = 0;
  std::uint64_t stream = 0;
  // Exchange re-optimization; returns the log det change.
  auto reoptimize = [&](IndexList& design) {
    if (cfg.task.reoptimize == "polish") {
      SearchResult r = exchange_polish(inst, Criterion::kGV, Design(design, n), cfg.search);
      calls += r.criterion_calls;
      design = r.design.indices();
      return r.trace.empty() ? 0.0 : r.trace.back();
    }
    if (cfg.task.reoptimize == "anneal") {
      SearchConfig sc = cfg.search;
      sc.seed = derive_seed(cfg.search.seed, stream++);
      SearchResult r = anneal_exchange(inst, Criterion::kGV, static_cast<Index>(design.size()), sc, Design(design, n));
      calls += r.criterion_calls;
      const double change = gv_design_part(KrigingSystem(inst, r.design.indices())) -
                            gv_design_part(KrigingSystem(inst, design));
      if (change < 0) {
        design = r.design.indices();
        return change;
      }
    }
    return 0.0;
  };
  auto per_site = [&](double logdet, Index k) { return std::exp(logdet / static_cast<double>(n - k)); };

  const double baseline = evaluate(inst, Design(cur, n), Criterion::kGV).value;
  const double baseline_site = per_site(baseline, k0);
  double logdet = baseline + reoptimize(cur);
  const Index removals = k0 - k_final;
  double max_audit_error = 0;
  std::optional<Index> first_exceeds;
  json traj = json::array();
  auto record = [&](Index step, std::optional<Index> removed, bool audit) {
    const auto k = static_cast<Index>(cur.size());
    json row = {{"removals", step},
                {"k", k},
                {"removed_id", removed ? json(inst.set().id(*removed)) : json(nullptr)},
                {"logdet", logdet},
                {"per_site", per_site(logdet, k)},
                {"per_site_ratio", per_site(logdet, k) / baseline_site}};
    if (audit) {
      const double a = evaluate(inst, Design(cur, n), Criterion::kGV).value;
      row["audited_logdet"] = a;
      max_audit_error = std::max(max_audit_error, std::abs(a - logdet) / std::max(1.0, std::abs(a)));
    }
    if (!first_exceeds && per_site(logdet, k) > baseline_site * (1 + 1e-12)) first_exceeds = step;
    traj.push_back(row);
  };
  record(0, std::nullopt, true);

  for (Index step = 1; step <= removals; ++step) {
    Index best_pos = -1;
    double best_var = std::numeric_limits<double>::infinity();
    for (std::size_t pos = 0; pos < cur.size(); ++pos) {
      IndexList rest = cur;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pos));
      const Index target[] = {cur[pos]};
      double var;
      try {
        var = KrigingSystem(inst, rest).kriging_variances(target)(0);
      } catch (const Error&) {
        continue;
      }
      ++calls;
      if (var < best_var) {
        best_var = var;
        best_pos = static_cast<Index>(pos);
      }
    }
    if (best_pos < 0) throw NumericalError("reduce: no removable point keeps the trend identifiable");
    const Index removed = cur[static_cast<std::size_t>(best_pos)];
    cur.erase(cur.begin() + best_pos);
    logdet += std::log(best_var);
    logdet += reoptimize(cur);
    record(step, removed, step == removals / 2 || step == removals);
  }

  Design final_design(cur, n);
  CriterionValue audit = evaluate(inst, final_design, Criterion::kGV);
  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "reduce");
  j["method"] = "reduce";
  j["design"] = design_json(inst, final_design.indices());
  j["criterion"] = criterion_json(audit);
  j["criterion_calls"] = calls;
  j["iterations"] = removals;
  j["trace"] = json::array();
  for (const auto& row : traj) j["trace"].push_back(row["logdet"]);
  j["trajectory"] = traj;
  j["baseline"] = {{"k", k0}, {"logdet", baseline}, {"per_site", baseline_site}};
  j["first_exceeds_baseline"] = first_exceeds ? json(*first_exceeds) : json(nullptr);
  j["max_audit_rel_error"] = max_audit_error;
  j["elapsed"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.emplace_back("result.json", detail::pretty(j));
  out.summary = "reduced " + std::to_string(k0) + " -> " + std::to_string(cur.size()) + " points; per-site GV " +
                format_double(baseline_site) + " -> " + format_double(per_site(audit.value, final_design.size())) +
                (first_exceeds ? "; exceeds the starting network after " + std::to_string(*first_exceeds) + " removals"
                               : "; never worse than the starting network");
  return out;
}

inline CommandResult cmd_efficiency(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Instance inst = build_instance(cfg);
  struct Row {
    std::string name;
    Design design;
    long long calls = 0;
  };
  std::vector<Row> rows;
  for (const auto& nd : cfg.task.designs)
    rows.push_back({nd.name, Design(detail::ids_to_indices(inst.set(), nd.ids), inst.size())});
  if (!cfg.task.optimize_for.empty()) {
    Index k = cfg.task.k ? *cfg.task.k : (rows.empty() ? 0 : rows.front().design.size());
    if (k == 0) throw ConfigError("efficiency: task.k is required when no designs are listed");
    for (std::size_t i = 0; i < cfg.task.optimize_for.size(); ++i) {
      SearchConfig sc = cfg.search;
      sc.seed = derive_seed(cfg.search.seed, i);
      RunConfig local = cfg;
      local.search = sc;
      SearchResult r = detail::run_optimizer(inst, cfg.task.optimize_for[i], k, local, std::nullopt);
      rows.push_back({"opt_" + to_string(cfg.task.optimize_for[i]), r.design, r.criterion_calls});
    }
  }
  if (rows.size() < 2) throw ConfigError("efficiency: need at least two designs (task.designs and/or task.optimize_for)");
  for (const auto& r : rows)
    if (r.design.size() != rows.front().design.size())
      throw ConfigError("efficiency: design '" + r.name + "' has size " + std::to_string(r.design.size()) +
                        ", expected " + std::to_string(rows.front().design.size()));

  const auto& crit = cfg.task.efficiency_criteria;
  std::vector<std::vector<CriterionValue>> vals(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Criterion c : crit) vals[r].push_back(evaluate(inst, rows[r].design, c));
  std::vector<CriterionValue> ref;
  for (std::size_t c = 0; c < crit.size(); ++c) {
    CriterionValue best = vals[0][c];
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (strictly_better(vals[r][c].value, best.value, crit[c])) best = vals[r][c];
    ref.push_back(best);
  }

  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "efficiency");
  std::ostringstream csv;
  csv << "design";
  for (Criterion c : crit) csv << ",E_" << to_string(c);
  csv << "\n";
  json jrows = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    json eff = json::object(), values = json::object();
    csv << rows[r].name;
    for (std::size_t c = 0; c < crit.size(); ++c) {
      const double e = relative_efficiency(ref[c], vals[r][c]);
      eff[to_string(crit[c])] = number_or_null(e);
      values[to_string(crit[c])] = criterion_json(vals[r][c]);
      csv << "," << format_double(e);
    }
    csv << "\n";
    jrows.push_back({{"name", rows[r].name},
                     {"design", design_json(inst, rows[r].design.indices())},
                     {"criterion_calls", rows[r].calls},
                     {"values", values},
                     {"efficiency", eff}});
  }
  json jref = json::object();
  for (std::size_t c = 0; c < crit.size(); ++c) jref[to_string(crit[c])] = criterion_json(ref[c]);
  j["reference"] = jref;
  j["rows"] = jrows;
  std::int64_t calls = 0;
  for (const auto& r : rows) calls += r.calls;
  j["criterion_calls"] = calls;
  j["elapsed"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.emplace_back("efficiency.json", detail::pretty(j));
  out.files.emplace_back("efficiency.csv", csv.str());
  out.summary = std::to_string(rows.size()) + " designs compared";
  return out;
}

/// Candidate indices matching the given coordinates (to 1e-9).
inline IndexList indices_at(const CandidateSet& set, const std::vector<std::vector<double>>& coords) {
  IndexList out;
  for (const auto& c : coords) {
    if (static_cast<int>(c.size()) != set.dim()) throw ConfigError("coordinate list has the wrong dimension");
    Index found = -1;
    for (Index i = 0; i < set.size() && found < 0; ++i) {
      bool eq = true;
      for (int a = 0; a < set.dim(); ++a) eq = eq && std::abs(set.coords()(i, a) - c[static_cast<std::size_t>(a)]) < 1e-9;
      if (eq) found = i;
    }
    if (found < 0) throw ConfigError("no candidate at the requested start coordinates");
    out.push_back(found);
  }
  return out;
}

inline StudySpec study_spec_from(const RunConfig& cfg) {
  StudySpec spec;
  spec.set = build_candidates(cfg);
  spec.variant = build_variant(cfg.trend);
  spec.sigma2 = cfg.model.sigma2;
  spec.nugget = cfg.model.nugget;
  spec.kappas = cfg.task.study.kappas;
  spec.phis = cfg.task.study.phis;
  spec.k = detail::require_k(cfg, "study");
  spec.criteria = cfg.task.study.criteria;
  spec.search = cfg.search;
  spec.incr_decr_reference = cfg.task.study.incr_decr_reference;
  if (!cfg.task.study.increment_start_coords.empty())
    spec.increment_start = indices_at(*spec.set, cfg.task.study.increment_start_coords);
  spec.threads = cfg.search.threads;
  return spec;
}

inline json study_json(const StudyReport& rep, const Instance& layout) {
  json combos = json::array();
  for (const auto& c : rep.combos) {
    json jc = {{"kappa", c.kappa}, {"phi", c.phi}};
    if (!c.ok()) {
      jc["error"] = c.error;
      combos.push_back(jc);
      continue;
    }
    json rows = json::array();
    for (std::size_t r = 0; r < c.rows.size(); ++r) {
      json vals = json::object(), eff = json::object();
      for (std::size_t q = 0; q < rep.criteria.size(); ++q) {
        vals[to_string(rep.criteria[q])] = number_or_null(c.rows[r].values[q].value);
        eff[to_string(rep.criteria[q])] = number_or_null(c.efficiency(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)));
      }
      rows.push_back({{"label", c.rows[r].label},
                      {"design", design_json(layout, c.rows[r].design.indices())},
                      {"criterion_calls", c.rows[r].calls},
                      {"values", vals},
                      {"efficiency", eff}});
    }
    jc["rows"] = rows;
    combos.push_back(jc);
  }
  auto matrix = [&](const Eigen::MatrixXd& m) {
    json a = json::object();
    for (std::size_t r = 0; r < rep.row_labels.size(); ++r) {
      json row = json::object();
      for (std::size_t q = 0; q < rep.criteria.size(); ++q)
        row[to_string(rep.criteria[q])] = number_or_null(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)));
      a[rep.row_labels[r]] = row;
    }
    return a;
  };
  json calls = json::object();
  for (std::size_t r = 0; r < rep.row_labels.size(); ++r) calls[rep.row_labels[r]] = number_or_null(rep.median_calls[r]);
  json flagged = json::array();
  for (const auto& [i, label] : rep.flagged)
    flagged.push_back({{"kappa", rep.combos[i].kappa}, {"phi", rep.combos[i].phi}, {"row", label}});
  return {{"combos", combos},
          {"mean_efficiency", matrix(rep.mean_efficiency)},
          {"median_efficiency", matrix(rep.median_efficiency)},
          {"median_criterion_calls", calls},
          {"high_call_combos", flagged}};
}

inline CommandResult cmd_study(const RunConfig& cfg) {
  StudySpec spec = study_spec_from(cfg);
  StudyReport rep = run_study(spec);
  Instance layout(spec.set, cfg.model, spec.variant);

  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "study");
  j["study"] = study_json(rep, layout);
  std::int64_t calls = 0;
  for (const auto& c : rep.combos)
    for (const auto& r : c.rows) calls += r.calls;
  j["criterion_calls"] = calls;
  j["elapsed"] = rep.elapsed;

  std::ostringstream table;
  table << "design,statistic";
  for (Criterion c : rep.criteria) table << ",E_" << to_string(c);
  table << "\n";
  for (std::size_t r = 0; r < rep.row_labels.size(); ++r)
    for (const char* stat : {"mean", "median"}) {
      const Eigen::MatrixXd& m = std::string(stat) == "mean" ? rep.mean_efficiency : rep.median_efficiency;
      table << rep.row_labels[r] << "," << stat;
      for (std::size_t q = 0; q < rep.criteria.size(); ++q)
        table << "," << format_double(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)));
      table << "\n";
    }
  std::ostringstream calls_csv;
  calls_csv << "design,median_criterion_calls\n";
  for (std::size_t r = 0; r < rep.row_labels.size(); ++r)
    calls_csv << rep.row_labels[r] << "," << format_double(rep.median_calls[r]) << "\n";

  out.files.emplace_back("study.json", detail::pretty(j));
  out.files.emplace_back("study_table.csv", table.str());
  out.files.emplace_back("study_calls.csv", calls_csv.str());
  std::size_t failed = 0;
  for (const auto& c : rep.combos) failed += c.ok() ? 0 : 1;
  out.summary = std::to_string(rep.combos.size()) + " combinations, " + std::to_string(failed) + " failed";
  return out;
}

inline CommandResult cmd_variance_map(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Instance inst = build_instance(cfg);
  Design design(detail::require_design(cfg, inst.set(), "variance-map"), inst.size());
  KrigingSystem sys(inst, design.indices());
  IndexList targets = complement(design, inst.size());
  Eigen::VectorXd var = sys.kriging_variances(targets);

  std::ostringstream csv;
  const int d = inst.set().dim();
  for (int a = 0; a < d; ++a) csv << "x" << a + 1 << ",";
  csv << "variance\n";
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (int a = 0; a < d; ++a) csv << format_double(inst.set().coords()(targets[t], a)) << ",";
    csv << format_double(var(static_cast<Eigen::Index>(t))) << "\n";
  }
  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "variance-map");
  j["design"] = design_json(inst, design.indices());
  j["variance"] = {{"min", var.minCoeff()}, {"max", var.maxCoeff()}, {"mean", var.mean()}, {"sites", var.size()}};
  j["criterion_calls"] = 0;
  j["elapsed"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.emplace_back("variance_map.csv", csv.str());
  out.files.emplace_back("variance_map.json", detail::pretty(j));
  out.summary = std::to_string(targets.size()) + " prediction sites written";
  return out;
}

inline CommandResult cmd_validate(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ValidationReport rep = run_validation(cfg.task.validate);
  CommandResult out;
  json& j = out.doc;
  j = output_header(cfg, "validate");
  j["seed"] = rep.seed;
  json checks = json::array();
  std::ostringstream text;
  text << "validation seed " << rep.seed << "\n";
  long long cases = 0;
  for (const auto& c : rep.checks) {
    const char* status = c.passed ? "pass" : (c.informational ? "finding" : "FAIL");
    checks.push_back({{"name", c.name},
                      {"status", status},
                      {"informational", c.informational},
                      {"max_error", c.max_error},
                      {"tolerance", c.tolerance},
                      {"cases", c.cases},
                      {"detail", c.detail}});
    text << "  [" << status << "] " << c.name << "  max error " << format_double(c.max_error) << "  (" << c.cases
         << " cases)" << (c.detail.empty() ? "" : "  " + c.detail) << "\n";
    cases += c.cases;
  }
  j["checks"] = checks;
  j["passed"] = rep.passed();
  j["criterion_calls"] = cases;
  j["elapsed"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.emplace_back("validate.json", detail::pretty(j));
  out.exit_code = rep.passed() ? 0 : static_cast<int>(ExitCode::kValidationFailure);
  out.summary = text.str() + (rep.passed() ? "all mandatory checks passed" : "validation FAILED");
  return out;
}

inline CommandResult run_task(const std::string& task, const RunConfig& cfg) {
  if (!cfg.task.name.empty() && cfg.task.name != task)
    throw ConfigError("config task.name is '" + cfg.task.name + "' but the command line asks for '" + task + "'");
  if (task == "optimize") return cmd_optimize(cfg);
  if (task == "increment") return cmd_increment(cfg);
  if (task == "reduce") return cmd_station_reduce(cfg);
  if (task == "efficiency") return cmd_efficiency(cfg);
  if (task == "study") return cmd_study(cfg);
  if (task == "variance-map") return cmd_variance_map(cfg);
  if (task == "validate") return cmd_validate(cfg);
  throw ConfigError("unknown task '" + task + "'");
}

inline void write_outputs(const CommandResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  for (const auto& [name, contents] : r.files) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    f << contents;
  }
}

}  // namespace krigdes
