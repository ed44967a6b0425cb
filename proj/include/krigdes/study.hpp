#pragma once

// Parameter studies over a (kappa, phi) grid: optimal designs per criterion, the
// cross-efficiency matrix per combination, and averages across combinations.

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/criteria.hpp"
#include "krigdes/incremental.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/search.hpp"

namespace krigdes {

struct StudySpec {
  std::shared_ptr<const CandidateSet> set;
  KrigingVariant variant = KrigingVariant::ordinary();
  double sigma2 = 1.0;
  double nugget = 0.0;
  std::vector<double> kappas;
  std::vector<double> phis;
  Index k = 9;
  std::vector<Criterion> criteria{Criterion::kGV, Criterion::kG, Criterion::kV};
  SearchConfig search;
  bool incr_decr_reference = false;  // adds an incremental-decremental GV design
  std::optional<IndexList> increment_start;  // adds start + best GV increment
  int threads = 1;
};

struct StudyRow {
  std::string label;
  Design design;
  long long calls = 0;
  double elapsed = 0;
  std::vector<CriterionValue> values;  // one per study criterion
};

struct ComboReport {
  double kappa = 0, phi = 0;
  std::vector<StudyRow> rows;
  std::vector<CriterionValue> reference;  // best value found per criterion
  Eigen::MatrixXd efficiency;             // rows x criteria
  std::string error;
  bool ok() const { return error.empty(); }
};

struct StudyReport {
  std::vector<Criterion> criteria;
  std::vector<std::string> row_labels;
  std::vector<ComboReport> combos;
  Eigen::MatrixXd mean_efficiency;
  Eigen::MatrixXd median_efficiency;
  std::vector<double> median_calls;  // per row label
  std::vector<std::pair<std::size_t, std::string>> flagged;  // combos with unusually many calls
  double elapsed = 0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::vector<std::string> study_row_labels(const StudySpec& spec) {
  std::vector<std::string> out;
  for (Criterion c : spec.criteria) out.push_back("xi_" + to_string(c));
  if (spec.incr_decr_reference) out.push_back("incr_decr_gv");
  if (spec.increment_start) out.push_back("incremental_gv");
  return out;
}

namespace detail {

inline ComboReport run_combo(const StudySpec& spec, std::size_t combo, double kappa, double phi) {
  ComboReport rep;
  rep.kappa = kappa;
  rep.phi = phi;
  try {
    CovModel model{spec.sigma2, phi, kappa, spec.nugget, std::nullopt};
    Instance inst(spec.set, model, spec.variant);
    SearchConfig cfg = spec.search;
    cfg.threads = 1;
    auto seed_for = [&](std::uint64_t row) { return derive_seed(spec.search.seed, combo * 64 + row); };

    auto add_row = [&](std::string label, const Design& d, long long calls, double elapsed) {
      StudyRow row{std::move(label), d, calls, elapsed, {}};
      for (Criterion c : spec.criteria) row.values.push_back(evaluate(inst, d, c));
      rep.rows.push_back(std::move(row));
    };

    std::uint64_t r = 0;
    for (Criterion c : spec.criteria) {
      cfg.seed = seed_for(r++);
      SearchResult res = anneal_exchange(inst, c, spec.k, cfg);
      add_row("xi_" + to_string(c), res.design, res.criterion_calls, res.elapsed);
    }
    if (spec.incr_decr_reference) {
      cfg.seed = seed_for(r++);
      SearchResult res = incr_decr_optimize(inst, Criterion::kGV, spec.k, cfg);
      add_row("incr_decr_gv", res.design, res.criterion_calls, res.elapsed);
    }
    if (spec.increment_start) {
      const auto t0 = std::chrono::steady_clock::now();
      cfg.seed = seed_for(r++);
      StageState state(inst, *spec.increment_start);
      const Index l = spec.k - static_cast<Index>(spec.increment_start->size());
      IncrementResult inc = select_increment(state, l, IncrementObjective::kGV, cfg);
      Design d(sorted_union(*spec.increment_start, inc.increment), inst.size());
      add_row("incremental_gv", d, inc.calls,
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    const auto nc = spec.criteria.size();
    rep.reference.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      rep.reference[c] = rep.rows[0].values[c];
      for (const auto& row : rep.rows)
        if (strictly_better(row.values[c].value, rep.reference[c].value, spec.criteria[c]))
          rep.reference[c] = row.values[c];
    }
    rep.efficiency.resize(static_cast<Eigen::Index>(rep.rows.size()), static_cast<Eigen::Index>(nc));
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
      for (std::size_t c = 0; c < nc; ++c)
        rep.efficiency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            relative_efficiency(rep.reference[c], rep.rows[i].values[c]);
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  return rep;
}

}  // namespace detail

inline StudyReport run_study(const StudySpec& spec) {
  if (!spec.set) throw ConfigError("study: candidate set missing");
  if (spec.kappas.empty() || spec.phis.empty()) throw ConfigError("study: kappa and phi grids must be non-empty");
  if (spec.criteria.empty()) throw ConfigError("study: no criteria");
  spec.search.validate();
  const auto t0 = std::chrono::steady_clock::now();

  StudyReport rep;
  rep.criteria = spec.criteria;
  rep.row_labels = study_row_labels(spec);
  std::vector<std::pair<double, double>> grid;
  for (double phi : spec.phis)
    for (double kappa : spec.kappas) grid.emplace_back(kappa, phi);
  rep.combos.resize(grid.size());
  parallel_for(static_cast<int>(grid.size()), spec.threads, [&](int i) {
    rep.combos[static_cast<std::size_t>(i)] =
        detail::run_combo(spec, static_cast<std::size_t>(i), grid[static_cast<std::size_t>(i)].first,
                          grid[static_cast<std::size_t>(i)].second);
  });

  const auto nr = static_cast<Eigen::Index>(rep.row_labels.size());
  const auto nc = static_cast<Eigen::Index>(spec.criteria.size());
  rep.mean_efficiency = Eigen::MatrixXd::Constant(nr, nc, std::numeric_limits<double>::quiet_NaN());
  rep.median_efficiency = rep.mean_efficiency;
  for (Eigen::Index r = 0; r < nr; ++r)
    for (Eigen::Index c = 0; c < nc; ++c) {
      std::vector<double> vals;
      for (const auto& combo : rep.combos)
        if (combo.ok()) vals.push_back(combo.efficiency(r, c));
      if (vals.empty()) continue;
      double sum = 0;
      for (double v : vals) sum += v;
      rep.mean_efficiency(r, c) = sum / static_cast<double>(vals.size());
      rep.median_efficiency(r, c) = median_of(vals);
    }
  for (Eigen::Index r = 0; r < nr; ++r) {
    std::vector<double> calls;
    for (const auto& combo : rep.combos)
      if (combo.ok()) calls.push_back(static_cast<double>(combo.rows[static_cast<std::size_t>(r)].calls));
    const double med = median_of(calls);
    rep.median_calls.push_back(med);
    for (std::size_t i = 0; i < rep.combos.size(); ++i)
      if (rep.combos[i].ok() && rep.combos[i].rows[static_cast<std::size_t>(r)].calls > 3 * med)
        rep.flagged.emplace_back(i, rep.row_labels[static_cast<std::size_t>(r)]);
  }
  rep.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace krigdes
