#pragma once

// Built-in numerical self-checks: stage-two update formulas against direct refits,
// increment-objective argmax equivalences, SK/MES equivalence, scale invariance, and
// the SK/OK argmin agreement spot check (informational).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/criteria.hpp"
#include "krigdes/incremental.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/search.hpp"

namespace krigdes {

struct CheckResult {
  std::string name;
  bool passed = true;
  bool informational = false;
  double max_error = 0;
  double tolerance = 0;
  int cases = 0;
  std::string detail;
};

struct ValidationReport {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.informational && !c.passed) return false;
    return true;
  }
};

inline constexpr double kKappaGrid[] = {0.25, 0.5, 1.0, 1.5, 2.0, 2.5};
inline constexpr double kPhiGrid[] = {0.1, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0};

/// max |a - b| / max |b|.
inline double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0;
  const double scale = std::max(b.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// A random stage-two problem: first-stage design, increment, and prediction targets.
struct StageProblem {
  std::shared_ptr<const Instance> inst;
  IndexList xi1, inc, targets;
  std::string describe() const {
    std::ostringstream os;
    os << inst->variant().name() << " p=" << inst->p() << " kappa=" << inst->model().kappa
       << " phi=" << inst->model().phi << " k=" << xi1.size() << " l=" << inc.size() << " m=" << targets.size();
    return os.str();
  }
};

/// Random points on the integer lattice {1..side}^2; draws until the first-stage system is identifiable.
inline StageProblem random_stage_problem(Rng& rng, int side = 17) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int variant = static_cast<int>(uniform_index(rng, 4));
    KrigingVariant v = variant == 0   ? KrigingVariant::simple()
                       : variant == 1 ? KrigingVariant::ordinary()
                       : variant == 2 ? KrigingVariant::universal(TrendBasis::linear())
                                      : KrigingVariant::universal(TrendBasis::quadratic());
    const int p = v.p(2);
    const Index k = std::max(p, 1) + uniform_index(rng, 12 - std::max(p, 1) + 1);
    const Index l = 1 + uniform_index(rng, 6);
    const Index m = 5 + uniform_index(rng, 36);
    const Index n = k + l + m;
    IndexList cells = random_subset(rng, side * side, n);
    // Shuffle so that the split into xi1 / inc / targets is not spatially ordered.
    for (Index i = n - 1; i > 0; --i) std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
    Eigen::MatrixXd coords(n, 2);
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      coords(i, 0) = 1 + cells[static_cast<std::size_t>(i)] % side;
      coords(i, 1) = 1 + cells[static_cast<std::size_t>(i)] / side;
      ids[static_cast<std::size_t>(i)] = i;
    }
    const double kappa = kKappaGrid[uniform_index(rng, 6)];
    const double phi = kPhiGrid[uniform_index(rng, 9)];
    StageProblem prob;
    prob.inst = std::make_shared<const Instance>(CandidateSet(ids, coords), CovModel{1.0, phi, kappa, 0.0, std::nullopt},
                                                 std::move(v));
    for (Index i = 0; i < k; ++i) prob.xi1.push_back(i);
    for (Index i = k; i < k + l; ++i) prob.inc.push_back(i);
    for (Index i = k + l; i < n; ++i) prob.targets.push_back(i);
    try {
      KrigingSystem s1(*prob.inst, prob.xi1);
      IndexList both = detail::sorted_union(prob.xi1, prob.inc);
      KrigingSystem s2(*prob.inst, both);
      if (s1.jitter() > 0 || s2.jitter() > 0) continue;
      return prob;
    } catch (const Error&) {
    }
  }
  throw NumericalError("random_stage_problem: could not draw a well-posed instance");
}

/// Updated weights and kriging covariance vs. a direct fit on xi1 u inc.
inline CheckResult check_update_formulas(std::uint64_t seed, int instances = 200, double tol = 1e-8) {
  CheckResult r{"update formulas (weights and kriging covariance)", true, false, 0, tol, 0, ""};
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    StageProblem prob = random_stage_problem(rng);
    StageState s(*prob.inst, prob.xi1);
    UpdatedWeights uw = update_weights(s, prob.inc, prob.targets);
    Eigen::MatrixXd updated_cov = update_kriging_cov(s, prob.inc, prob.targets);

    IndexList both = prob.xi1;
    both.insert(both.end(), prob.inc.begin(), prob.inc.end());
    KrigingSystem direct(*prob.inst, both);
    Eigen::MatrixXd W = direct.weights(prob.targets);
    Eigen::MatrixXd W12(W.rows(), W.cols());
    W12 << uw.W1, uw.W2;
    const double e = std::max(max_rel_error(W12, W), max_rel_error(updated_cov, direct.kriging_cov(prob.targets)));
    ++r.cases;
    if (e > r.max_error) {
      r.max_error = e;
      r.detail = "worst: " + prob.describe();
    }
  }
  r.passed = r.max_error < tol;
  return r;
}

/// Tie set of the best values: maximize when `maximize`. Differences are compared absolutely
/// (the two objectives under comparison differ by a design-independent shift).
inline std::vector<std::size_t> best_set(const std::vector<double>& v, bool maximize, double abs_tol) {
  double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  for (double x : v)
    if (maximize ? x > best : x < best) best = x;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i] - best) <= abs_tol || v[i] == best) out.push_back(i);
  return out;
}

/// Exhaustive argmax of the increment objectives vs. argmin of the directly computed stage-two criterion.
inline CheckResult check_increment_argmax(std::uint64_t seed, bool trace_objective, int instances = 20) {
  CheckResult r{trace_objective ? "trace objective argmax equals direct argmin"
                                : "log det Sigma_2 argmax equals direct argmin",
                true, false, 0, 0, 0, ""};
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const int side = 4 + static_cast<int>(uniform_index(rng, 2));
    auto set = std::make_shared<const CandidateSet>(make_grid(side, 2, 1.0));
    const int variant = static_cast<int>(uniform_index(rng, 3));
    KrigingVariant v = variant == 0   ? KrigingVariant::simple()
                       : variant == 1 ? KrigingVariant::ordinary()
                                      : KrigingVariant::universal(TrendBasis::linear());
    Instance inst(set, CovModel{1.0, kPhiGrid[uniform_index(rng, 9)], kKappaGrid[uniform_index(rng, 6)], 0, std::nullopt}, v);
    const Index n = inst.size();
    const Index k = std::max(inst.p(), 1) + uniform_index(rng, 3);
    const Index l = 1 + uniform_index(rng, 3);
    IndexList xi1;
    std::optional<StageState> s;
    while (!s) {
      xi1 = random_subset(rng, n, k);
      try {
        s.emplace(inst, xi1);
      } catch (const Error&) {
      }
    }
    IndexList pool = s->candidates();
    if (binomial_capped(static_cast<long long>(pool.size()), l, 10000) > 10000) continue;
    std::vector<double> obj, direct;
    std::vector<IndexList> incs;
    IndexList combo(static_cast<std::size_t>(l));
    std::iota(combo.begin(), combo.end(), 0);
    do {
      IndexList inc;
      for (Index q : combo) inc.push_back(pool[static_cast<std::size_t>(q)]);
      IndexList both = detail::sorted_union(xi1, inc);
      IndexList targets = complement(both, n);
      double o, d;
      try {
        KrigingSystem sys(inst, both);
        if (trace_objective) {
          o = v_increment_objective(*s, inc);
          d = sys.kriging_variances(targets).sum();
        } else {
          o = gv_increment_objective(*s, inc);
          d = logdet_psd(sys.kriging_cov(targets));
        }
      } catch (const Error&) {
        o = kNegInf;
        d = std::numeric_limits<double>::infinity();
      }
      obj.push_back(o);
      direct.push_back(d);
      incs.push_back(std::move(inc));
    } while (next_combination(combo, static_cast<Index>(pool.size())));
    const double tol = trace_objective ? 1e-8 * s->base().kriging_variances(pool).sum() : 1e-8;
    auto a = best_set(obj, true, tol);
    auto b = best_set(direct, false, tol);
    ++r.cases;
    if (a != b) {
      r.passed = false;
      std::ostringstream os;
      os << "mismatch on " << side << "x" << side << " " << inst.variant().name() << " k=" << k << " l=" << l
         << " (|ties| " << a.size() << " vs " << b.size() << ")";
      r.detail = os.str();
    }
    // Largest discrepancy between the objective shift and the direct criterion shift.
    for (std::size_t i = 0; i < obj.size(); ++i)
      if (std::isfinite(obj[i]) && std::isfinite(direct[i]) && std::isfinite(obj[0]) && std::isfinite(direct[0])) {
        const double e = std::abs((obj[i] - obj[0]) + (direct[i] - direct[0]));
        r.max_error = std::max(r.max_error, e);
      }
  }
  return r;
}

/// Simple kriging: argmax log det C_xi = argmin log det Sigma; determinant identity on every design.
inline CheckResult check_sk_mes(double kappa = 0.5, double phi = 1.0, double tol = 1e-8) {
  CheckResult r{"simple kriging: MES argmax equals GV argmin, determinant identity", true, false, 0, tol, 0, ""};
  auto set = std::make_shared<const CandidateSet>(make_grid(4, 2, 1.0));
  Instance inst(set, CovModel{1.0, phi, kappa, 0, std::nullopt}, KrigingVariant::simple());
  const Index n = inst.size();
  IndexList all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const double logdet_full = logdet_psd(inst.cov().block(all, all));
  std::vector<double> mes, gv;
  IndexList combo{0, 1, 2};
  do {
    KrigingSystem sys(inst, combo);
    IndexList targets = complement(combo, n);
    const double ld_c = sys.logdet_C();
    const double ld_s = logdet_psd(sys.kriging_cov(targets));
    const double e = std::abs(ld_c + ld_s - logdet_full) / std::max(1.0, std::abs(logdet_full));
    r.max_error = std::max(r.max_error, e);
    mes.push_back(ld_c);
    gv.push_back(ld_s);
    ++r.cases;
  } while (next_combination(combo, n));
  if (best_set(mes, true, 1e-9) != best_set(gv, false, 1e-9)) {
    r.passed = false;
    r.detail = "argmax log det C and argmin log det Sigma differ";
  }
  if (r.max_error >= tol) r.passed = false;
  return r;
}

/// Exhaustive GV argmins under simple and ordinary kriging (5x5 grid, k=4); informational.
inline CheckResult check_sk_ok_argmin(const std::vector<std::pair<double, double>>& settings) {
  CheckResult r{"SK and OK GV argmins coincide", true, true, 0, 0, 0, ""};
  auto set = std::make_shared<const CandidateSet>(make_grid(5, 2, 1.0));
  for (auto [kappa, phi] : settings) {
    CovModel model{1.0, phi, kappa, 0, std::nullopt};
    SearchResult sk = exhaustive_optimal(Instance(set, model, KrigingVariant::simple()), Criterion::kGV, 4);
    SearchResult ok = exhaustive_optimal(Instance(set, model, KrigingVariant::ordinary()), Criterion::kGV, 4);
    ++r.cases;
    auto as_set = [](const std::vector<Design>& v) {
      std::vector<IndexList> out;
      for (const auto& d : v) out.push_back(d.indices());
      std::sort(out.begin(), out.end());
      return out;
    };
    if (as_set(sk.ties) != as_set(ok.ties)) {
      r.passed = false;
      std::ostringstream os;
      os << "finding: argmin sets differ at kappa=" << kappa << " phi=" << phi << "; SK {";
      for (Index i : sk.design.indices()) os << ' ' << i;
      os << " } OK {";
      for (Index i : ok.design.indices()) os << ' ' << i;
      os << " }";
      r.detail += (r.detail.empty() ? "" : "; ") + os.str();
    }
  }
  return r;
}

/// Response scaling by s: efficiencies unchanged, argmins unchanged, log det shifts by 2 m log s.
inline CheckResult check_scale_invariance(double tol = 1e-10) {
  CheckResult r{"response scaling leaves efficiencies and argmins unchanged", true, false, 0, tol, 0, ""};
  auto set = std::make_shared<const CandidateSet>(make_grid(4, 2, 1.0));
  Instance base(set, CovModel{1.0, 1.5, 1.5, 0, std::nullopt}, KrigingVariant::ordinary());
  const Index k = 3;
  for (Criterion c : {Criterion::kGV, Criterion::kG, Criterion::kV}) {
    SearchResult opt1 = exhaustive_optimal(base, c, k);
    for (double s : {1e-3, 1e3}) {
      Instance scaled = base.scaled(s);
      SearchResult opt2 = exhaustive_optimal(scaled, c, k);
      ++r.cases;
      if (opt1.design != opt2.design) {
        r.passed = false;
        r.detail = "argmin changed under scaling for " + to_string(c);
      }
      IndexList combo{0, 1, 2};
      do {
        Design d(combo, base.size());
        const double e1 = relative_efficiency(opt1.criterion, evaluate(base, d, c));
        const double e2 = relative_efficiency(opt2.criterion, evaluate(scaled, d, c));
        r.max_error = std::max(r.max_error, std::abs(e1 - e2));
      } while (next_combination(combo, base.size()));
    }
  }
  if (r.max_error >= tol) r.passed = false;
  return r;
}

/// Chained log det (increments then decrement) against full recomputation.
inline CheckResult check_chain_logdet(std::uint64_t seed, double tol = 1e-8) {
  CheckResult r{"chained log det bookkeeping", true, false, 0, tol, 0, ""};
  Rng rng(seed ^ 0x5DEECE66DULL);
  auto set = std::make_shared<const CandidateSet>(make_grid(6, 2, 1.0));
  for (int t = 0; t < 10; ++t) {
    Instance inst(set, CovModel{1.0, kPhiGrid[uniform_index(rng, 9)], kKappaGrid[uniform_index(rng, 6)], 0, std::nullopt},
                  KrigingVariant::ordinary());
    IndexList xi = random_subset(rng, inst.size(), 2);
    StageState s(inst, xi, true);
    for (int step = 0; step < 3; ++step) {
      IndexList pool = s.candidates();
      IndexList inc{pool[static_cast<std::size_t>(uniform_index(rng, static_cast<Index>(pool.size())))]};
      s = increment_state(s, inc);
      IndexList sorted = s.design_sorted();
      const double full = logdet_psd(s.base().kriging_cov(complement(sorted, inst.size())));
      r.max_error = std::max(r.max_error, std::abs(*s.logdet_D() - full) / std::max(1.0, std::abs(full)));
      ++r.cases;
    }
    IndexList drop{s.design().back()};
    StageState reduced = decrement_state(s, drop);
    const double full = logdet_psd(reduced.base().kriging_cov(reduced.candidates()));
    r.max_error = std::max(r.max_error, std::abs(*reduced.logdet_D() - full) / std::max(1.0, std::abs(full)));
    ++r.cases;
  }
  r.passed = r.max_error < tol;
  return r;
}

struct ValidateOptions {
  std::uint64_t seed = 20240601;
  int update_instances = 200;
  int argmax_instances = 20;
  std::vector<std::pair<double, double>> sk_ok_settings{{0.5, 1.0}, {1.5, 2.0}, {2.5, 3.0}, {0.25, 0.5}, {1.0, 5.0}};
};

inline ValidationReport run_validation(const ValidateOptions& opt = {}) {
  ValidationReport rep;
  rep.seed = opt.seed;
  rep.checks.push_back(check_update_formulas(opt.seed, opt.update_instances));
  rep.checks.push_back(check_increment_argmax(opt.seed + 1, false, opt.argmax_instances));
  rep.checks.push_back(check_increment_argmax(opt.seed + 2, true, opt.argmax_instances));
  rep.checks.push_back(check_sk_mes());
  rep.checks.push_back(check_scale_invariance());
  rep.checks.push_back(check_chain_logdet(opt.seed + 3));
  rep.checks.push_back(check_sk_ok_argmin(opt.sk_ok_settings));
  return rep;
}

}  // namespace krigdes
