#pragma once

// Design optimizers: brute-force enumeration, exchange + simulated annealing for
// fixed-size designs, increment selection, and incremental-decremental refinement.
//
// All searches minimize an internal score: log det Sigma for GV, max/mean kriging
// variance for G/V, -log det C_xi for MES. GV exchange moves are scored with the
// decrement/increment bookkeeping: swapping a for b in xi changes log det Sigma by
//   log var(a | xi \ a) - log var(b | xi \ a),
// a pair of 1 x 1 determinants, so no m x m determinant is evaluated during a GV search.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/criteria.hpp"
#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"
#include "krigdes/incremental.hpp"
#include "krigdes/kriging.hpp"

namespace krigdes {

struct AnnealSchedule {
  double T0 = 0;  // <= 0: estimate from the mean |delta| of `spread_samples` random exchanges
  double cooling = 0.9;
  int moves_per_temperature = 50;
  int spread_samples = 50;
  int patience = 1;  // plateaus without improvement before stopping
};

struct IncrDecrConfig {
  int k_start = 0;  // 0: max(p, 1)
  int l = 0;        // 0: k_target - k_start
  int k1 = 0;       // retained points per decrement; 0: k_start
  int rounds = 50;
  int random_decrements = 50;
  long long systematic_cap = 2000;
};

struct SearchConfig {
  std::uint64_t seed = 1;
  int max_outer_iters = 500;
  int restarts = 1;
  double neighborhood_radius = 2.0;  // grid steps
  int neighborhood_count = 24;       // nearest neighbours for irregular sets
  AnnealSchedule anneal;
  IncrDecrConfig incr_decr;
  long long exhaustive_cap = 200000;
  int threads = 1;
  bool polish = true;

  void validate() const {
    if (max_outer_iters < 1) throw ConfigError("search: max_outer_iters must be >= 1");
    if (restarts < 1) throw ConfigError("search: restarts must be >= 1");
    if (!(anneal.cooling > 0 && anneal.cooling < 1)) throw ConfigError("search: cooling must lie in (0, 1)");
    if (anneal.moves_per_temperature < 1) throw ConfigError("search: moves_per_temperature must be >= 1");
    if (anneal.patience < 1) throw ConfigError("search: patience must be >= 1");
    if (!(neighborhood_radius > 0)) throw ConfigError("search: neighborhood_radius must be > 0");
    if (neighborhood_count < 1) throw ConfigError("search: neighborhood_count must be >= 1");
    if (exhaustive_cap < 1) throw ConfigError("search: exhaustive_cap must be >= 1");
    if (threads < 1) throw ConfigError("search: threads must be >= 1");
    if (incr_decr.rounds < 0 || incr_decr.random_decrements < 1) throw ConfigError("search: bad incr_decr settings");
  }
};

struct SearchResult {
  Design design;
  CriterionValue criterion;
  long long criterion_calls = 0;
  int iterations = 0;
  double elapsed = 0;
  std::vector<double> trace;
  std::uint64_t seed = 0;
  std::vector<Design> ties;  // exhaustive search only
};

// ---------------------------------------------------------------------------------------
// Utilities

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the r-th independent stream derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

using Rng = std::mt19937_64;

inline Index uniform_index(Rng& rng, Index n) {
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % un;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return static_cast<Index>(x % un);
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// k distinct values from [0, n), sorted.
inline IndexList random_subset(Rng& rng, Index n, Index k) {
  IndexList all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  for (Index i = 0; i < k; ++i) std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(i + uniform_index(rng, n - i))]);
  IndexList out(all.begin(), all.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

/// C(n, k), saturating at `cap + 1`.
inline long long binomial_capped(long long n, long long k, long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double r = 1;
  for (long long i = 1; i <= k; ++i) {
    r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (r > static_cast<long double>(cap)) return cap + 1;
  }
  return static_cast<long long>(std::llround(r));
}

/// Advance a sorted combination of {0..n-1}; false after the last one.
inline bool next_combination(std::vector<Index>& c, Index n) {
  const auto k = static_cast<Index>(c.size());
  Index i = k - 1;
  while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++c[static_cast<std::size_t>(i)];
  for (Index j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

/// Runs fn(0..n-1) on up to `threads` workers. Each task writes only its own slot.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// Neighbour lists: candidates within radius * spacing on lattices, nearest-r otherwise.
class Neighborhoods {
 public:
  Neighborhoods(const CandidateSet& set, const CovModel& model, double radius, int count) {
    const Index n = set.size();
    lists_.resize(static_cast<std::size_t>(n));
    const auto& X = set.coords();
    auto dist = [&](Index i, Index j) {
      Eigen::VectorXd a = X.row(i).transpose(), b = X.row(j).transpose();
      (void)model;
      return (a - b).norm();
    };
    if (auto h = set.grid_spacing()) {
      const double r = radius * *h * (1 + 1e-9);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          if (j != i && dist(i, j) <= r) lists_[static_cast<std::size_t>(i)].push_back(j);
    } else {
      std::vector<std::pair<double, Index>> d;
      for (Index i = 0; i < n; ++i) {
        d.clear();
        for (Index j = 0; j < n; ++j)
          if (j != i) d.emplace_back(dist(i, j), j);
        const auto r = std::min<std::size_t>(static_cast<std::size_t>(count), d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(r), d.end());
        for (std::size_t t = 0; t < r; ++t) lists_[static_cast<std::size_t>(i)].push_back(d[t].second);
        std::sort(lists_[static_cast<std::size_t>(i)].begin(), lists_[static_cast<std::size_t>(i)].end());
      }
    }
  }

  const IndexList& of(Index i) const { return lists_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<IndexList> lists_;
};

// ---------------------------------------------------------------------------------------
// Exchange objectives for fixed-size designs

/// Internal minimization score of a design, evaluated in full (used for audits and fallbacks).
inline double full_score(const Instance& inst, const IndexList& design, Criterion c) {
  IndexList sorted = design;
  std::sort(sorted.begin(), sorted.end());
  const double v = evaluate(inst, Design(sorted, inst.size()), c).value;
  return maximized(c) ? -v : v;
}

/// log det Sigma(xi) up to a design-independent constant:
///   log det Sigma = log det C_X - log det C_xi + log det F_X' C_X^-1 F_X - log det F_xi' C_xi^-1 F_xi.
inline double gv_design_part(const KrigingSystem& sys) { return -(sys.logdet_C() + sys.logdet_M()); }

class ExchangeEvaluator {
 public:
  virtual ~ExchangeEvaluator() = default;
  /// Score of `design` on the evaluator's scale (relative scales are allowed).
  virtual double reset(const IndexList& design) = 0;
  /// score(design with design[pos] := b) - score(design); +inf for infeasible swaps.
  virtual double delta(Index pos, Index b) = 0;
  virtual void commit(Index pos, Index b) = 0;
  const IndexList& design() const { return cur_; }
  long long calls() const { return calls_; }

 protected:
  IndexList cur_;
  long long calls_ = 0;
};

class GvExchange final : public ExchangeEvaluator {
 public:
  explicit GvExchange(const Instance& inst) : inst_(inst) {}

  double reset(const IndexList& design) override {
    cur_ = design;
    bases_.assign(cur_.size(), {});
    design_part_.reset();
    return 0.0;
  }

  double delta(Index pos, Index b) override {
    ++calls_;
    Base& base = base_for(pos);
    if (base.sys) {
      const Index tb[] = {b};
      if (inst_.model().nugget == 0)
        for (Index d : base.sys->design())
          if (inst_.cov().indistinguishable(b, d)) return kInf;
      const double vb = base.sys->kriging_variances(tb)(0);
      if (!(vb > 0)) return kInf;
      return base.log_var_removed - std::log(vb);
    }
    // Base xi \ a is not identifiable; score the swap through the design-part identity.
    const double cur = current_design_part();
    if (!std::isfinite(cur)) return kInf;
    IndexList next = cur_;
    next[static_cast<std::size_t>(pos)] = b;
    try {
      KrigingSystem sys(inst_, next);
      if (sys.jitter() > 0) return kInf;
      return gv_design_part(sys) - cur;
    } catch (const Error&) {
      return kInf;
    }
  }

  void commit(Index pos, Index b) override {
    cur_[static_cast<std::size_t>(pos)] = b;
    std::fill(bases_.begin(), bases_.end(), Base{});
    design_part_.reset();
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Base {
    bool built = false;
    std::shared_ptr<const KrigingSystem> sys;
    double log_var_removed = 0;
  };

  Base& base_for(Index pos) {
    Base& base = bases_[static_cast<std::size_t>(pos)];
    if (base.built) return base;
    base.built = true;
    IndexList rest;
    for (std::size_t i = 0; i < cur_.size(); ++i)
      if (static_cast<Index>(i) != pos) rest.push_back(cur_[i]);
    if (static_cast<int>(rest.size()) < std::max(inst_.p(), 1)) return base;
    try {
      auto sys = std::make_shared<const KrigingSystem>(inst_, rest);
      if (sys->jitter() > 0) return base;
      const Index ta[] = {cur_[static_cast<std::size_t>(pos)]};
      const double va = sys->kriging_variances(ta)(0);
      if (!(va > 0)) return base;
      base.sys = std::move(sys);
      base.log_var_removed = std::log(va);
    } catch (const Error&) {
    }
    return base;
  }

  double current_design_part() {
    if (!design_part_) {
      try {
        KrigingSystem sys(inst_, cur_);
        design_part_ = sys.jitter() > 0 ? kInf : gv_design_part(sys);
      } catch (const Error&) {
        design_part_ = kInf;
      }
    }
    return *design_part_;
  }

  const Instance& inst_;
  std::vector<Base> bases_;
  std::optional<double> design_part_;
};

/// V exchange through the single-point form of the trace identity: with base xi \ a,
/// tr Sigma(base + b) = tr Sigma(base) - |Sigma_base(b, .)|^2 / Sigma_base(b, b).
class VExchange final : public ExchangeEvaluator {
 public:
  explicit VExchange(const Instance& inst) : inst_(inst) {}

  double reset(const IndexList& design) override {
    cur_ = design;
    bases_.assign(cur_.size(), {});
    m_ = inst_.size() - static_cast<Index>(cur_.size());
    ++calls_;
    return mean_direct(cur_);
  }

  double delta(Index pos, Index b) override {
    ++calls_;
    Base& base = base_for(pos);
    if (!base.ok) {
      IndexList next = cur_;
      next[static_cast<std::size_t>(pos)] = b;
      const double now = mean_direct(cur_), then = mean_direct(next);
      if (!std::isfinite(now) || !std::isfinite(then)) return kInf;
      return then - now;
    }
    const double gb = gain(base, b);
    if (!std::isfinite(gb)) return kInf;
    return (base.gain_removed - gb) / static_cast<double>(m_);
  }

  void commit(Index pos, Index b) override {
    cur_[static_cast<std::size_t>(pos)] = b;
    std::fill(bases_.begin(), bases_.end(), Base{});
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Base {
    bool built = false;
    bool ok = false;
    std::shared_ptr<const KrigingSystem> sys;
    IndexList targets;
    std::vector<Index> position;  // candidate index -> column in targets, -1 when absent
    Residuals res;
    double gain_removed = 0;
  };

  double mean_direct(const IndexList& design) const {
    try {
      KrigingSystem sys(inst_, design);
      IndexList sorted = design;
      std::sort(sorted.begin(), sorted.end());
      return sys.kriging_variances(complement(sorted, inst_.size())).mean();
    } catch (const Error&) {
      return kInf;
    }
  }

  double gain(const Base& base, Index j) const {
    const Index col = base.position[static_cast<std::size_t>(j)];
    if (col < 0) return kNegInf;
    const auto& cov = inst_.cov();
    const auto& R = base.res.R;
    const auto& V = base.res.V;
    double var = 0, sum_sq = 0;
    for (Eigen::Index t = 0; t < R.cols(); ++t) {
      double s = cov(j, base.targets[static_cast<std::size_t>(t)]) - R.col(col).dot(R.col(t));
      if (V.rows() > 0) s += V.col(col).dot(V.col(t));
      sum_sq += s * s;
      if (t == col) var = s;
    }
    if (!(var > kSingularPivot * inst_.model().sigma2)) return kNegInf;
    return sum_sq / var;
  }

  Base& base_for(Index pos) {
    Base& base = bases_[static_cast<std::size_t>(pos)];
    if (base.built) return base;
    base.built = true;
    IndexList rest;
    for (std::size_t i = 0; i < cur_.size(); ++i)
      if (static_cast<Index>(i) != pos) rest.push_back(cur_[i]);
    if (static_cast<int>(rest.size()) < std::max(inst_.p(), 1)) return base;
    try {
      base.sys = std::make_shared<const KrigingSystem>(inst_, rest);
      if (base.sys->jitter() > 0) return base;
      IndexList sorted = rest;
      std::sort(sorted.begin(), sorted.end());
      base.targets = complement(sorted, inst_.size());
      base.position.assign(static_cast<std::size_t>(inst_.size()), -1);
      for (std::size_t t = 0; t < base.targets.size(); ++t)
        base.position[static_cast<std::size_t>(base.targets[t])] = static_cast<Index>(t);
      base.res = base.sys->residuals(base.targets);
      base.gain_removed = gain(base, cur_[static_cast<std::size_t>(pos)]);
      base.ok = std::isfinite(base.gain_removed);
    } catch (const Error&) {
      base.ok = false;
    }
    return base;
  }

  const Instance& inst_;
  std::vector<Base> bases_;
  Index m_ = 0;
};

/// G and MES: every swap is scored by a full evaluation of the new design.
class DirectExchange final : public ExchangeEvaluator {
 public:
  DirectExchange(const Instance& inst, Criterion c) : inst_(inst), c_(c) {}

  double reset(const IndexList& design) override {
    cur_ = design;
    ++calls_;
    score_ = score(cur_);
    return score_;
  }

  double delta(Index pos, Index b) override {
    ++calls_;
    IndexList next = cur_;
    next[static_cast<std::size_t>(pos)] = b;
    pending_ = score(next);
    if (!std::isfinite(pending_) || !std::isfinite(score_)) return std::numeric_limits<double>::infinity();
    return pending_ - score_;
  }

  void commit(Index pos, Index b) override {
    cur_[static_cast<std::size_t>(pos)] = b;
    score_ = score(cur_);
  }

 private:
  double score(const IndexList& design) const {
    try {
      if (c_ == Criterion::kMES) {
        Eigen::MatrixXd C = inst_.cov().block(design, design);
        const double ld = logdet_psd(C);
        return std::isfinite(ld) ? -ld : std::numeric_limits<double>::infinity();
      }
      KrigingSystem sys(inst_, design);
      if (sys.jitter() > 0) return std::numeric_limits<double>::infinity();
      IndexList sorted = design;
      std::sort(sorted.begin(), sorted.end());
      return sys.kriging_variances(complement(sorted, inst_.size())).maxCoeff();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  const Instance& inst_;
  Criterion c_;
  double score_ = 0, pending_ = 0;
};

inline std::unique_ptr<ExchangeEvaluator> make_exchange_evaluator(const Instance& inst, Criterion c) {
  switch (c) {
    case Criterion::kGV: return std::make_unique<GvExchange>(inst);
    case Criterion::kV: return std::make_unique<VExchange>(inst);
    case Criterion::kG:
    case Criterion::kMES: return std::make_unique<DirectExchange>(inst, c);
  }
  return nullptr;
}

// ---------------------------------------------------------------------------------------
// Exhaustive enumeration

inline SearchResult exhaustive_optimal(const Instance& inst, Criterion c, Index k,
                                       long long cap = SearchConfig{}.exhaustive_cap) {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = inst.size();
  if (k < 1 || k > n - 1) throw ConfigError("exhaustive_optimal: k must lie in [1, N-1]");
  if (binomial_capped(n, k, cap) > cap)
    throw CapacityError("exhaustive_optimal: C(" + std::to_string(n) + ", " + std::to_string(k) +
                        ") exceeds the enumeration cap of " + std::to_string(cap));
  SearchResult res;
  std::vector<Index> combo(static_cast<std::size_t>(k));
  std::iota(combo.begin(), combo.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  bool have = false;
  do {
    ++res.criterion_calls;
    double s;
    try {
      s = full_score(inst, combo, c);
    } catch (const Error&) {
      continue;
    }
    if (std::isnan(s)) continue;
    if (!have || strictly_better(s, best, Criterion::kGV)) {
      best = s;
      have = true;
      res.ties.clear();
      res.ties.emplace_back(combo, n);
    } else if (same_value(s, best)) {
      res.ties.emplace_back(combo, n);
    }
  } while (next_combination(combo, n));
  if (!have) throw NumericalError("exhaustive_optimal: no feasible design");
  res.design = res.ties.front();
  res.criterion = evaluate(inst, res.design, c);
  res.iterations = 1;
  res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------------------
// Exchange + simulated annealing

namespace detail {

inline double improvement_tol(double score) { return 1e-10 * std::max(1.0, std::abs(score)); }

inline Index pick_swap_target(Rng& rng, const Neighborhoods& nb, const IndexList& design, Index from,
                              const std::vector<char>& in_design, Index n) {
  const auto& cand = nb.of(from);
  IndexList free;
  for (Index j : cand)
    if (!in_design[static_cast<std::size_t>(j)]) free.push_back(j);
  if (!free.empty()) return free[static_cast<std::size_t>(uniform_index(rng, static_cast<Index>(free.size())))];
  (void)design;
  Index j;
  do j = uniform_index(rng, n);
  while (in_design[static_cast<std::size_t>(j)]);
  return j;
}

/// First-improvement exchange over the neighbour lists until no swap improves.
/// Returns the local optimum and the accumulated score change.
inline std::pair<IndexList, double> polish(ExchangeEvaluator& eval, IndexList cur, const Neighborhoods& nb, Index n,
                                           std::vector<double>* trace = nullptr) {
  const auto k = static_cast<Index>(cur.size());
  std::vector<char> in_design(static_cast<std::size_t>(n), 0);
  for (Index i : cur) in_design[static_cast<std::size_t>(i)] = 1;
  const double s0 = eval.reset(cur);
  double s = s0;
  bool improved = true;
  while (improved) {
    improved = false;
    for (Index pos = 0; pos < k && !improved; ++pos) {
      const Index a = cur[static_cast<std::size_t>(pos)];
      for (Index b : nb.of(a)) {
        if (in_design[static_cast<std::size_t>(b)]) continue;
        const double d = eval.delta(pos, b);
        if (std::isfinite(d) && d < -improvement_tol(s)) {
          eval.commit(pos, b);
          cur[static_cast<std::size_t>(pos)] = b;
          in_design[static_cast<std::size_t>(a)] = 0;
          in_design[static_cast<std::size_t>(b)] = 1;
          s += d;
          if (trace) trace->push_back(s - s0);
          improved = true;
          break;
        }
      }
    }
  }
  return {std::move(cur), s - s0};
}

struct RunOutcome {
  IndexList design;
  long long calls = 0;
  int iterations = 0;
  std::vector<double> trace;
};

/// One annealing run followed by an exchange polish to a local optimum.
inline RunOutcome anneal_run(const Instance& inst, Criterion c, Index k, const SearchConfig& cfg,
                             const Neighborhoods& nb, std::uint64_t seed, const std::optional<IndexList>& start) {
  Rng rng(seed);
  const Index n = inst.size();
  auto eval = make_exchange_evaluator(inst, c);
  IndexList cur = start ? *start : random_subset(rng, n, k);
  std::vector<char> in_design(static_cast<std::size_t>(n), 0);
  for (Index i : cur) in_design[static_cast<std::size_t>(i)] = 1;

  double score = eval->reset(cur);
  double best = score;
  IndexList best_design = cur;

  double T = cfg.anneal.T0;
  if (!(T > 0)) {
    double sum = 0;
    int cnt = 0;
    for (int s = 0; s < cfg.anneal.spread_samples; ++s) {
      const Index pos = uniform_index(rng, k);
      const Index b = pick_swap_target(rng, nb, cur, cur[static_cast<std::size_t>(pos)], in_design, n);
      const double d = eval->delta(pos, b);
      if (std::isfinite(d)) {
        sum += std::abs(d);
        ++cnt;
      }
    }
    T = cnt > 0 && sum > 0 ? sum / cnt : 1.0;
  }

  RunOutcome out;
  int stall = 0;
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    bool improved = false;
    for (int mv = 0; mv < cfg.anneal.moves_per_temperature; ++mv) {
      const Index pos = uniform_index(rng, k);
      const Index a = cur[static_cast<std::size_t>(pos)];
      const Index b = pick_swap_target(rng, nb, cur, a, in_design, n);
      const double d = eval->delta(pos, b);
      if (!std::isfinite(d)) continue;
      const bool accept = d < 0 || (T > 0 && uniform01(rng) < std::exp(-d / T));
      if (!accept) continue;
      eval->commit(pos, b);
      cur[static_cast<std::size_t>(pos)] = b;
      in_design[static_cast<std::size_t>(a)] = 0;
      in_design[static_cast<std::size_t>(b)] = 1;
      score += d;
      if (score < best - improvement_tol(best)) {
        best = score;
        best_design = cur;
        improved = true;
      }
    }
    out.trace.push_back(best);
    out.iterations = it;
    T *= cfg.anneal.cooling;
    stall = improved ? 0 : stall + 1;
    if (stall >= cfg.anneal.patience) break;
  }

  if (cfg.polish) best_design = polish(*eval, best_design, nb, n).first;
  std::sort(best_design.begin(), best_design.end());
  out.design = best_design;
  out.calls = eval->calls();
  return out;
}

/// Comparison key for the restart reduction (minimized). GV uses the k-sized design part.
inline double reduction_key(const Instance& inst, Criterion c, const IndexList& design) {
  if (c == Criterion::kGV) {
    try {
      KrigingSystem sys(inst, design);
      return sys.jitter() > 0 ? std::numeric_limits<double>::infinity() : gv_design_part(sys);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return full_score(inst, design, c);
}

/// Best of several designs; ties go to the lexicographically smallest index set.
inline std::size_t pick_best(const Instance& inst, Criterion c, const std::vector<IndexList>& designs) {
  std::size_t best = 0;
  double best_key = reduction_key(inst, c, designs[0]);
  for (std::size_t r = 1; r < designs.size(); ++r) {
    const double key = reduction_key(inst, c, designs[r]);
    if (strictly_better(key, best_key, Criterion::kGV) || (same_value(key, best_key) && designs[r] < designs[best])) {
      best = r;
      best_key = key;
    }
  }
  return best;
}

}  // namespace detail

/// Exchange + annealing with `restarts` independent runs (run concurrently on `threads`).
inline SearchResult anneal_exchange(const Instance& inst, Criterion c, Index k, const SearchConfig& cfg,
                                    const std::optional<Design>& start = std::nullopt) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = inst.size();
  if (k < 1 || k > n - 1) throw ConfigError("anneal_exchange: k must lie in [1, N-1]");
  if (k < inst.p()) throw ConfigError("anneal_exchange: k must be at least the number of trend parameters");
  if (start && start->size() != k) throw ConfigError("anneal_exchange: start design has the wrong size");
  Neighborhoods nb(inst.set(), inst.model(), cfg.neighborhood_radius, cfg.neighborhood_count);

  std::vector<detail::RunOutcome> runs(static_cast<std::size_t>(cfg.restarts));
  std::optional<IndexList> start_list;
  if (start) start_list = start->indices();
  parallel_for(cfg.restarts, cfg.threads, [&](int r) {
    runs[static_cast<std::size_t>(r)] =
        detail::anneal_run(inst, c, k, cfg, nb, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)),
                           r == 0 ? start_list : std::nullopt);
  });

  std::vector<IndexList> designs;
  for (const auto& run : runs) designs.push_back(run.design);
  const std::size_t best = detail::pick_best(inst, c, designs);

  SearchResult res;
  res.design = Design(designs[best], n);
  res.criterion = evaluate(inst, res.design, c);  // final audit, not counted as a search call
  res.seed = cfg.seed;
  res.trace = runs[best].trace;
  for (const auto& run : runs) {
    res.criterion_calls += run.calls;
    res.iterations += run.iterations;
  }
  res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Exchange descent only, from a given design. The trace holds the cumulative score change
/// after each accepted swap (log det Sigma for GV).
inline SearchResult exchange_polish(const Instance& inst, Criterion c, const Design& start, const SearchConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (start.size() < inst.p()) throw ConfigError("exchange_polish: design smaller than the number of trend parameters");
  Neighborhoods nb(inst.set(), inst.model(), cfg.neighborhood_radius, cfg.neighborhood_count);
  auto eval = make_exchange_evaluator(inst, c);
  SearchResult res;
  auto [design, change] = detail::polish(*eval, start.indices(), nb, inst.size(), &res.trace);
  (void)change;
  std::sort(design.begin(), design.end());
  res.design = Design(design, inst.size());
  res.criterion = evaluate(inst, res.design, c);
  res.criterion_calls = eval->calls();
  res.iterations = static_cast<int>(res.trace.size());
  res.seed = cfg.seed;
  res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------------------
// Increment selection

enum class IncrementObjective { kGV, kV };

inline IncrementObjective increment_objective_for(Criterion c) {
  switch (c) {
    case Criterion::kGV: return IncrementObjective::kGV;
    case Criterion::kV: return IncrementObjective::kV;
    default: throw ConfigError("incremental construction supports the gv and v criteria only");
  }
}

struct IncrementResult {
  IndexList increment;  // sorted candidate indices
  double objective = kNegInf;
  long long calls = 0;
  bool exhaustive = false;
};

namespace detail {

inline double pool_objective(const IncrementPool& pool, std::span<const Index> pos, IncrementObjective obj) {
  return obj == IncrementObjective::kGV ? pool.gv_objective(pos) : pool.v_objective(pos);
}

inline IndexList positions_to_indices(const IncrementPool& pool, const IndexList& pos) {
  IndexList out;
  for (Index p : pos) out.push_back(pool.pool()[static_cast<std::size_t>(p)]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Best increment of size l for the stage state. Exact enumeration when C(candidates, l)
/// fits the cap; otherwise greedy seeding, annealed swaps, and a full swap polish.
inline IncrementResult select_increment(const StageState& state, Index l, IncrementObjective obj,
                                        const SearchConfig& cfg, std::uint64_t seed_stream = 0) {
  const Index n = state.instance().size();
  IndexList pool_idx = state.candidates();
  const auto np = static_cast<Index>(pool_idx.size());
  if (l < 1) throw ConfigError("select_increment: l must be >= 1");
  if (l > np - 1) throw ConfigError("select_increment: increment larger than the candidate pool allows");
  IncrementPool pool(state, pool_idx);
  IncrementResult res;

  if (binomial_capped(np, l, cfg.exhaustive_cap) <= cfg.exhaustive_cap) {
    res.exhaustive = true;
    IndexList combo(static_cast<std::size_t>(l));
    std::iota(combo.begin(), combo.end(), 0);
    IndexList best;
    do {
      ++res.calls;
      const double v = detail::pool_objective(pool, combo, obj);
      if (best.empty() || (std::isfinite(v) && v > res.objective + detail::improvement_tol(res.objective))) {
        if (best.empty() || std::isfinite(v)) {
          res.objective = v;
          best = combo;
        }
      }
    } while (next_combination(combo, np));
    res.increment = detail::positions_to_indices(pool, best);
    return res;
  }

  // Greedy: grow the increment one point at a time.
  IndexList cur;
  std::vector<char> used(static_cast<std::size_t>(np), 0);
  for (Index s = 0; s < l; ++s) {
    Index arg = -1;
    double best = kNegInf;
    for (Index j = 0; j < np; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      cur.push_back(j);
      ++res.calls;
      const double v = detail::pool_objective(pool, cur, obj);
      cur.pop_back();
      if (arg < 0 || v > best + detail::improvement_tol(best)) {
        arg = j;
        best = v;
      }
    }
    cur.push_back(arg);
    used[static_cast<std::size_t>(arg)] = 1;
  }
  double score = detail::pool_objective(pool, cur, obj);
  ++res.calls;

  // Annealed swaps restricted to the increment; the score being maximized here.
  Rng rng(derive_seed(cfg.seed, 0xA11CE000ULL + seed_stream));
  Neighborhoods nb(state.instance().set(), state.instance().model(), cfg.neighborhood_radius, cfg.neighborhood_count);
  std::vector<Index> pos_of(static_cast<std::size_t>(n), -1);
  for (Index j = 0; j < np; ++j) pos_of[static_cast<std::size_t>(pool_idx[static_cast<std::size_t>(j)])] = j;
  auto pick = [&](Index from_pos) {
    IndexList free;
    for (Index g : nb.of(pool_idx[static_cast<std::size_t>(from_pos)])) {
      const Index q = pos_of[static_cast<std::size_t>(g)];
      if (q >= 0 && !used[static_cast<std::size_t>(q)]) free.push_back(q);
    }
    if (!free.empty()) return free[static_cast<std::size_t>(uniform_index(rng, static_cast<Index>(free.size())))];
    Index q;
    do q = uniform_index(rng, np);
    while (used[static_cast<std::size_t>(q)]);
    return q;
  };
  auto try_swap = [&](Index slot, Index q) {
    IndexList next = cur;
    next[static_cast<std::size_t>(slot)] = q;
    ++res.calls;
    return detail::pool_objective(pool, next, obj);
  };
  double T = cfg.anneal.T0;
  if (!(T > 0)) {
    double sum = 0;
    int cnt = 0;
    for (int s = 0; s < cfg.anneal.spread_samples; ++s) {
      const Index slot = uniform_index(rng, l);
      const double v = try_swap(slot, pick(cur[static_cast<std::size_t>(slot)]));
      if (std::isfinite(v) && std::isfinite(score)) {
        sum += std::abs(v - score);
        ++cnt;
      }
    }
    T = cnt > 0 && sum > 0 ? sum / cnt : 1.0;
  }
  IndexList best_set = cur;
  double best = score;
  int stall = 0;
  for (int it = 0; it < cfg.max_outer_iters; ++it) {
    bool improved = false;
    for (int mv = 0; mv < cfg.anneal.moves_per_temperature; ++mv) {
      const Index slot = uniform_index(rng, l);
      const Index q = pick(cur[static_cast<std::size_t>(slot)]);
      const double v = try_swap(slot, q);
      if (!std::isfinite(v)) continue;
      const double d = score - v;  // positive when worse
      if (d < 0 || uniform01(rng) < std::exp(-d / T)) {
        used[static_cast<std::size_t>(cur[static_cast<std::size_t>(slot)])] = 0;
        used[static_cast<std::size_t>(q)] = 1;
        cur[static_cast<std::size_t>(slot)] = q;
        score = v;
        if (score > best + detail::improvement_tol(best)) {
          best = score;
          best_set = cur;
          improved = true;
        }
      }
    }
    T *= cfg.anneal.cooling;
    stall = improved ? 0 : stall + 1;
    if (stall >= cfg.anneal.patience) break;
  }

  // Polish: first-improvement swaps against the whole pool.
  cur = best_set;
  score = best;
  std::fill(used.begin(), used.end(), 0);
  for (Index q : cur) used[static_cast<std::size_t>(q)] = 1;
  bool improved = true;
  while (improved) {
    improved = false;
    for (Index slot = 0; slot < l && !improved; ++slot)
      for (Index q = 0; q < np; ++q) {
        if (used[static_cast<std::size_t>(q)]) continue;
        const double v = try_swap(slot, q);
        if (std::isfinite(v) && v > score + detail::improvement_tol(score)) {
          used[static_cast<std::size_t>(cur[static_cast<std::size_t>(slot)])] = 0;
          used[static_cast<std::size_t>(q)] = 1;
          cur[static_cast<std::size_t>(slot)] = q;
          score = v;
          improved = true;
          break;
        }
      }
  }
  res.objective = score;
  res.increment = detail::positions_to_indices(pool, cur);
  return res;
}

// ---------------------------------------------------------------------------------------
// Incremental-decremental refinement

namespace detail {

inline double increment_objective(const StageState& s, std::span<const Index> inc, IncrementObjective obj) {
  return obj == IncrementObjective::kGV ? gv_increment_objective(s, inc) : v_increment_objective(s, inc);
}

inline IndexList sorted_union(IndexList a, std::span<const Index> b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

struct IncrDecrRun {
  IndexList design;
  long long calls = 0;
  int iterations = 0;
  std::vector<double> trace;
};

/// Score bookkeeping (GV shown; V is identical with the trace objective):
///   score(xi_1 u inc) = score(xi_1) - log det Sigma_2(inc | xi_1)
///   score(R)          = score(xi) + log det Sigma_2*(xi \ R | R)
inline IncrDecrRun incr_decr_run(const Instance& inst, IncrementObjective obj, Index k_target, Index k_start,
                                 Index k1, const SearchConfig& cfg, std::uint64_t seed,
                                 const std::optional<IndexList>& start) {
  Rng rng(seed);
  const Index n = inst.size();
  IncrDecrRun out;
  std::uint64_t stream = 0;

  std::optional<StageState> state;
  IndexList design;
  for (int attempt = 0; attempt < 100 && !state; ++attempt) {
    design = start ? *start : random_subset(rng, n, k_start);
    try {
      state.emplace(inst, design);
      if (state->base().jitter() > 0) state.reset();
    } catch (const Error&) {
      state.reset();
    }
    if (start && !state) throw ConfigError("incr_decr: start design is not a valid kriging design");
  }
  if (!state) throw NumericalError("incr_decr: could not draw an identifiable starting design");

  IncrementResult first = select_increment(*state, k_target - k_start, obj, cfg, stream++);
  out.calls += first.calls;
  design = sorted_union(design, first.increment);
  double score = -first.objective;
  out.trace.push_back(score);

  const Index l1 = k_target - k1;
  const bool systematic = binomial_capped(k_target, k1, cfg.incr_decr.systematic_cap) <= cfg.incr_decr.systematic_cap;
  for (int round = 0; round < cfg.incr_decr.rounds; ++round) {
    ++out.iterations;
    bool improved = false;
    std::vector<IndexList> retained_sets;
    if (systematic) {
      IndexList c(static_cast<std::size_t>(k1));
      std::iota(c.begin(), c.end(), 0);
      do {
        IndexList r;
        for (Index q : c) r.push_back(design[static_cast<std::size_t>(q)]);
        retained_sets.push_back(std::move(r));
      } while (next_combination(c, k_target));
    } else {
      for (int t = 0; t < cfg.incr_decr.random_decrements; ++t) {
        IndexList r;
        for (Index q : random_subset(rng, k_target, k1)) r.push_back(design[static_cast<std::size_t>(q)]);
        retained_sets.push_back(std::move(r));
      }
    }
    for (const auto& retained : retained_sets) {
      std::optional<StageState> reduced;
      try {
        reduced.emplace(inst, retained);
        if (reduced->base().jitter() > 0) continue;
      } catch (const Error&) {
        continue;
      }
      IndexList drop;
      std::set_difference(design.begin(), design.end(), retained.begin(), retained.end(), std::back_inserter(drop));
      ++out.calls;
      const double star = increment_objective(*reduced, drop, obj);
      if (!std::isfinite(star)) continue;
      IncrementResult inc = select_increment(*reduced, l1, obj, cfg, stream++);
      out.calls += inc.calls;
      if (!std::isfinite(inc.objective)) continue;
      const double next = score + star - inc.objective;
      if (next < score - improvement_tol(score)) {
        design = sorted_union(retained, inc.increment);
        score = next;
        improved = true;
        break;
      }
    }
    out.trace.push_back(score);
    if (!improved) break;
  }
  out.design = design;
  return out;
}

}  // namespace detail

/// Incremental-decremental optimization of a k_target-point design for GV or V.
inline SearchResult incr_decr_optimize(const Instance& inst, Criterion c, Index k_target, const SearchConfig& cfg,
                                       const std::optional<Design>& start = std::nullopt) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const IncrementObjective obj = increment_objective_for(c);
  const Index p = inst.p();
  if (k_target <= p) throw ConfigError("incr_decr: k_target must exceed the number of trend parameters");
  if (k_target > inst.size() - 2) throw ConfigError("incr_decr: k_target too large for the candidate set");
  Index k_start = cfg.incr_decr.k_start > 0 ? cfg.incr_decr.k_start : std::max<Index>(p, 1);
  if (start) k_start = start->size();
  if (cfg.incr_decr.l > 0 && k_start + cfg.incr_decr.l != k_target)
    throw ConfigError("incr_decr: k_start + l must equal k_target");
  if (k_start < std::max<Index>(p, 1) || k_start >= k_target)
    throw ConfigError("incr_decr: k_start must lie in [max(p,1), k_target)");
  const Index k1 = cfg.incr_decr.k1 > 0 ? cfg.incr_decr.k1 : k_start;
  if (k1 < std::max<Index>(p, 1) || k1 >= k_target) throw ConfigError("incr_decr: k1 must lie in [max(p,1), k_target)");

  std::vector<detail::IncrDecrRun> runs(static_cast<std::size_t>(cfg.restarts));
  std::optional<IndexList> start_list;
  if (start) start_list = start->indices();
  parallel_for(cfg.restarts, cfg.threads, [&](int r) {
    runs[static_cast<std::size_t>(r)] =
        detail::incr_decr_run(inst, obj, k_target, k_start, k1, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)),
                              r == 0 ? start_list : std::nullopt);
  });
  std::vector<IndexList> designs;
  for (const auto& run : runs) designs.push_back(run.design);
  const std::size_t best = detail::pick_best(inst, c, designs);

  SearchResult res;
  res.design = Design(designs[best], inst.size());
  res.criterion = evaluate(inst, res.design, c);  // final audit, not counted as a search call
  res.seed = cfg.seed;
  res.trace = runs[best].trace;
  for (const auto& run : runs) {
    res.criterion_calls += run.calls;
    res.iterations += run.iterations;
  }
  res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace krigdes
