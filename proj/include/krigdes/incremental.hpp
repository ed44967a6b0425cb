#pragma once

// Stage-two updates for an increment xi_2 added to a first-stage design xi_1.
//
// The first-stage kriging covariance over X \ xi_1 is partitioned as
//   [ S2   S20 ]
//   [ S20' S0  ]
// by the increment. Then
//   W2 = S20' S2^-1,  W1 = W10 - W2 W12,  S0+ = S0 - S20' S2^-1 S20,
// and log det S0+ = log det(stage-one Sigma) - log det S2, so the GV-optimal increment
// maximizes det S2 and the V-optimal one maximizes tr S2 + tr(S2^-1 S20 S20').
// S2 only needs k-, l- and p-sized matrices.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/criteria.hpp"
#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/linalg.hpp"

namespace krigdes {

class StageState {
 public:
  /// With `track_logdet`, the stage-one GV value is computed once from the full matrix.
  StageState(const Instance& inst, IndexList xi1, bool track_logdet = false)
      : base_(std::make_shared<KrigingSystem>(inst, std::move(xi1))) {
    init_sorted();
    if (track_logdet) logdet_D_ = logdet_psd(base_->kriging_cov(complement(sorted_, inst.size())));
  }

  StageState(std::shared_ptr<const KrigingSystem> base, std::optional<double> logdet_D)
      : base_(std::move(base)), logdet_D_(logdet_D) {
    init_sorted();
  }

  const Instance& instance() const { return base_->instance(); }
  const KrigingSystem& base() const { return *base_; }
  const IndexList& design() const { return base_->design(); }
  const IndexList& design_sorted() const { return sorted_; }
  bool in_design(Index i) const { return std::binary_search(sorted_.begin(), sorted_.end(), i); }
  std::optional<double> logdet_D() const { return logdet_D_; }

  /// Non-design points of the first stage.
  IndexList candidates() const { return complement(sorted_, instance().size()); }

 private:
  void init_sorted() {
    sorted_ = base_->design();
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::shared_ptr<const KrigingSystem> base_;
  std::optional<double> logdet_D_;
  IndexList sorted_;
};

struct KrigingCovBlocks {
  Eigen::MatrixXd sigma2;                  // l x l
  std::optional<Eigen::MatrixXd> sigma20;  // l x m
  std::optional<Eigen::MatrixXd> sigma0;   // m x m
};

namespace detail {

inline void check_increment(const StageState& s, std::span<const Index> inc) {
  const Index n = s.instance().size();
  for (std::size_t a = 0; a < inc.size(); ++a) {
    if (inc[a] < 0 || inc[a] >= n) throw ConfigError("increment index out of range");
    if (s.in_design(inc[a]))
      throw ConfigError("increment point " + std::to_string(inc[a]) + " overlaps the first-stage design");
    for (std::size_t b = 0; b < a; ++b)
      if (inc[a] == inc[b]) throw ConfigError("increment contains a repeated index");
  }
}

inline void check_targets(const StageState& s, std::span<const Index> inc, std::span<const Index> targets) {
  for (Index t : targets) {
    if (s.in_design(t)) throw ConfigError("target " + std::to_string(t) + " lies in the first-stage design");
    if (std::find(inc.begin(), inc.end(), t) != inc.end())
      throw ConfigError("target " + std::to_string(t) + " lies in the increment");
  }
}

/// Exact-interpolation duplicates make S2 singular; detect them structurally.
inline bool has_duplicate(const StageState& s, std::span<const Index> inc) {
  const auto& cov = s.instance().cov();
  if (s.instance().model().nugget > 0) return false;
  for (std::size_t a = 0; a < inc.size(); ++a) {
    for (Index d : s.design())
      if (cov.indistinguishable(inc[a], d)) return true;
    for (std::size_t b = 0; b < a; ++b)
      if (cov.indistinguishable(inc[a], inc[b])) return true;
  }
  return false;
}

inline Eigen::MatrixXd block_from_residuals(const Instance& inst, std::span<const Index> rows,
                                            std::span<const Index> cols, const Residuals& rr,
                                            const Residuals& rc) {
  Eigen::MatrixXd S = inst.cov().block(rows, cols);
  S.noalias() -= rr.R.transpose() * rc.R;
  if (rr.V.rows() > 0) S.noalias() += rr.V.transpose() * rc.V;
  return S;
}

/// Cholesky of S2, or nullopt when it is numerically singular.
inline std::optional<Eigen::LLT<Eigen::MatrixXd>> factor_sigma2(const Eigen::MatrixXd& S2) {
  if (S2.rows() == 0) return Eigen::LLT<Eigen::MatrixXd>(S2);
  if (!std::isfinite(logdet_psd(S2))) return std::nullopt;
  return Eigen::LLT<Eigen::MatrixXd>(S2);
}

}  // namespace detail

/// Sigma_2 = W12 C1 W12' - W12 C12 - C12' W12' + C2, evaluated in residual form.
inline Eigen::MatrixXd sigma2_block(const StageState& s, std::span<const Index> inc) {
  detail::check_increment(s, inc);
  Residuals r = s.base().residuals(inc);
  return symmetrize(detail::block_from_residuals(s.instance(), inc, inc, r, r));
}

/// All blocks of the stage-one kriging covariance partitioned by the increment.
inline KrigingCovBlocks stage_blocks(const StageState& s, std::span<const Index> inc,
                                     std::span<const Index> targets, bool with_sigma0 = true) {
  detail::check_increment(s, inc);
  detail::check_targets(s, inc, targets);
  Residuals ri = s.base().residuals(inc);
  Residuals rt = s.base().residuals(targets);
  KrigingCovBlocks b;
  b.sigma2 = symmetrize(detail::block_from_residuals(s.instance(), inc, inc, ri, ri));
  b.sigma20 = detail::block_from_residuals(s.instance(), inc, targets, ri, rt);
  if (with_sigma0) b.sigma0 = symmetrize(detail::block_from_residuals(s.instance(), targets, targets, rt, rt));
  return b;
}

/// log det Sigma_2; -inf for a singular (dominated) increment.
inline double gv_increment_objective(const StageState& s, std::span<const Index> inc) {
  detail::check_increment(s, inc);
  if (detail::has_duplicate(s, inc)) return kNegInf;
  return logdet_psd(sigma2_block(s, inc));
}

/// tr Sigma_2 + tr(Sigma_2^-1 Sigma_20 Sigma_20'), targets defaulting to all remaining points.
inline double v_increment_objective(const StageState& s, std::span<const Index> inc,
                                    std::optional<std::span<const Index>> targets = std::nullopt) {
  IndexList own;
  if (!targets) {
    IndexList used = s.design_sorted();
    used.insert(used.end(), inc.begin(), inc.end());
    std::sort(used.begin(), used.end());
    own = complement(used, s.instance().size());
    targets = std::span<const Index>(own);
  }
  detail::check_increment(s, inc);
  if (detail::has_duplicate(s, inc)) return kNegInf;
  KrigingCovBlocks b = stage_blocks(s, inc, *targets, false);
  auto llt = detail::factor_sigma2(b.sigma2);
  if (!llt) return kNegInf;
  Eigen::MatrixXd Z = llt->matrixL().solve(*b.sigma20);
  return b.sigma2.trace() + Z.squaredNorm();
}

struct UpdatedWeights {
  Eigen::MatrixXd W1;  // m x k
  Eigen::MatrixXd W2;  // m x l
};

/// Second-stage weights from first-stage quantities: W2 = S20' S2^-1, W1 = W10 - W2 W12.
inline UpdatedWeights update_weights(const StageState& s, std::span<const Index> inc,
                                     std::span<const Index> targets) {
  UpdatedWeights out;
  out.W1 = s.base().weights(targets);
  if (inc.empty()) {
    detail::check_targets(s, inc, targets);
    out.W2.resize(static_cast<Eigen::Index>(targets.size()), 0);
    return out;
  }
  KrigingCovBlocks b = stage_blocks(s, inc, targets, false);
  auto llt = detail::factor_sigma2(b.sigma2);
  if (!llt) throw NumericalError("update_weights: Sigma_2 is singular");
  out.W2 = llt->solve(*b.sigma20).transpose();
  Eigen::MatrixXd W12 = s.base().weights(inc);
  out.W1 -= out.W2 * W12;
  return out;
}

/// Sigma_0+ = Sigma_0 - Sigma_20' Sigma_2^-1 Sigma_20.
inline Eigen::MatrixXd update_kriging_cov(const KrigingCovBlocks& b) {
  if (!b.sigma0) throw ConfigError("update_kriging_cov: Sigma_0 block missing");
  if (b.sigma2.rows() == 0) return *b.sigma0;
  auto llt = detail::factor_sigma2(b.sigma2);
  if (!llt) throw NumericalError("update_kriging_cov: Sigma_2 is singular");
  Eigen::MatrixXd Z = llt->matrixL().solve(*b.sigma20);
  Eigen::MatrixXd out = *b.sigma0;
  out.noalias() -= Z.transpose() * Z;
  return symmetrize(out);
}

inline Eigen::MatrixXd update_kriging_cov(const StageState& s, std::span<const Index> inc,
                                          std::span<const Index> targets) {
  if (inc.empty()) {
    detail::check_targets(s, inc, targets);
    return s.base().kriging_cov(targets);
  }
  return update_kriging_cov(stage_blocks(s, inc, targets, true));
}

/// logdet after adding `inc`: logdet_D - log det Sigma_2.
inline double chain_logdet_increment(const StageState& s, std::span<const Index> inc) {
  if (!s.logdet_D()) throw ConfigError("chain_logdet: stage state does not track logdet");
  return *s.logdet_D() - gv_increment_objective(s, inc);
}

/// logdet after removing `drop` from a design whose logdet is `logdet_current`;
/// `reduced` is the state of the design without `drop`.
inline double chain_logdet_decrement(double logdet_current, const StageState& reduced, std::span<const Index> drop) {
  return logdet_current + gv_increment_objective(reduced, drop);
}

/// State of xi_1 u inc with its logdet chained (no m x m work).
inline StageState increment_state(const StageState& s, std::span<const Index> inc) {
  std::optional<double> d;
  if (s.logdet_D()) d = chain_logdet_increment(s, inc);
  IndexList pts = s.design();
  pts.insert(pts.end(), inc.begin(), inc.end());
  return StageState(std::make_shared<KrigingSystem>(s.instance(), std::move(pts)), d);
}

/// State of xi_1 \ drop. The base system is rebuilt; the logdet is chained via Sigma_2*.
inline StageState decrement_state(const StageState& s, std::span<const Index> drop) {
  IndexList pts;
  for (Index i : s.design())
    if (std::find(drop.begin(), drop.end(), i) == drop.end()) pts.push_back(i);
  if (pts.size() + drop.size() != s.design().size())
    throw ConfigError("decrement: dropped points must belong to the design");
  auto sys = std::make_shared<const KrigingSystem>(s.instance(), std::move(pts));
  StageState reduced(sys, std::nullopt);
  if (!s.logdet_D()) return reduced;
  return StageState(sys, chain_logdet_decrement(*s.logdet_D(), reduced, drop));
}

/// Residual columns cached for a pool of candidates so that many increments drawn from
/// the pool can be scored with only k-, l- and p-sized work per evaluation.
class IncrementPool {
 public:
  IncrementPool(const StageState& s, IndexList pool) : state_(&s), pool_(std::move(pool)) {
    r_ = s.base().residuals(pool_);
    var_.resize(static_cast<Eigen::Index>(pool_.size()));
    const auto& cov = s.instance().cov();
    for (Eigen::Index j = 0; j < var_.size(); ++j) {
      const Index t = pool_[static_cast<std::size_t>(j)];
      var_(j) = cov(t, t) - r_.R.col(j).squaredNorm() + (r_.V.rows() > 0 ? r_.V.col(j).squaredNorm() : 0.0);
    }
    dup_with_design_.assign(pool_.size(), 0);
    if (s.instance().model().nugget == 0)
      for (std::size_t j = 0; j < pool_.size(); ++j)
        for (Index d : s.design())
          if (cov.indistinguishable(pool_[j], d)) dup_with_design_[j] = 1;
  }

  const StageState& state() const { return *state_; }
  const IndexList& pool() const { return pool_; }
  Index size() const { return static_cast<Index>(pool_.size()); }
  /// First-stage kriging variance of pool[pos].
  double variance(Index pos) const { return var_(pos); }

  Eigen::MatrixXd sigma2(std::span<const Index> pos) const {
    const auto l = static_cast<Eigen::Index>(pos.size());
    const auto& cov = state_->instance().cov();
    Eigen::MatrixXd S(l, l);
    for (Eigen::Index a = 0; a < l; ++a) {
      S(a, a) = var_(pos[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < a; ++b) {
        const Index i = pos[static_cast<std::size_t>(a)], j = pos[static_cast<std::size_t>(b)];
        double v = cov(pool_[static_cast<std::size_t>(i)], pool_[static_cast<std::size_t>(j)]) -
                   r_.R.col(i).dot(r_.R.col(j));
        if (r_.V.rows() > 0) v += r_.V.col(i).dot(r_.V.col(j));
        S(a, b) = S(b, a) = v;
      }
    }
    return S;
  }

  bool duplicate(std::span<const Index> pos) const {
    if (state_->instance().model().nugget > 0) return false;
    const auto& cov = state_->instance().cov();
    for (std::size_t a = 0; a < pos.size(); ++a) {
      if (dup_with_design_[static_cast<std::size_t>(pos[a])]) return true;
      for (std::size_t b = 0; b < a; ++b)
        if (cov.indistinguishable(pool_[static_cast<std::size_t>(pos[a])], pool_[static_cast<std::size_t>(pos[b])]))
          return true;
    }
    return false;
  }

  double gv_objective(std::span<const Index> pos) const {
    if (duplicate(pos)) return kNegInf;
    return logdet_psd(sigma2(pos));
  }

  /// V objective with the rest of the pool as prediction targets.
  double v_objective(std::span<const Index> pos) const {
    if (duplicate(pos)) return kNegInf;
    Eigen::MatrixXd S2 = sigma2(pos);
    auto llt = detail::factor_sigma2(S2);
    if (!llt) return kNegInf;
    const auto l = static_cast<Eigen::Index>(pos.size());
    const auto& cov = state_->instance().cov();
    Eigen::MatrixXd Z(l, size());
    for (Eigen::Index a = 0; a < l; ++a) {
      const Index i = pos[static_cast<std::size_t>(a)];
      const Index gi = pool_[static_cast<std::size_t>(i)];
      for (Index j = 0; j < size(); ++j) Z(a, j) = cov(gi, pool_[static_cast<std::size_t>(j)]);
    }
    Eigen::MatrixXd Ri(r_.R.rows(), l), Vi(r_.V.rows(), l);
    for (Eigen::Index a = 0; a < l; ++a) {
      Ri.col(a) = r_.R.col(pos[static_cast<std::size_t>(a)]);
      if (r_.V.rows() > 0) Vi.col(a) = r_.V.col(pos[static_cast<std::size_t>(a)]);
    }
    Z.noalias() -= Ri.transpose() * r_.R;
    if (r_.V.rows() > 0) Z.noalias() += Vi.transpose() * r_.V;
    // [S2 | S20] Z rows: tr(S2^-1 Z Z') = tr S2 + tr(S2^-1 S20 S20').
    return llt->matrixL().solve(Z).squaredNorm();
  }

 private:
  const StageState* state_;
  IndexList pool_;
  Residuals r_;
  Eigen::VectorXd var_;
  std::vector<char> dup_with_design_;
};

}  // namespace krigdes
