#pragma once

// BLUP weights and kriging covariance matrices for simple, ordinary and universal kriging.
//
// For a design xi with covariance C (factor L L^T) and trend matrix F:
//   B = (F^T C^-1 F)^-1 F^T C^-1,  A = C^-1 (I - F B),  W = F_0 B + C_x0^T A.
// The kriging covariance is evaluated in the equivalent residual form
//   Sigma = C_0 - R^T R + V^T V,  R = L^-1 C_x0,  V = L_M^-1 (F_0 - R^T L^-1 F)^T,
// with L_M the Cholesky factor of F^T C^-1 F. Simple kriging is the p = 0 case.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/covariance.hpp"
#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"
#include "krigdes/linalg.hpp"

namespace krigdes {

class KrigingVariant {
 public:
  enum class Kind { kSimple, kOrdinary, kUniversal };

  /// Known mean: empty or one value (constant) or one value per candidate.
  static KrigingVariant simple(std::vector<double> mean = {}) {
    KrigingVariant v(Kind::kSimple, TrendBasis::constant());
    v.mean_ = std::move(mean);
    return v;
  }
  static KrigingVariant ordinary() { return KrigingVariant(Kind::kOrdinary, TrendBasis::constant()); }
  static KrigingVariant universal(TrendBasis basis) { return KrigingVariant(Kind::kUniversal, std::move(basis)); }

  Kind kind() const { return kind_; }
  const TrendBasis& basis() const { return basis_; }
  const std::vector<double>& mean() const { return mean_; }
  int p(int d) const { return kind_ == Kind::kSimple ? 0 : basis_.size(d); }

  std::string name() const {
    switch (kind_) {
      case Kind::kSimple: return "simple";
      case Kind::kOrdinary: return "ordinary";
      case Kind::kUniversal: return "universal";
    }
    return "";
  }

 private:
  KrigingVariant(Kind k, TrendBasis b) : kind_(k), basis_(std::move(b)) {}

  Kind kind_;
  TrendBasis basis_;
  std::vector<double> mean_;
};

/// Candidate set + covariance model + kriging variant: everything a design is judged against.
class Instance {
 public:
  Instance(std::shared_ptr<const CandidateSet> set, CovModel model, KrigingVariant variant,
           Index cache_limit = CovarianceField::kDefaultCacheLimit)
      : variant_(std::move(variant)), cov_(std::move(set), model, cache_limit), cache_limit_(cache_limit) {
    if (variant_.kind() != KrigingVariant::Kind::kSimple) variant_.basis().check(cov_.set());
    const auto& mu = variant_.mean();
    if (!mu.empty() && mu.size() != 1 && static_cast<Index>(mu.size()) != cov_.set().size())
      throw ConfigError("simple kriging mean must have 1 or N entries");
  }

  Instance(CandidateSet set, CovModel model, KrigingVariant variant,
           Index cache_limit = CovarianceField::kDefaultCacheLimit)
      : Instance(std::make_shared<const CandidateSet>(std::move(set)), model, std::move(variant), cache_limit) {}

  const CandidateSet& set() const { return cov_.set(); }
  const std::shared_ptr<const CandidateSet>& set_ptr() const { return cov_.set_ptr(); }
  const CovModel& model() const { return cov_.model(); }
  const KrigingVariant& variant() const { return variant_; }
  const CovarianceField& cov() const { return cov_; }
  Index size() const { return set().size(); }
  int p() const { return variant_.p(set().dim()); }

  Eigen::MatrixXd basis(std::span<const Index> rows) const {
    if (p() == 0) return Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), 0);
    return basis_matrix(variant_.basis(), set(), rows);
  }

  double mean_at(Index i) const {
    const auto& mu = variant_.mean();
    if (mu.empty()) return 0.0;
    if (mu.size() == 1) return mu[0];
    return mu[static_cast<std::size_t>(i)];
  }

  /// Same instance for responses multiplied by s.
  Instance scaled(double s) const {
    std::vector<double> mu = variant_.mean();
    for (auto& m : mu) m *= s;
    KrigingVariant v = variant_;
    if (v.kind() == KrigingVariant::Kind::kSimple) v = KrigingVariant::simple(mu);
    return Instance(set_ptr(), model().scaled(s), v, cache_limit_);
  }

  Instance with_model(const CovModel& m) const { return Instance(set_ptr(), m, variant_, cache_limit_); }
  Instance with_variant(KrigingVariant v) const { return Instance(set_ptr(), model(), std::move(v), cache_limit_); }

 private:
  KrigingVariant variant_;
  CovarianceField cov_;
  Index cache_limit_;
};

/// Residual columns of a set of targets against a fixed design.
struct Residuals {
  Eigen::MatrixXd R;  // k x m, L^-1 C_{xi,T}
  Eigen::MatrixXd V;  // p x m, L_M^-1 (F_T - R^T G)^T
};

/// Cached factorizations for one design. Holds a pointer to the instance, which must outlive it.
class KrigingSystem {
 public:
  KrigingSystem(const Instance& inst, IndexList design) : inst_(&inst), points_(std::move(design)) {
    const Index n = inst.size();
    for (Index i : points_)
      if (i < 0 || i >= n) throw ConfigError("design index out of range");
    const auto k = static_cast<Eigen::Index>(points_.size());
    const int p = inst.p();
    if (k < 1) throw ConfigError("design must contain at least one point");
    if (k < p)
      throw ConfigError("under-identified trend: design has " + std::to_string(k) + " points but the trend has " +
                        std::to_string(p) + " parameters");
    Eigen::MatrixXd C = inst.cov().block(points_, points_);
    chol_ = factor_with_jitter(C, inst.model().sigma2);
    F_ = inst.basis(points_);
    G_ = chol_.half_solve(F_);
    if (p > 0) {
      Eigen::MatrixXd M = G_.transpose() * G_;
      lm_.compute(M);
      const double scale = M.diagonal().maxCoeff();
      bool ok = lm_.info() == Eigen::Success;
      for (Eigen::Index i = 0; ok && i < p; ++i)
        ok = lm_.matrixLLT()(i, i) * lm_.matrixLLT()(i, i) > 1e-13 * scale;
      if (!ok) throw NumericalError("trend not identifiable on this design (F^T C^-1 F is singular)");
    }
    // B = M^-1 (C^-1 F)^T
    Eigen::MatrixXd cinv_f = chol_.llt.solve(F_);
    if (p > 0) {
      B_ = lm_.solve(cinv_f.transpose());
    } else {
      B_.resize(0, k);
    }
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);
    A_ = chol_.llt.solve(I - F_ * B_);
  }

  const Instance& instance() const { return *inst_; }
  const IndexList& design() const { return points_; }
  Eigen::Index k() const { return static_cast<Eigen::Index>(points_.size()); }
  Eigen::Index p() const { return F_.cols(); }
  const CholeskyFactor& chol() const { return chol_; }
  const Eigen::MatrixXd& F() const { return F_; }
  const Eigen::MatrixXd& B() const { return B_; }
  const Eigen::MatrixXd& A() const { return A_; }
  double jitter() const { return chol_.jitter; }

  double logdet_C() const { return chol_.logdet(); }
  /// log det F^T C^-1 F (0 for simple kriging).
  double logdet_M() const {
    double s = 0;
    for (Eigen::Index i = 0; i < p(); ++i) s += std::log(lm_.matrixLLT()(i, i));
    return 2.0 * s;
  }

  Residuals residuals(std::span<const Index> targets) const {
    Residuals out;
    out.R = chol_.half_solve(inst_->cov().block(points_, targets));
    if (p() > 0) {
      Eigen::MatrixXd U = inst_->basis(targets) - out.R.transpose() * G_;
      out.V = lm_.matrixL().solve(U.transpose());
    } else {
      out.V.resize(0, static_cast<Eigen::Index>(targets.size()));
    }
    return out;
  }

  /// Weight matrix W (m x k); row i gives the weights of Y_xi for predicting targets[i].
  Eigen::MatrixXd weights(std::span<const Index> targets) const {
    Eigen::MatrixXd Cx0 = inst_->cov().block(points_, targets);
    Eigen::MatrixXd W = Cx0.transpose() * A_;
    if (p() > 0) W += inst_->basis(targets) * B_;
    return W;
  }

  /// Kriging covariance matrix over targets (Cov of prediction errors).
  Eigen::MatrixXd kriging_cov(std::span<const Index> targets) const {
    Residuals r = residuals(targets);
    Eigen::MatrixXd S = inst_->cov().block(targets, targets);
    S.noalias() -= r.R.transpose() * r.R;
    if (p() > 0) S.noalias() += r.V.transpose() * r.V;
    return symmetrize(S);
  }

  /// Diagonal of kriging_cov without forming the m x m matrix.
  Eigen::VectorXd kriging_variances(std::span<const Index> targets) const {
    Residuals r = residuals(targets);
    Eigen::VectorXd v(static_cast<Eigen::Index>(targets.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const Index t = targets[static_cast<std::size_t>(j)];
      v(j) = inst_->cov()(t, t) - r.R.col(j).squaredNorm() + (p() > 0 ? r.V.col(j).squaredNorm() : 0.0);
    }
    return v;
  }

  Eigen::VectorXd predict(std::span<const Index> targets, const Eigen::VectorXd& y) const {
    if (y.size() != k())
      throw ConfigError("predict: expected " + std::to_string(k()) + " observations, got " + std::to_string(y.size()));
    Eigen::MatrixXd W = weights(targets);
    if (inst_->variant().kind() != KrigingVariant::Kind::kSimple) return W * y;
    Eigen::VectorXd mu_x(k()), mu_0(static_cast<Eigen::Index>(targets.size()));
    for (Eigen::Index i = 0; i < k(); ++i) mu_x(i) = inst_->mean_at(points_[static_cast<std::size_t>(i)]);
    for (Eigen::Index i = 0; i < mu_0.size(); ++i) mu_0(i) = inst_->mean_at(targets[static_cast<std::size_t>(i)]);
    return mu_0 + W * (y - mu_x);
  }

 private:
  const Instance* inst_;
  IndexList points_;
  CholeskyFactor chol_;
  Eigen::MatrixXd F_, G_;
  Eigen::LLT<Eigen::MatrixXd> lm_;
  Eigen::MatrixXd B_, A_;
};

inline KrigingSystem build_system(const Instance& inst, const Design& design) {
  return KrigingSystem(inst, design.indices());
}

inline Eigen::MatrixXd weights(const KrigingSystem& sys, std::span<const Index> targets) {
  return sys.weights(targets);
}

inline Eigen::MatrixXd kriging_cov(const KrigingSystem& sys, std::span<const Index> targets) {
  return sys.kriging_cov(targets);
}

inline Eigen::VectorXd predict(const KrigingSystem& sys, std::span<const Index> targets, const Eigen::VectorXd& y) {
  return sys.predict(targets, y);
}

/// Ordinary kriging covariance split as Sigma_SK + u u^T / b, with
/// u = 1_m - C_x0^T C^-1 1_k and b = 1_k^T C^-1 1_k.
struct OkParts {
  Eigen::MatrixXd sigma_sk;
  Eigen::VectorXd u;
  double b = 0;

  Eigen::MatrixXd correction() const { return (u * u.transpose()) / b; }
  Eigen::MatrixXd assemble() const { return sigma_sk + correction(); }
};

inline OkParts kriging_cov_ok_parts(const KrigingSystem& sys, std::span<const Index> targets) {
  if (sys.instance().variant().kind() != KrigingVariant::Kind::kOrdinary)
    throw ConfigError("kriging_cov_ok_parts requires the ordinary kriging variant");
  const Instance& inst = sys.instance();
  Eigen::MatrixXd R = sys.chol().half_solve(inst.cov().block(sys.design(), targets));
  Eigen::VectorXd g = sys.chol().half_solve(Eigen::VectorXd::Ones(sys.k()));
  OkParts parts;
  parts.sigma_sk = inst.cov().block(targets, targets);
  parts.sigma_sk.noalias() -= R.transpose() * R;
  parts.sigma_sk = symmetrize(parts.sigma_sk);
  parts.u = Eigen::VectorXd::Ones(R.cols()) - R.transpose() * g;
  parts.b = g.squaredNorm();
  return parts;
}

}  // namespace krigdes
