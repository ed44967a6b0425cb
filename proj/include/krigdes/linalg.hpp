#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "krigdes/error.hpp"

namespace krigdes {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct JitterPolicy {
  double first = 1e-10;  // relative to sigma2
  double last = 1e-6;
  double factor = 10.0;
};

/// Cholesky factor of a covariance matrix, possibly after a diagonal jitter.
struct CholeskyFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  Eigen::Index size() const { return llt.matrixLLT().rows(); }

  double logdet() const {
    double s = 0;
    const auto& L = llt.matrixLLT();
    for (Eigen::Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    return 2.0 * s;
  }

  /// L^{-1} X
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& X) const {
    return llt.matrixL().solve(X);
  }
};

namespace detail {

inline bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i)
    if (!(L(i, i) > 0) || !std::isfinite(L(i, i))) return false;
  return true;
}

}  // namespace detail

/// Factor C; on failure retry with jitter first*scale, escalating by `factor` up to last*scale.
inline CholeskyFactor factor_with_jitter(const Eigen::MatrixXd& C, double scale,
                                         const JitterPolicy& policy = {}) {
  CholeskyFactor f;
  f.llt.compute(C);
  if (detail::factor_ok(f.llt)) return f;
  for (double rel = policy.first; rel <= policy.last * (1 + 1e-12); rel *= policy.factor) {
    Eigen::MatrixXd Cj = C;
    Cj.diagonal().array() += rel * scale;
    f.llt.compute(Cj);
    if (detail::factor_ok(f.llt)) {
      f.jitter = rel * scale;
      return f;
    }
  }
  throw NumericalError("covariance matrix of size " + std::to_string(C.rows()) +
                       " is not positive definite after jitter up to " + std::to_string(policy.last) +
                       " * sigma2");
}

/// Relative pivot threshold under which a PSD matrix is reported as singular.
inline constexpr double kSingularPivot = 1e-14;

/// log det of a symmetric PSD matrix via Cholesky; -inf when numerically singular.
inline double logdet_psd(const Eigen::MatrixXd& S) {
  if (S.rows() == 0) return 0.0;
  const double scale = S.diagonal().cwiseAbs().maxCoeff();
  if (!(scale > 0)) return kNegInf;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return kNegInf;
  const auto& L = llt.matrixLLT();
  double s = 0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const double piv = L(i, i) * L(i, i);
    if (!(piv > kSingularPivot * scale)) return kNegInf;
    s += std::log(L(i, i));
  }
  return 2.0 * s;
}

/// Symmetrized copy (A + A^T) / 2.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

}  // namespace krigdes
