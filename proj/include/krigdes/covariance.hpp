#pragma once

// Matérn covariance (geoR parameterization) with nugget and geometric anisotropy.
//
//   rho(h) = 2^(1-kappa) / Gamma(kappa) * (h/phi)^kappa * K_kappa(h/phi)
//   cov(x_i, x_j) = sigma2 * rho(|x_i - x_j|_A) + nugget * [i == j]

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>

#include <Eigen/Dense>

#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"

namespace krigdes {

struct Anisotropy {
  double angle = 0.0;  // radians
  double ratio = 1.0;  // >= 1
};

struct CovModel {
  double sigma2 = 1.0;
  double phi = 1.0;
  double kappa = 0.5;
  double nugget = 0.0;
  std::optional<Anisotropy> anisotropy;

  void validate() const {
    if (!(sigma2 > 0) || !std::isfinite(sigma2)) throw ConfigError("model: sigma2 must be > 0");
    if (!(phi > 0) || !std::isfinite(phi)) throw ConfigError("model: phi must be > 0");
    if (!(kappa > 0) || !std::isfinite(kappa)) throw ConfigError("model: kappa must be > 0");
    if (!(nugget >= 0) || !std::isfinite(nugget)) throw ConfigError("model: nugget must be >= 0");
    if (anisotropy) {
      if (!(anisotropy->ratio >= 1) || !std::isfinite(anisotropy->ratio))
        throw ConfigError("model: aniso_ratio must be >= 1");
      if (!std::isfinite(anisotropy->angle)) throw ConfigError("model: aniso_angle must be finite");
    }
  }

  /// Model for responses multiplied by s: every variance term scales by s^2.
  CovModel scaled(double s) const {
    CovModel m = *this;
    m.sigma2 *= s * s;
    m.nugget *= s * s;
    return m;
  }
};

inline double matern_corr(double h, double phi, double kappa) {
  if (!std::isfinite(h) || !std::isfinite(phi) || !std::isfinite(kappa))
    throw ConfigError("matern_corr: non-finite input");
  if (h < 0) throw ConfigError("matern_corr: negative distance");
  if (h == 0) return 1.0;
  const double x = h / phi;
  // K_kappa(x) underflows near x ~ 700; the correlation is zero to double precision there.
  if (x > 700.0) return 0.0;
  if (kappa == 0.5) return std::exp(-x);
  const double log_scale = (1.0 - kappa) * std::log(2.0) - std::lgamma(kappa) + kappa * std::log(x);
  const double k = std::cyl_bessel_k(kappa, x);
  const double r = std::exp(log_scale) * k;
  return r > 1.0 ? 1.0 : r;
}

/// Euclidean distance after rotating by -angle and shrinking the second axis by 1/ratio.
inline double effective_distance(std::span<const double> a, std::span<const double> b,
                                 const std::optional<Anisotropy>& aniso = std::nullopt) {
  if (a.size() != b.size()) throw ConfigError("effective_distance: dimension mismatch");
  if (aniso && a.size() != 2) throw ConfigError("effective_distance: anisotropy requires d = 2");
  if (!aniso || (aniso->ratio == 1.0)) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double c = std::cos(aniso->angle), s = std::sin(aniso->angle);
  const double u = c * dx + s * dy;
  const double v = (-s * dx + c * dy) / aniso->ratio;
  return std::sqrt(u * u + v * v);
}

inline double covariance(const CovModel& model, const CandidateSet& set, Index i, Index j) {
  if (i == j) return model.sigma2 + model.nugget;
  const auto& X = set.coords();
  double h;
  if (set.dim() == 2 && !model.anisotropy) {
    const double dx = X(i, 0) - X(j, 0), dy = X(i, 1) - X(j, 1);
    h = std::sqrt(dx * dx + dy * dy);
  } else {
    Eigen::VectorXd a = X.row(i).transpose(), b = X.row(j).transpose();
    h = effective_distance(std::span<const double>(a.data(), a.size()),
                           std::span<const double>(b.data(), b.size()), model.anisotropy);
  }
  return model.sigma2 * matern_corr(h, model.phi, model.kappa);
}

/// Entry (i, j) = sigma2 * rho(d(rows[i], cols[j])) + nugget * [rows[i] == cols[j]].
inline Eigen::MatrixXd cov_matrix(const CovModel& model, const CandidateSet& set,
                                  std::span<const Index> rows, std::span<const Index> cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] < 0 || rows[r] >= set.size() || cols[c] < 0 || cols[c] >= set.size())
        throw ConfigError("cov_matrix: index out of range");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = covariance(model, set, rows[r], cols[c]);
    }
  return out;
}

/// Covariance lookups over one candidate set. Sets up to `cache_limit` points get the
/// full N x N matrix precomputed; larger sets are evaluated on demand.
class CovarianceField {
 public:
  static constexpr Index kDefaultCacheLimit = 3000;

  CovarianceField(std::shared_ptr<const CandidateSet> set, CovModel model,
                  Index cache_limit = kDefaultCacheLimit)
      : set_(std::move(set)), model_(model) {
    model_.validate();
    if (model_.anisotropy && set_->dim() != 2)
      throw ConfigError("model: anisotropy is only defined for 2-D candidate sets");
    if (set_->size() <= cache_limit) build_cache();
  }

  const CandidateSet& set() const { return *set_; }
  const std::shared_ptr<const CandidateSet>& set_ptr() const { return set_; }
  const CovModel& model() const { return model_; }
  bool cached() const { return full_.size() > 0; }

  double operator()(Index i, Index j) const {
    if (cached()) return full_(i, j);
    return covariance(model_, *set_, i, j);
  }

  Eigen::MatrixXd block(std::span<const Index> rows, std::span<const Index> cols) const {
    if (!cached()) return cov_matrix(model_, *set_, rows, cols);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (std::size_t r = 0; r < rows.size(); ++r)
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = full_(rows[r], cols[c]);
    return out;
  }

  /// True when i and j sit at effective distance zero with no nugget to separate them.
  bool indistinguishable(Index i, Index j) const {
    if (i == j) return true;
    if (model_.nugget > 0) return false;
    return (*this)(i, j) >= model_.sigma2;
  }

 private:
  void build_cache() {
    const Index n = set_->size();
    full_.resize(n, n);
    // Many pairs share a distance on lattices; memoize the Bessel evaluations.
    std::unordered_map<double, double> memo;
    const auto& X = set_->coords();
    for (Index j = 0; j < n; ++j) {
      full_(j, j) = model_.sigma2 + model_.nugget;
      for (Index i = j + 1; i < n; ++i) {
        double h;
        if (set_->dim() == 2 && !model_.anisotropy) {
          const double dx = X(i, 0) - X(j, 0), dy = X(i, 1) - X(j, 1);
          h = std::sqrt(dx * dx + dy * dy);
        } else {
          Eigen::VectorXd a = X.row(i).transpose(), b = X.row(j).transpose();
          h = effective_distance(std::span<const double>(a.data(), a.size()),
                                 std::span<const double>(b.data(), b.size()), model_.anisotropy);
        }
        auto it = memo.find(h);
        double rho;
        if (it != memo.end()) {
          rho = it->second;
        } else {
          rho = matern_corr(h, model_.phi, model_.kappa);
          memo.emplace(h, rho);
        }
        full_(i, j) = full_(j, i) = model_.sigma2 * rho;
      }
    }
  }

  std::shared_ptr<const CandidateSet> set_;
  CovModel model_;
  Eigen::MatrixXd full_;
};

}  // namespace krigdes
