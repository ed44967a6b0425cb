#include <random>

#include <gtest/gtest.h>

#include "krigdes/kriging.hpp"
#include "oracle.hpp"

using namespace krigdes;

namespace {

std::vector<long> as_long(const IndexList& v) { return {v.begin(), v.end()}; }

double max_abs(const Eigen::MatrixXd& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

Instance grid_instance(int n, CovModel m, KrigingVariant v) { return Instance(make_grid(n, 2, 1.0), m, std::move(v)); }

IndexList random_design(std::mt19937_64& rng, Index n, Index k) {
  IndexList all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST(KrigingSystem, BAndAMatchDenseInverseOracle) {
  std::mt19937_64 rng(11);
  CovModel m{1.3, 1.5, 1.5, 0.0, std::nullopt};
  Instance inst = grid_instance(4, m, KrigingVariant::universal(TrendBasis::linear()));
  oracle::Field f = oracle::make_field(oracle::grid(4), 1.3, 1.5, 1.5, oracle::Trend::kLinear);
  for (int rep = 0; rep < 10; ++rep) {
    IndexList d = random_design(rng, 16, 6);
    KrigingSystem sys(inst, d);
    IndexList t = complement(d, 16);
    oracle::Kriging ref = oracle::krige(f, as_long(d), as_long(t));
    EXPECT_LE(max_abs(sys.B() - ref.B), 1e-9 * std::max(1.0, max_abs(ref.B)));
    EXPECT_LE(max_abs(sys.A() - ref.A), 1e-9 * std::max(1.0, max_abs(ref.A)));
    EXPECT_LE(max_abs(sys.weights(t) - ref.W), 1e-9);
    EXPECT_LE(max_abs(sys.kriging_cov(t) - ref.Sigma), 1e-9);
  }
}

TEST(KrigingSystem, IdentityCovarianceGivesOrdinaryLeastSquares) {
  CovModel m{1.0, 1e-4, 0.5, 0.0, std::nullopt};
  Instance inst = grid_instance(5, m, KrigingVariant::ordinary());
  IndexList d{0, 3, 7, 12, 19};
  KrigingSystem sys(inst, d);
  EXPECT_LE(max_abs(sys.B() - Eigen::MatrixXd::Constant(1, 5, 0.2)), 1e-12);
  Eigen::VectorXd y(5);
  y << 1, 2, 4, 8, 5;
  const Index far[] = {24};
  EXPECT_NEAR(sys.predict(far, y)(0), y.mean(), 1e-12);
}

TEST(KrigingSystem, InterpolatingTrendHasZeroA) {
  CovModel m{1.0, 2.0, 1.0, 0.0, std::nullopt};
  Instance inst = grid_instance(4, m, KrigingVariant::universal(TrendBasis::linear()));
  KrigingSystem sys(inst, {0, 3, 13});
  EXPECT_LE(max_abs(sys.A()), 1e-10);
}

TEST(KrigingSystem, UnderIdentifiedTrendIsRejected) {
  CovModel m{1.0, 2.0, 1.0, 0.0, std::nullopt};
  Instance inst = grid_instance(4, m, KrigingVariant::universal(TrendBasis::quadratic()));
  EXPECT_THROW(KrigingSystem(inst, {0, 1, 2, 3, 4}), ConfigError);
}

TEST(Weights, SimpleKrigingSinglePoint) {
  CovModel m{1.0, 1.0, 0.5, 0.0, std::nullopt};
  Eigen::MatrixXd X(2, 2);
  X << 0, 0, 1, 0;
  Instance inst(CandidateSet({0, 1}, X), m, KrigingVariant::simple());
  KrigingSystem sys(inst, {0});
  const Index t[] = {1};
  EXPECT_NEAR(sys.weights(t)(0, 0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(sys.kriging_cov(t)(0, 0), 1.0 - std::exp(-2.0), 1e-15);
  EXPECT_NEAR(sys.kriging_variances(t)(0), 0.864665, 1e-6);
}

TEST(Weights, OrdinaryRowsSumToOne) {
  std::mt19937_64 rng(5);
  for (double kappa : {0.25, 1.0, 2.5}) {
    Instance inst = grid_instance(6, CovModel{2.0, 3.0, kappa, 0.0, std::nullopt}, KrigingVariant::ordinary());
    IndexList d = random_design(rng, 36, 7);
    KrigingSystem sys(inst, d);
    Eigen::MatrixXd W = sys.weights(complement(d, 36));
    EXPECT_LE((W.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Weights, UniversalUnbiasedness) {
  Instance inst = grid_instance(5, CovModel{1.0, 2.0, 1.5, 0.0, std::nullopt},
                                KrigingVariant::universal(TrendBasis::linear()));
  IndexList d{0, 4, 8, 12, 20, 24};
  const Index t[] = {6, 17, 23};
  KrigingSystem sys(inst, d);
  Eigen::MatrixXd lhs = sys.weights(t) * inst.basis(d);
  EXPECT_LE(max_abs(lhs - inst.basis(t)), 1e-10);
}

TEST(KrigingCov, DuplicatedTargetHasZeroVariance) {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 0;
  Instance inst(CandidateSet({0, 1, 2, 3}, X), CovModel{1.0, 1.0, 1.5, 0.0, std::nullopt}, KrigingVariant::ordinary());
  KrigingSystem sys(inst, {0, 1, 2});
  const Index t[] = {3};
  EXPECT_NEAR(sys.kriging_variances(t)(0), 0.0, 1e-10);
}

TEST(KrigingCov, SimpleKrigingIdentity) {
  std::mt19937_64 rng(9);
  Instance inst = grid_instance(6, CovModel{1.0, 2.0, 1.0, 0.0, std::nullopt}, KrigingVariant::simple());
  oracle::Field f = oracle::make_field(oracle::grid(6), 1.0, 2.0, 1.0, oracle::Trend::kSimple);
  IndexList d = random_design(rng, 36, 8);
  IndexList t = complement(d, 36);
  auto ld = as_long(d), lt = as_long(t);
  Eigen::MatrixXd Cx0 = oracle::sub(f.K, ld, lt);
  Eigen::MatrixXd ref = oracle::sub(f.K, lt, lt) - Cx0.transpose() * oracle::sub(f.K, ld, ld).inverse() * Cx0;
  EXPECT_LE(max_abs(KrigingSystem(inst, d).kriging_cov(t) - ref), 1e-9);
}

TEST(KrigingCov, QuadraticTrendWithNuggetMatchesOracle) {
  std::mt19937_64 rng(21);
  Instance inst = grid_instance(6, CovModel{1.0, 1.5, 2.0, 0.05, std::nullopt},
                                KrigingVariant::universal(TrendBasis::quadratic()));
  oracle::Field f = oracle::make_field(oracle::grid(6), 1.0, 1.5, 2.0, oracle::Trend::kQuadratic, 0.05);
  for (int rep = 0; rep < 5; ++rep) {
    IndexList d = random_design(rng, 36, 10);
    IndexList t = complement(d, 36);
    KrigingSystem sys(inst, d);
    oracle::Kriging ref = oracle::krige(f, as_long(d), as_long(t));
    EXPECT_LE(max_abs(sys.kriging_cov(t) - ref.Sigma), 1e-9);
    EXPECT_LE((sys.kriging_variances(t) - ref.Sigma.diagonal()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(OkParts, RankOneCorrectionAndB) {
  std::mt19937_64 rng(3);
  Instance inst = grid_instance(5, CovModel{1.0, 2.0, 1.5, 0.0, std::nullopt}, KrigingVariant::ordinary());
  oracle::Field f = oracle::make_field(oracle::grid(5), 1.0, 2.0, 1.5, oracle::Trend::kSimple);
  IndexList d = random_design(rng, 25, 6);
  IndexList t = complement(d, 25);
  KrigingSystem sys(inst, d);
  OkParts parts = kriging_cov_ok_parts(sys, t);
  EXPECT_LE(max_abs(parts.assemble() - sys.kriging_cov(t)), 1e-10);
  Eigen::MatrixXd diff = sys.kriging_cov(t) - parts.sigma_sk;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff);
  const auto ev = es.eigenvalues();
  EXPECT_GE(ev.minCoeff(), -1e-10);
  EXPECT_LE(ev.head(ev.size() - 1).cwiseAbs().maxCoeff(), 1e-9 * ev.maxCoeff());
  auto ld = as_long(d);
  EXPECT_NEAR(parts.b, oracle::sub(f.K, ld, ld).inverse().sum(), 1e-9 * parts.b);
}

TEST(OkParts, VanishingRangeCorrection) {
  Instance inst = grid_instance(4, CovModel{1.0, 1e-4, 1.0, 0.0, std::nullopt}, KrigingVariant::ordinary());
  IndexList d{0, 5, 10, 15};
  const Index t[] = {1, 2, 7};
  OkParts parts = kriging_cov_ok_parts(KrigingSystem(inst, d), t);
  EXPECT_LE(max_abs(parts.correction() - Eigen::MatrixXd::Constant(3, 3, 0.25)), 1e-10);
  Instance uk = grid_instance(4, CovModel{}, KrigingVariant::universal(TrendBasis::linear()));
  EXPECT_THROW(kriging_cov_ok_parts(KrigingSystem(uk, {0, 3, 12}), t), ConfigError);
}

TEST(Predict, InvariantsAcrossVariants) {
  Instance ok = grid_instance(5, CovModel{1.0, 2.0, 1.0, 0.0, std::nullopt}, KrigingVariant::ordinary());
  IndexList d{1, 7, 13, 18, 22};
  IndexList t = complement(d, 25);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(5, 3.25);
  EXPECT_LE((KrigingSystem(ok, d).predict(t, c).array() - 3.25).abs().maxCoeff(), 1e-12);

  Instance sk = ok.with_variant(KrigingVariant::simple());
  EXPECT_EQ(KrigingSystem(sk, d).predict(t, Eigen::VectorXd::Zero(5)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(KrigingSystem(sk, d).predict(t, Eigen::VectorXd::Zero(4)), ConfigError);
}

TEST(Predict, LinearFieldReproducedByUniversalKriging) {
  Instance uk = grid_instance(5, CovModel{1.0, 1e-4, 1.5, 0.0, std::nullopt},
                              KrigingVariant::universal(TrendBasis::linear()));
  IndexList d{0, 4, 12, 20, 24, 8};
  IndexList t = complement(d, 25);
  auto field = [&](Index i) { return 2.0 + 0.5 * uk.set().coords()(i, 0) - 1.5 * uk.set().coords()(i, 1); };
  KrigingSystem sys(uk, d);
  Eigen::VectorXd y(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) y(static_cast<Eigen::Index>(i)) = field(sys.design()[i]);
  Eigen::VectorXd pred = sys.predict(t, y);
  for (std::size_t j = 0; j < t.size(); ++j) EXPECT_NEAR(pred(static_cast<Eigen::Index>(j)), field(t[j]), 1e-9);
}

TEST(Jitter, CoincidentDesignPointsAreRegularized) {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 0, 0, 1, 1, 2, 0;
  Instance inst(CandidateSet({0, 1, 2, 3}, X), CovModel{1.0, 1.0, 0.5, 0.0, std::nullopt}, KrigingVariant::ordinary());
  KrigingSystem sys(inst, {0, 1, 2});
  EXPECT_GT(sys.jitter(), 0.0);
  EXPECT_LE(sys.jitter(), 1e-6);
  const Index t[] = {3};
  EXPECT_TRUE(std::isfinite(sys.kriging_variances(t)(0)));
}
