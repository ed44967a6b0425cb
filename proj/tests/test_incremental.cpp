#include <chrono>
#include <random>

#include <gtest/gtest.h>

#include "krigdes/incremental.hpp"
#include "oracle.hpp"

using namespace krigdes;

namespace {

std::vector<long> as_long(const IndexList& v) { return {v.begin(), v.end()}; }

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (b.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

struct Problem {
  Instance inst;
  oracle::Field field;
};

Problem make_setup(int n, double phi, double kappa, oracle::Trend trend) {
  KrigingVariant v = KrigingVariant::simple();
  if (trend == oracle::Trend::kConstant) v = KrigingVariant::ordinary();
  if (trend == oracle::Trend::kLinear) v = KrigingVariant::universal(TrendBasis::linear());
  if (trend == oracle::Trend::kQuadratic) v = KrigingVariant::universal(TrendBasis::quadratic());
  return {Instance(make_grid(n, 2, 1.0), CovModel{1.0, phi, kappa, 0.0, std::nullopt}, v),
          oracle::make_field(oracle::grid(n), 1.0, phi, kappa, trend)};
}

/// Random disjoint (xi1, increment, targets) on an n x n grid.
void split(std::mt19937_64& rng, Index n_pts, Index k, Index l, Index m, IndexList& xi1, IndexList& inc,
           IndexList& targets) {
  IndexList all(static_cast<std::size_t>(n_pts));
  for (Index i = 0; i < n_pts; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  xi1.assign(all.begin(), all.begin() + k);
  inc.assign(all.begin() + k, all.begin() + k + l);
  targets.assign(all.begin() + k + l, all.begin() + k + l + m);
}

IndexList concat(IndexList a, const IndexList& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Sigma2Block, SinglePointIsKrigingVariance) {
  Problem s = make_setup(5, 2.0, 1.5, oracle::Trend::kLinear);
  StageState st(s.inst, {0, 4, 20, 24});
  const Index one[] = {12};
  EXPECT_NEAR(sigma2_block(st, one)(0, 0), st.base().kriging_cov(one)(0, 0), 1e-10);
}

TEST(Sigma2Block, TwoByTwoSubBlockOfFullSigma) {
  Problem s = make_setup(4, 1.0, 0.5, oracle::Trend::kSimple);
  IndexList xi{1, 6, 11};
  StageState st(s.inst, xi);
  IndexList t = complement(IndexList{1, 6, 11}, 16);
  oracle::Kriging full = oracle::krige(s.field, as_long(xi), as_long(t));
  const Index inc[] = {t[2], t[7]};
  Eigen::Matrix2d ref;
  ref << full.Sigma(2, 2), full.Sigma(2, 7), full.Sigma(7, 2), full.Sigma(7, 7);
  EXPECT_LE(max_rel(sigma2_block(st, inc), ref), 1e-9);
}

TEST(Sigma2Block, DuplicateOfDesignPointIsSingular) {
  Eigen::MatrixXd X(5, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1, 1, 0;
  Instance inst(CandidateSet({0, 1, 2, 3, 4}, X), CovModel{1.0, 1.0, 1.5, 0.0, std::nullopt}, KrigingVariant::ordinary());
  StageState st(inst, {0, 1});
  const Index dup[] = {4, 3};
  EXPECT_NEAR(sigma2_block(st, dup)(0, 0), 0.0, 1e-10);
  EXPECT_EQ(gv_increment_objective(st, dup), kNegInf);
}

TEST(GvIncrement, ExhaustiveArgmaxMatchesDirectStageTwo) {
  Problem s = make_setup(4, 1.0, 0.5, oracle::Trend::kSimple);
  IndexList xi{0, 5, 15};
  StageState st(s.inst, xi);
  IndexList cand = st.candidates();
  std::vector<double> obj, direct;
  for (const auto& pair : oracle::combinations(static_cast<long>(cand.size()), 2)) {
    IndexList inc{cand[static_cast<std::size_t>(pair[0])], cand[static_cast<std::size_t>(pair[1])]};
    obj.push_back(gv_increment_objective(st, inc));
    IndexList d2 = concat(xi, inc);
    direct.push_back(oracle::logdet(oracle::krige(s.field, as_long(d2), oracle::complement(as_long(d2), 16)).Sigma));
  }
  EXPECT_EQ(obj.size(), 78u);
  EXPECT_EQ(oracle::best_indices(obj, true, 1e-9), oracle::best_indices(direct, false, 1e-9));
}

TEST(GvIncrement, SinglePointPicksLargestVariance) {
  Problem s = make_setup(6, 2.0, 1.0, oracle::Trend::kLinear);
  IndexList xi{0, 5, 30, 35, 14};
  StageState st(s.inst, xi);
  IndexList cand = st.candidates();
  Eigen::VectorXd var = st.base().kriging_variances(cand);
  Eigen::Index best_var;
  var.maxCoeff(&best_var);
  double best = kNegInf;
  Index arg = -1;
  for (Index c : cand) {
    const Index one[] = {c};
    const double v = gv_increment_objective(st, one);
    if (v > best) {
      best = v;
      arg = c;
    }
  }
  EXPECT_EQ(arg, cand[static_cast<std::size_t>(best_var)]);
}

TEST(GvIncrement, IndependentOfPredictionSiteCount) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  auto build = [&](Index m) {
    Eigen::MatrixXd X(16 + m, 2);
    for (int i = 0; i < 16; ++i) X.row(i) << (i % 4) * 3.0, (i / 4) * 3.0;
    for (Index i = 16; i < 16 + m; ++i) X.row(i) << u(rng), u(rng);
    std::vector<std::int64_t> ids(static_cast<std::size_t>(16 + m));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
    return Instance(CandidateSet(ids, X), CovModel{1.0, 4.0, 1.5, 0.0, std::nullopt},
                    KrigingVariant::universal(TrendBasis::linear()), 0);
  };
  Instance small = build(400), large = build(2000);
  IndexList xi{0, 3, 12, 15, 5, 10};
  const Index inc[] = {1, 7, 13, 9};
  EXPECT_EQ(gv_increment_objective(StageState(small, xi), inc), gv_increment_objective(StageState(large, xi), inc));
}

TEST(VIncrement, ExhaustiveSinglePointMatchesDirectTrace) {
  Problem s = make_setup(5, 1.5, 1.0, oracle::Trend::kConstant);
  IndexList xi{0, 12, 24};
  StageState st(s.inst, xi);
  std::vector<double> obj, direct;
  for (Index c : st.candidates()) {
    const Index one[] = {c};
    obj.push_back(v_increment_objective(st, one));
    IndexList d2 = concat(xi, {c});
    direct.push_back(oracle::krige(s.field, as_long(d2), oracle::complement(as_long(d2), 25)).Sigma.trace());
  }
  EXPECT_EQ(oracle::best_indices(obj, true, 1e-9), oracle::best_indices(direct, false, 1e-9));
}

TEST(VIncrement, UncorrelatedTargetsReduceToTrace) {
  Eigen::MatrixXd X(6, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1, 5000, 0, 5000, 1;
  Instance inst(CandidateSet({0, 1, 2, 3, 4, 5}, X), CovModel{1.0, 1.0, 0.5, 0.0, std::nullopt}, KrigingVariant::simple());
  StageState st(inst, {0, 1});
  const Index inc[] = {2, 3}, far[] = {4, 5};
  EXPECT_NEAR(v_increment_objective(st, inc, std::span<const Index>(far)), sigma2_block(st, inc).trace(), 1e-14);
}

TEST(VIncrement, TargetOrderDoesNotMatter) {
  Problem s = make_setup(5, 2.0, 1.5, oracle::Trend::kLinear);
  StageState st(s.inst, {0, 4, 20, 24});
  const Index inc[] = {7, 12};
  IndexList t{1, 2, 3, 9, 16, 22}, r{22, 3, 16, 1, 9, 2};
  EXPECT_NEAR(v_increment_objective(st, inc, std::span<const Index>(t)),
              v_increment_objective(st, inc, std::span<const Index>(r)), 1e-13);
}

TEST(UpdateWeights, MatchDirectStageTwo) {
  std::mt19937_64 rng(17);
  for (auto trend : {oracle::Trend::kSimple, oracle::Trend::kConstant, oracle::Trend::kQuadratic}) {
    Problem s = make_setup(7, 2.0, 1.5, trend);
    for (int rep = 0; rep < 5; ++rep) {
      IndexList xi, inc, t;
      split(rng, 49, trend == oracle::Trend::kQuadratic ? 8 : 5, 3, 12, xi, inc, t);
      StageState st(s.inst, xi);
      UpdatedWeights w = update_weights(st, inc, t);
      oracle::Kriging ref = oracle::krige(s.field, as_long(concat(xi, inc)), as_long(t));
      const double tol = trend == oracle::Trend::kSimple ? 1e-9 : 1e-8;
      EXPECT_LE(max_rel(w.W1, ref.W.leftCols(static_cast<Eigen::Index>(xi.size()))), tol);
      EXPECT_LE(max_rel(w.W2, ref.W.rightCols(3)), tol);
    }
  }
}

TEST(UpdateWeights, EmptyIncrementKeepsStageOne) {
  Problem s = make_setup(5, 2.0, 1.0, oracle::Trend::kConstant);
  StageState st(s.inst, {0, 6, 24});
  const Index t[] = {3, 10, 17};
  UpdatedWeights w = update_weights(st, {}, t);
  EXPECT_EQ(w.W1, st.base().weights(t));
  EXPECT_EQ(w.W2.cols(), 0);
}

TEST(UpdateKrigingCov, MatchesDirectAndShrinks) {
  std::mt19937_64 rng(23);
  for (auto trend : {oracle::Trend::kSimple, oracle::Trend::kConstant, oracle::Trend::kLinear}) {
    Problem s = make_setup(8, 1.5, 2.0, trend);
    for (int rep = 0; rep < 6; ++rep) {
      IndexList xi, inc, t;
      split(rng, 64, 3 + rep, 1 + rep % 6, 20, xi, inc, t);
      StageState st(s.inst, xi);
      Eigen::MatrixXd plus = update_kriging_cov(st, inc, t);
      oracle::Kriging ref = oracle::krige(s.field, as_long(concat(xi, inc)), as_long(t));
      EXPECT_LE(max_rel(plus, ref.Sigma), 1e-8);
      Eigen::VectorXd before = st.base().kriging_cov(t).diagonal();
      EXPECT_LE((plus.diagonal() - before).maxCoeff(), 1e-10);
    }
  }
}

TEST(UpdateKrigingCov, EmptyIncrementKeepsStageOne) {
  Problem s = make_setup(5, 2.0, 1.0, oracle::Trend::kSimple);
  StageState st(s.inst, {0, 6, 24});
  const Index t[] = {3, 10, 17};
  EXPECT_EQ(update_kriging_cov(st, {}, t), st.base().kriging_cov(t));
}

TEST(ChainLogdet, IncrementThenDecrementRestores) {
  Problem s = make_setup(6, 2.0, 1.5, oracle::Trend::kLinear);
  StageState st(s.inst, {0, 5, 30, 35}, true);
  const Index inc[] = {14, 21, 8};
  StageState up = increment_state(st, inc);
  StageState down = decrement_state(up, inc);
  EXPECT_NEAR(*down.logdet_D(), *st.logdet_D(), 1e-9 * std::abs(*st.logdet_D()));
}

TEST(ChainLogdet, ThreeIncrementsMatchFullRecomputation) {
  Problem s = make_setup(7, 1.5, 1.0, oracle::Trend::kConstant);
  StageState st(s.inst, {0, 48}, true);
  const IndexList steps[] = {{6, 42}, {24}, {10, 31, 17}};
  IndexList pts{0, 48};
  for (const auto& inc : steps) {
    st = increment_state(st, inc);
    pts = concat(pts, inc);
  }
  const double ref = oracle::logdet(oracle::krige(s.field, as_long(pts), oracle::complement(as_long(pts), 49)).Sigma);
  EXPECT_NEAR(*st.logdet_D(), ref, 1e-8 * std::abs(ref));
}

TEST(ChainLogdet, DecrementBlockMatchesBookkeeping) {
  Problem s = make_setup(6, 2.0, 1.0, oracle::Trend::kSimple);
  IndexList full{0, 5, 14, 21, 30, 35};
  StageState st(s.inst, full, true);
  const Index drop[] = {14, 21};
  StageState reduced(s.inst, {0, 5, 30, 35}, true);
  const double via_block = *st.logdet_D() + logdet_psd(sigma2_block(reduced, drop));
  EXPECT_NEAR(via_block, *reduced.logdet_D(), 1e-9 * std::abs(*reduced.logdet_D()));
  EXPECT_NEAR(*decrement_state(st, drop).logdet_D(), *reduced.logdet_D(), 1e-9 * std::abs(*reduced.logdet_D()));
}

TEST(IncrementPool, AgreesWithDirectObjectives) {
  Problem s = make_setup(6, 2.0, 1.5, oracle::Trend::kLinear);
  StageState st(s.inst, {0, 5, 30, 35});
  IndexList cand = st.candidates();
  IncrementPool pool(st, cand);
  const Index pos[] = {3, 10, 17};
  IndexList inc{cand[3], cand[10], cand[17]};
  EXPECT_NEAR(pool.gv_objective(pos), gv_increment_objective(st, inc), 1e-10);
  EXPECT_NEAR(pool.v_objective(pos), v_increment_objective(st, inc), 1e-10);
  EXPECT_LE(max_rel(pool.sigma2(pos), sigma2_block(st, inc)), 1e-12);
}
