#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace necpd;
using testutil::random_matrix;
using testutil::random_model;
using testutil::random_tensor;

TEST(ModeProduct, MatchesUnfoldedProduct) {
  const DenseTensor t = random_tensor({3, 4, 5}, 1);
  for (std::size_t n = 0; n < 3; ++n) {
    const Matrix m = random_matrix(2, static_cast<Eigen::Index>(t.dim(n)), 10 + n);
    const DenseTensor y = mode_product(t, m, n);
    EXPECT_EQ(y.dim(n), 2u);
    EXPECT_LE((unfold(y, n) - m * unfold(t, n)).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(mode_product(t, random_matrix(2, 3, 1), 1), InvalidShape);
  EXPECT_THROW(mode_product(t, random_matrix(2, 3, 1), 3), InvalidMode);
}

TEST(PseudoInverse, FullColumnRankIsLeftInverse) {
  const Matrix a = random_matrix(6, 3, 2);
  const PseudoInverse p = pseudo_inverse(a);
  EXPECT_FALSE(p.truncated);
  EXPECT_LE((p.pinv * a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PseudoInverse, RankDeficientIsFlaggedAndSatisfiesPenroseIdentity) {
  Matrix a = random_matrix(5, 3, 3);
  a.col(2) = a.col(0) + a.col(1);
  const PseudoInverse p = pseudo_inverse(a);
  EXPECT_TRUE(p.truncated);
  EXPECT_LE((a * p.pinv * a - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(p.pinv.allFinite());
}

TEST(Corcondia, ExactRankScoresHundred) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto syn = synth_cp({8, 7, 6}, 3, 0.0, seed);
    const CorcondiaResult r = corcondia(syn.tensor, syn.truth);
    EXPECT_NEAR(r.score, 100.0, 1e-6);
    EXPECT_FALSE(r.rank_deficient);
  }
}

TEST(Corcondia, RankOneIsHundred) {
  const auto syn = synth_cp({5, 4, 3}, 1, 0.0, 7);
  EXPECT_NEAR(corcondia(syn.tensor, syn.truth).score, 100.0, 1e-9);
}

TEST(Corcondia, OverfactoredModelScoresLower) {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto syn = synth_cp({10, 8, 12}, 2, 0.0, seed);
    SolverConfig c;
    c.rank = 4;
    c.seed = seed;
    c.max_epochs = 200;
    const FitResult over = als_fit_best(syn.tensor, c, 3);
    const double exact = corcondia(syn.tensor, syn.truth).score;
    const double overfit = corcondia(syn.tensor, over.model()).score;
    EXPECT_LT(overfit, 100.0) << "seed " << seed;
    gap += exact - overfit;
  }
  EXPECT_GT(gap / 10.0, 30.0);
}

TEST(Corcondia, InvariantUnderSimultaneousColumnPermutation) {
  const auto syn = synth_cp({6, 5, 7}, 3, 0.05, 2);
  const KruskalModel m = random_model({6, 5, 7}, 3, 5);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(3);
  p.indices() << 2, 0, 1;
  std::vector<Matrix> f;
  for (const auto& a : m.factors()) f.push_back(a * p);
  EXPECT_NEAR(corcondia(syn.tensor, m).score, corcondia(syn.tensor, KruskalModel(f)).score, 1e-8);
}

// Core entries with mixed indices pick up s or 1/s, so the score is only
// invariant when those entries vanish, as they do for an exact model.
TEST(Corcondia, ExactModelInvariantUnderCompensatingColumnScaling) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto syn = synth_cp({6, 5, 7}, 3, 0.0, seed);
    std::vector<Matrix> f = syn.truth.factors();
    f[0].col(1) *= 3.5;
    f[2].col(1) /= 3.5;
    EXPECT_NEAR(corcondia(syn.tensor, syn.truth).score, corcondia(syn.tensor, KruskalModel(f)).score, 1e-8);
  }
}

TEST(Corcondia, DegenerateFactorIsFlaggedNotThrown) {
  const auto syn = synth_cp({6, 5, 7}, 2, 0.0, 4);
  std::vector<Matrix> f = syn.truth.factors();
  f[1].col(1) = f[1].col(0);
  const CorcondiaResult r = corcondia(syn.tensor, KruskalModel(f));
  EXPECT_TRUE(r.rank_deficient);
  EXPECT_TRUE(std::isfinite(r.score));
}

TEST(RankScan, SelectsTrueRank) {
  const auto syn = synth_cp({10, 9, 8}, 2, 0.0, 5);
  SolverConfig c;
  c.max_epochs = 200;
  c.seed = 5;
  const auto scan = rank_scan(syn.tensor, 4, c);
  ASSERT_EQ(scan.size(), 4u);
  for (std::size_t i = 0; i < scan.size(); ++i) EXPECT_EQ(scan[i].rank, i + 1);
  EXPECT_EQ(select_rank(scan), 2u);
  EXPECT_THROW(rank_scan(syn.tensor, 0, c), InvalidInput);
}

TEST(SelectRank, LargestRankAtOrAboveThreshold) {
  std::vector<RankScanRow> scan{{1, 0.5, 100.0, false}, {2, 0.9, 95.0, false}, {3, 0.95, 40.0, false},
                                {4, 0.97, 91.0, false}};
  EXPECT_EQ(select_rank(scan), 4u);
  EXPECT_EQ(select_rank(scan, 96.0), 1u);
  EXPECT_EQ(select_rank({}, 90.0), 1u);
}

namespace {

ConvergenceTrace make_trace(std::vector<std::pair<std::size_t, double>> pts) {
  ConvergenceTrace t;
  for (auto [s, r] : pts) t.push({s, r, 1.0 - r, 0.0});
  return t;
}

}  // namespace

TEST(CompareTraces, SingleTraceSummaryIsItsLastRow) {
  const auto t = make_trace({{0, 1.0}, {10, 0.5}, {20, 0.05}});
  const TraceReport r = compare_traces({{"a", t}}, 0.1);
  ASSERT_EQ(r.summaries.size(), 1u);
  EXPECT_EQ(r.summaries[0].final_t, 20u);
  EXPECT_EQ(r.summaries[0].final_rmse, 0.05);
  EXPECT_EQ(r.summaries[0].final_fit, 0.95);
  EXPECT_EQ(r.summaries[0].steps_to_target, 20u);
}

TEST(CompareTraces, IdenticalTracesHaveZeroDeltas) {
  const auto t = make_trace({{0, 1.0}, {5, 0.08}});
  const TraceReport r = compare_traces({{"x", t}, {"y", t}}, 0.1);
  for (const auto& s : r.summaries) {
    EXPECT_EQ(s.delta_final_rmse, 0.0);
    EXPECT_EQ(s.delta_steps_to_target, 0);
  }
}

TEST(CompareTraces, AlignsOnUnionOfSteps) {
  const TraceReport r =
      compare_traces({{"b", make_trace({{0, 1.0}, {4, 0.2}})}, {"a", make_trace({{0, 0.9}, {3, 0.3}})}}, 0.25);
  EXPECT_EQ(r.labels, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(r.steps, (std::vector<std::size_t>{0, 3, 4}));
  EXPECT_FALSE(r.rmse[1][1].has_value());
  EXPECT_EQ(*r.rmse[1][0], 0.3);
  std::ostringstream os;
  write_report_csv(os, r);
  EXPECT_EQ(os.str(), "t,a,b\n0,0.90000000000000002,1\n3,0.29999999999999999,\n4,,0.20000000000000001\n");
  EXPECT_FALSE(r.summaries[0].steps_to_target.has_value());
  EXPECT_EQ(r.summaries[1].steps_to_target, 4u);
}

TEST(CompareTraces, IndependentOfInputOrder) {
  const auto a = make_trace({{0, 1.0}, {4, 0.2}});
  const auto b = make_trace({{0, 0.7}, {2, 0.05}});
  const auto c = make_trace({{0, 0.9}, {6, 0.01}});
  std::ostringstream s1, s2, c1, c2;
  const auto r1 = compare_traces({{"a", a}, {"b", b}, {"c", c}}, 0.1);
  const auto r2 = compare_traces({{"c", c}, {"a", a}, {"b", b}}, 0.1);
  write_report_csv(c1, r1);
  write_report_csv(c2, r2);
  write_report_summary(s1, r1);
  write_report_summary(s2, r2);
  EXPECT_EQ(c1.str(), c2.str());
  EXPECT_EQ(s1.str(), s2.str());
}

TEST(CompareTraces, RejectsEmptyInput) {
  EXPECT_THROW(compare_traces({}, 0.1), InvalidInput);
  EXPECT_THROW(compare_traces({{"a", ConvergenceTrace{}}}, 0.1), InvalidInput);
  const auto t = make_trace({{0, 1.0}});
  EXPECT_THROW(compare_traces({{"a", t}, {"a", t}}, 0.1), InvalidInput);
}
