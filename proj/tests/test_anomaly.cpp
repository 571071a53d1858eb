#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_util.hpp"

using namespace necpd;
using testutil::random_matrix;

namespace {

Matrix gaussian_cluster(Eigen::Index n, Eigen::Index d, double spread, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0.0, spread);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = z(g);
  return m;
}

Matrix permute_rows(const Matrix& m, const std::vector<Eigen::Index>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

TEST(OneClass, QuantileContract) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double nu : {0.05, 0.1, 0.3}) {
      const Matrix train = random_matrix(40 + static_cast<Eigen::Index>(seed), 3, seed);
      const AnomalyModel m = fit_one_class(train, nu);
      const Vector dv = decision_values(m, train);
      const auto below = static_cast<std::size_t>((dv.array() < 0.0).count());
      EXPECT_EQ(below, outlier_quota(nu, static_cast<std::size_t>(train.rows()))) << "seed " << seed << " nu " << nu;
    }
  }
  EXPECT_EQ(outlier_quota(0.05, 100), 5u);
  EXPECT_EQ(outlier_quota(0.05, 101), 6u);
}

TEST(OneClass, MedianHeuristicBandwidth) {
  Matrix rows(3, 1);
  rows << 0.0, 1.0, 3.0;  // distances 1, 2, 3
  EXPECT_EQ(median_pairwise_distance(rows), 2.0);
  EXPECT_EQ(fit_one_class(rows, 0.1).sigma, 2.0);
  EXPECT_EQ(fit_one_class(rows, 0.1, 0.5).sigma, 0.5);
}

TEST(OneClass, InAndOutOfDistribution) {
  const Matrix train = gaussian_cluster(50, 3, 0.1, 1);
  const AnomalyModel m = fit_one_class(train, 0.05);
  Matrix z(2, 3);
  z.row(0) = Vector::Zero(3).transpose();
  z.row(1) = Vector::Constant(3, 100.0).transpose();
  const Vector dv = decision_values(m, z);
  EXPECT_GT(dv(0), 0.0);
  EXPECT_NEAR(dv(1), -m.threshold, 1e-15);
  EXPECT_LT(dv(1), 0.0);
}

TEST(OneClass, DegenerateTrainingSetIsFlagged) {
  const Matrix train = Matrix::Constant(5, 2, 0.3);
  const AnomalyModel m = fit_one_class(train, 0.2);
  EXPECT_TRUE(m.degenerate);
  EXPECT_EQ(m.sigma, kSigmaFloor);
}

TEST(OneClass, RejectsBadInput) {
  EXPECT_THROW(fit_one_class(Matrix::Zero(1, 2), 0.1), InvalidInput);
  EXPECT_THROW(fit_one_class(random_matrix(5, 2, 1), 0.0), InvalidInput);
  EXPECT_THROW(fit_one_class(random_matrix(5, 2, 1), 1.0), InvalidInput);
  EXPECT_THROW(fit_one_class(random_matrix(5, 2, 1), 0.1, -1.0), InvalidInput);
  const AnomalyModel m = fit_one_class(random_matrix(5, 2, 1), 0.1);
  EXPECT_THROW(decision_values(m, random_matrix(2, 3, 1)), InvalidShape);
  EXPECT_EQ(decision_values(m, Matrix(0, 2)).size(), 0);
}

TEST(OneClass, TrainingRowsMostlyInside) {
  const Matrix train = random_matrix(60, 4, 3);
  const AnomalyModel m = fit_one_class(train, 0.05);
  const Vector dv = decision_values(m, train);
  EXPECT_GE(static_cast<double>((dv.array() >= 0.0).count()), (1.0 - 0.05) * 60.0);
}

TEST(OneClass, InvariantUnderTrainingRowPermutation) {
  const Matrix train = random_matrix(30, 3, 4);
  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 g(5);
  std::shuffle(perm.begin(), perm.end(), g);
  const AnomalyModel a = fit_one_class(train, 0.1);
  const AnomalyModel b = fit_one_class(permute_rows(train, perm), 0.1);
  const Matrix probe = random_matrix(10, 3, 6);
  EXPECT_LE((decision_values(a, probe) - decision_values(b, probe)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(OneClass, SeverityMonotoneAlongEscapeRay) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix train = gaussian_cluster(80, 3, 1.0, seed);
    const AnomalyModel m = fit_one_class(train, 0.05);
    const Vector c = train.colwise().mean().transpose();
    Vector u = random_matrix(3, 1, seed + 50).col(0);
    u.normalize();
    double prev = std::numeric_limits<double>::infinity();
    for (double delta = 2.0 * m.sigma; delta <= 10.0 * m.sigma; delta += 0.25 * m.sigma) {
      const Matrix z = (c + delta * u).transpose();
      const double v = decision_values(m, z)(0);
      EXPECT_LE(v, prev) << "seed " << seed << " delta " << delta;
      prev = v;
    }
  }
}

TEST(OneClass, TwoSeverityOffsets) {
  const Matrix train = gaussian_cluster(100, 3, 1.0, 9);
  const AnomalyModel m = fit_one_class(train, 0.05);
  const double delta = 3.0 * m.sigma;
  const Matrix mild = gaussian_cluster(50, 3, 1.0, 10).rowwise() + Eigen::RowVectorXd::Constant(3, delta / std::sqrt(3.0));
  const Matrix severe =
      gaussian_cluster(50, 3, 1.0, 11).rowwise() + Eigen::RowVectorXd::Constant(3, 2.0 * delta / std::sqrt(3.0));
  EXPECT_LT(decision_values(m, severe).mean(), decision_values(m, mild).mean());
}

TEST(Knn, MatchesBruteForceOracle) {
  const Matrix b = random_matrix(12, 4, 7);
  const std::size_t k = 3;
  const Vector s = knn_scores(b, k);
  for (Eigen::Index l = 0; l < 12; ++l) {
    std::vector<double> d;
    for (Eigen::Index o = 0; o < 12; ++o) {
      if (o != l) d.push_back(std::sqrt((b.row(l) - b.row(o)).array().square().sum()));
    }
    std::sort(d.begin(), d.end());
    EXPECT_NEAR(s(l), (d[0] + d[1] + d[2]) / 3.0, 1e-12);
  }
}

TEST(Knn, IdenticalRowsScoreZero) {
  EXPECT_EQ(knn_scores(Matrix::Constant(6, 3, 1.5), 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Knn, DisplacedRowIsStrictMaximum) {
  Matrix b = gaussian_cluster(10, 3, 0.01, 8);
  b.row(4) += Eigen::RowVectorXd::Constant(3, 10.0 / std::sqrt(3.0));
  const Vector s = knn_scores(b, 1);
  Eigen::Index arg = 0;
  s.maxCoeff(&arg);
  EXPECT_EQ(arg, 4);
  EXPECT_NEAR(s(4), 10.0, 0.1);
  for (Eigen::Index l = 0; l < 10; ++l) {
    if (l != 4) EXPECT_LT(s(l), s(4));
  }
}

TEST(Knn, PermutationEquivariantAndTranslationInvariant) {
  const Matrix b = random_matrix(9, 3, 12);
  std::vector<Eigen::Index> perm{3, 0, 8, 1, 7, 2, 6, 4, 5};
  const Vector s = knn_scores(b, 2);
  const Vector sp = knn_scores(permute_rows(b, perm), 2);
  for (Eigen::Index i = 0; i < 9; ++i) EXPECT_NEAR(sp(i), s(perm[static_cast<std::size_t>(i)]), 1e-14);
  const Matrix shifted = b.rowwise() + Eigen::RowVectorXd::Constant(3, 5.0);
  EXPECT_LE((knn_scores(shifted, 2) - s).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Knn, RejectsBadK) {
  const Matrix b = random_matrix(4, 2, 1);
  EXPECT_THROW(knn_scores(b, 0), InvalidInput);
  EXPECT_THROW(knn_scores(b, 4), InvalidInput);
  EXPECT_NO_THROW(knn_scores(b, 3));
}

TEST(LocalizationScores, OneRowPerSnapshot) {
  const std::vector<Matrix> hist{random_matrix(5, 2, 1), random_matrix(5, 2, 2), random_matrix(5, 2, 3)};
  const Matrix s = localization_scores(hist, 2);
  ASSERT_EQ(s.rows(), 3);
  ASSERT_EQ(s.cols(), 5);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(Vector(s.row(static_cast<Eigen::Index>(e)).transpose()), knn_scores(hist[e], 2));
  EXPECT_THROW(localization_scores({random_matrix(5, 2, 1), random_matrix(4, 2, 1)}, 2), InvalidShape);
  EXPECT_EQ(localization_scores({}, 2).size(), 0);
}

TEST(FScore, Cases) {
  const FScore perfect = fscore(10, 0, 0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.fscore, 1.0);
  const FScore f = fscore(8, 2, 2);
  EXPECT_NEAR(f.precision, 0.8, 1e-15);
  EXPECT_NEAR(f.recall, 0.8, 1e-15);
  EXPECT_NEAR(f.fscore, 0.8, 1e-15);
  const FScore none = fscore(0, 0, 5);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.fscore, 0.0);
  const FScore zero = fscore(0, 0, 0);
  EXPECT_EQ(zero.fscore, 0.0);
}

TEST(FScore, RatioInvariantAndHarmonicMean) {
  for (std::size_t tp = 0; tp < 6; ++tp) {
    for (std::size_t fp = 0; fp < 6; ++fp) {
      for (std::size_t fn = 0; fn < 6; ++fn) {
        const FScore base = fscore(tp, fp, fn);
        for (std::size_t a : {2u, 3u, 7u}) {
          const FScore s = fscore(a * tp, a * fp, a * fn);
          EXPECT_NEAR(s.fscore, base.fscore, 1e-15);
          EXPECT_NEAR(s.precision, base.precision, 1e-15);
          EXPECT_NEAR(s.recall, base.recall, 1e-15);
        }
        if (base.precision + base.recall > 0.0) {
          EXPECT_NEAR(base.fscore, 2.0 * base.precision * base.recall / (base.precision + base.recall), 1e-15);
        }
      }
    }
  }
}

TEST(SummarizeTrials, SampleStatistics) {
  const EvalReport r = summarize_trials({{1.0, 0.5, 0.6}, {0.5, 1.0, 0.8}, {1.0, 1.0, 1.0}});
  EXPECT_NEAR(r.mean.fscore, 0.8, 1e-15);
  EXPECT_NEAR(r.stddev.fscore, 0.2, 1e-15);
  EXPECT_NEAR(r.mean.precision, 2.5 / 3.0, 1e-15);
  const EvalReport one = summarize_trials({{1.0, 1.0, 1.0}});
  EXPECT_EQ(one.stddev.fscore, 0.0);
  EXPECT_TRUE(summarize_trials({}).trials.empty());
}
