#ifndef NECPD_ANOMALY_HPP
#define NECPD_ANOMALY_HPP

// One-class scoring over temporal-factor rows (damage detection and
// severity), k-NN scoring over location-factor rows (localization) and the
// F-score used to evaluate detection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/tensor.hpp"

namespace necpd {

inline constexpr double kSigmaFloor = 1e-8;

/// Gaussian-kernel mean scorer with a nu-quantile threshold.
///   score(z) = mean_i exp(-||z - row_i||^2 / (2 sigma^2))
///   decision(z) = score(z) - threshold
/// Positive decision values are in-distribution; more negative is more
/// anomalous.
struct AnomalyModel {
  Matrix train_rows;
  double sigma = 1.0;
  double nu = 0.05;
  double threshold = 0.0;
  bool degenerate = false;  // sigma hit the floor (training rows coincide)

  double score(const Eigen::Ref<const Vector>& z) const {
    const double denom = 2.0 * sigma * sigma;
    double s = 0.0;
    for (Eigen::Index i = 0; i < train_rows.rows(); ++i) {
      s += std::exp(-(train_rows.row(i).transpose() - z).squaredNorm() / denom);
    }
    return s / static_cast<double>(train_rows.rows());
  }
};

/// Median of the pairwise Euclidean distances between rows.
inline double median_pairwise_distance(const Matrix& rows) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j) d.push_back((rows.row(i) - rows.row(j)).norm());
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

/// Number of training rows allowed below the threshold: ceil(nu * M).
inline std::size_t outlier_quota(double nu, std::size_t m) {
  return static_cast<std::size_t>(std::ceil(nu * static_cast<double>(m) - 1e-9));
}

inline AnomalyModel fit_one_class(const Matrix& train_rows, double nu,
                                  std::optional<double> sigma = std::nullopt) {
  if (train_rows.rows() < 2) throw InvalidInput("one-class model needs at least 2 training rows");
  if (!(nu > 0.0 && nu < 1.0)) throw InvalidInput("nu must lie in (0, 1)");
  if (!train_rows.allFinite()) throw InvalidInput("training rows must be finite");
  if (sigma && !(*sigma > 0.0)) throw InvalidInput("sigma must be positive");

  AnomalyModel m;
  m.train_rows = train_rows;
  m.nu = nu;
  m.sigma = sigma ? *sigma : median_pairwise_distance(train_rows);
  if (m.sigma < kSigmaFloor) {
    m.sigma = kSigmaFloor;
    m.degenerate = true;
  }
  const auto M = static_cast<std::size_t>(train_rows.rows());
  std::vector<double> scores(M);
  for (std::size_t i = 0; i < M; ++i) {
    scores[i] = m.score(train_rows.row(static_cast<Eigen::Index>(i)).transpose());
  }
  std::sort(scores.begin(), scores.end());
  // The (quota+1)-th smallest score: exactly `quota` rows fall strictly
  // below it when scores are distinct.
  m.threshold = scores[std::min(outlier_quota(nu, M), M - 1)];
  return m;
}

inline Vector decision_values(const AnomalyModel& m, const Matrix& rows) {
  if (rows.rows() == 0) return Vector(0);
  if (rows.cols() != m.train_rows.cols()) {
    throw InvalidShape("rows have " + std::to_string(rows.cols()) + " columns, model expects " +
                       std::to_string(m.train_rows.cols()));
  }
  Vector out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i) = m.score(rows.row(i).transpose()) - m.threshold;
  return out;
}

/// Mean distance from each row to its k nearest other rows. Ties in the
/// neighbour ranking go to the lower row index.
inline Vector knn_scores(const Matrix& b, std::size_t k) {
  const auto L = static_cast<std::size_t>(b.rows());
  if (k < 1 || k + 1 > L) {
    throw InvalidInput("k must lie in [1, L-1] (k=" + std::to_string(k) + ", L=" + std::to_string(L) + ")");
  }
  Vector out(static_cast<Eigen::Index>(L));
  std::vector<std::pair<double, std::size_t>> nb;
  for (std::size_t l = 0; l < L; ++l) {
    nb.clear();
    for (std::size_t o = 0; o < L; ++o) {
      if (o == l) continue;
      nb.emplace_back((b.row(static_cast<Eigen::Index>(l)) - b.row(static_cast<Eigen::Index>(o))).norm(), o);
    }
    std::partial_sort(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(k), nb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += nb[i].first;
    out(static_cast<Eigen::Index>(l)) = s / static_cast<double>(k);
  }
  return out;
}

/// One row of k-NN scores per location-factor snapshot (events x L).
inline Matrix localization_scores(const std::vector<Matrix>& history, std::size_t k) {
  if (history.empty()) return Matrix(0, 0);
  const Eigen::Index L = history.front().rows();
  Matrix out(static_cast<Eigen::Index>(history.size()), L);
  for (std::size_t e = 0; e < history.size(); ++e) {
    if (history[e].rows() != L) throw InvalidShape("location snapshots must share a row count");
    out.row(static_cast<Eigen::Index>(e)) = knn_scores(history[e], k).transpose();
  }
  return out;
}

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

/// Precision, recall and their harmonic mean; any 0/0 ratio is taken as 0.
inline FScore fscore(std::size_t tp, std::size_t fp, std::size_t fn) {
  FScore f;
  const auto dtp = static_cast<double>(tp);
  if (tp + fp > 0) f.precision = dtp / static_cast<double>(tp + fp);
  if (tp + fn > 0) f.recall = dtp / static_cast<double>(tp + fn);
  if (f.precision + f.recall > 0.0) {
    f.fscore = 2.0 * (f.precision * f.recall) / (f.precision + f.recall);
  }
  return f;
}

struct EvalReport {
  std::vector<FScore> trials;
  FScore mean;
  FScore stddev;  // sample standard deviation (n - 1); 0 for a single trial
};

inline EvalReport summarize_trials(std::vector<FScore> trials) {
  EvalReport r;
  r.trials = std::move(trials);
  const auto n = static_cast<double>(r.trials.size());
  if (r.trials.empty()) return r;
  auto stats = [&](auto field, double& mean, double& sd) {
    double s = 0.0;
    for (const auto& t : r.trials) s += t.*field;
    mean = s / n;
    double v = 0.0;
    for (const auto& t : r.trials) v += (t.*field - mean) * (t.*field - mean);
    sd = r.trials.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
  };
  stats(&FScore::precision, r.mean.precision, r.stddev.precision);
  stats(&FScore::recall, r.mean.recall, r.stddev.recall);
  stats(&FScore::fscore, r.mean.fscore, r.stddev.fscore);
  return r;
}

}  // namespace necpd

#endif  // NECPD_ANOMALY_HPP
