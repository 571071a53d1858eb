#ifndef NECPD_TEST_UTIL_HPP
#define NECPD_TEST_UTIL_HPP

#include <random>
#include <vector>

#include "necpd/necpd.hpp"

namespace testutil {

inline necpd::DenseTensor random_tensor(const necpd::Dims& dims, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(necpd::dims_product(dims));
  for (auto& x : v) x = u(g);
  return necpd::DenseTensor(dims, std::move(v));
}

inline necpd::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  necpd::Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(g);
  return m;
}

inline necpd::KruskalModel random_model(const necpd::Dims& dims, std::size_t rank, std::uint64_t seed) {
  std::vector<necpd::Matrix> f;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    f.push_back(random_matrix(static_cast<Eigen::Index>(dims[n]), static_cast<Eigen::Index>(rank), seed * 31 + n));
  }
  return necpd::KruskalModel(std::move(f));
}

// Row-major multi-index of a flat offset.
inline std::vector<std::size_t> multi_index(std::size_t off, const necpd::Dims& dims) {
  std::vector<std::size_t> idx(dims.size());
  for (std::size_t n = dims.size(); n-- > 0;) {
    idx[n] = off % dims[n];
    off /= dims[n];
  }
  return idx;
}

// Sum over r of the product of factor entries, one entry at a time.
inline double brute_entry(const necpd::KruskalModel& m, const std::vector<std::size_t>& idx) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(m.rank()); ++r) {
    double p = 1.0;
    for (std::size_t n = 0; n < idx.size(); ++n) p *= m.factor(n)(static_cast<Eigen::Index>(idx[n]), r);
    s += p;
  }
  return s;
}

inline double rel_err(const necpd::Matrix& a, const necpd::Matrix& b) {
  const double d = (a - b).norm();
  const double s = std::max(a.norm(), b.norm());
  return s > 0.0 ? d / s : d;
}

// Central finite-difference estimate of -d/dA_n of 0.5 * ||x - model||^2.
inline necpd::Matrix fd_negative_gradient(const necpd::DenseTensor& x, const necpd::KruskalModel& m,
                                          std::size_t n, double h = 1e-6) {
  const necpd::Matrix& a = m.factor(n);
  necpd::Matrix g(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      auto fp = m.factors();
      auto fm = m.factors();
      fp[n](i, j) += h;
      fm[n](i, j) -= h;
      const double lp = necpd::half_squared_loss(x, necpd::KruskalModel(std::move(fp)));
      const double lm = necpd::half_squared_loss(x, necpd::KruskalModel(std::move(fm)));
      g(i, j) = -(lp - lm) / (2.0 * h);
    }
  }
  return g;
}

}  // namespace testutil

#endif
