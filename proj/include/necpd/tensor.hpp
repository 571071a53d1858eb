#ifndef NECPD_TENSOR_HPP
#define NECPD_TENSOR_HPP

// Dense N-way tensors, Kruskal (CP) models and the matricized algebra used by
// every solver: mode-n unfolding, folding, Khatri-Rao products and
// reconstruction.
//
// Conventions:
//   * tensor values are stored row-major (last index varies fastest);
//   * modes are 0-based in the C++ API;
//   * unfolding follows the Kolda layout: in the mode-n unfolding the column
//     index runs fastest over the lowest non-n index;
//   * khatri_rao(a, b) puts the row index of b fastest, so that
//     unfold(x, n) == A_n * khatri_rao_except(factors, n)^T.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "necpd/error.hpp"

namespace necpd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string dims_to_string(std::span<const std::size_t> dims) {
  std::string s;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (n) s += "x";
    s += std::to_string(dims[n]);
  }
  return s;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

class DenseTensor {
 public:
  DenseTensor() = default;

  /// Zero-filled tensor.
  explicit DenseTensor(Dims dims) : dims_(std::move(dims)) {
    check_dims();
    values_.assign(dims_product(dims_), 0.0);
  }

  DenseTensor(Dims dims, std::vector<double> values)
      : dims_(std::move(dims)), values_(std::move(values)) {
    check_dims();
    if (values_.size() != dims_product(dims_)) {
      throw InvalidShape("tensor of dims " + dims_to_string(dims_) +
                         " needs " + std::to_string(dims_product(dims_)) +
                         " values, got " + std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidInput("tensor values must be finite");
    }
  }

  std::size_t order() const noexcept { return dims_.size(); }
  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double& operator[](std::size_t offset) { return values_[offset]; }
  double operator[](std::size_t offset) const { return values_[offset]; }

  /// Row-major offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> index) const {
    std::size_t off = 0;
    for (std::size_t n = 0; n < dims_.size(); ++n) off = off * dims_[n] + index[n];
    return off;
  }

  double at(std::span<const std::size_t> index) const {
    return values_[offset(index)];
  }
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  void check_dims() const {
    if (dims_.size() < 2) {
      throw InvalidShape("tensor order must be at least 2, got " +
                         std::to_string(dims_.size()));
    }
    for (std::size_t d : dims_) {
      if (d == 0) throw InvalidShape("tensor extents must be positive");
    }
  }

  Dims dims_;
  std::vector<double> values_;
};

/// Rank-R CP model: factor n is I_n x R. No weight vector.
class KruskalModel {
 public:
  KruskalModel() = default;

  explicit KruskalModel(std::vector<Matrix> factors)
      : factors_(std::move(factors)) {
    if (factors_.size() < 2) throw InvalidShape("a Kruskal model needs at least 2 factors");
    rank_ = static_cast<std::size_t>(factors_.front().cols());
    if (rank_ == 0) throw InvalidShape("Kruskal rank must be positive");
    for (const auto& f : factors_) {
      if (static_cast<std::size_t>(f.cols()) != rank_) {
        throw InvalidShape("every factor must have the same number of columns");
      }
      if (!f.allFinite()) throw InvalidInput("factor entries must be finite");
    }
  }

  /// All-zero model of the given shape.
  static KruskalModel zeros(const Dims& dims, std::size_t rank) {
    std::vector<Matrix> f;
    f.reserve(dims.size());
    for (std::size_t d : dims) f.push_back(Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rank)));
    return KruskalModel(std::move(f));
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t order() const noexcept { return factors_.size(); }

  const Matrix& factor(std::size_t mode) const { return factors_.at(mode); }
  Matrix& factor(std::size_t mode) { return factors_.at(mode); }
  const std::vector<Matrix>& factors() const noexcept { return factors_; }

  Dims dims() const {
    Dims d;
    for (const auto& f : factors_) d.push_back(static_cast<std::size_t>(f.rows()));
    return d;
  }

 private:
  std::size_t rank_ = 0;
  std::vector<Matrix> factors_;
};

namespace detail {

inline void check_mode(std::size_t mode, std::size_t order) {
  if (mode >= order) {
    throw InvalidMode("mode " + std::to_string(mode) + " out of range for order-" +
                      std::to_string(order) + " tensor");
  }
}

// Kolda column strides: J_n = prod_{m<n, m!=mode} I_m, zero for n == mode.
inline std::vector<std::size_t> unfold_strides(const Dims& dims, std::size_t mode) {
  std::vector<std::size_t> strides(dims.size(), 0);
  std::size_t s = 1;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (n == mode) continue;
    strides[n] = s;
    s *= dims[n];
  }
  return strides;
}

// Visits every element in row-major order with its (row, column) position in
// the mode-n unfolding.
template <typename Fn>
void for_each_unfolded(const Dims& dims, std::size_t mode, Fn&& fn) {
  const auto strides = unfold_strides(dims, mode);
  const std::size_t total = dims_product(dims);
  std::vector<std::size_t> idx(dims.size(), 0);
  std::size_t col = 0;
  for (std::size_t off = 0; off < total; ++off) {
    fn(off, idx[mode], col);
    // odometer increment, last index fastest
    for (std::size_t n = dims.size(); n-- > 0;) {
      if (++idx[n] < dims[n]) {
        col += strides[n];
        break;
      }
      col -= strides[n] * (dims[n] - 1);
      idx[n] = 0;
    }
  }
}

}  // namespace detail

/// Mode-n matricization, I_mode x prod_{n != mode} I_n.
inline Matrix unfold(const DenseTensor& t, std::size_t mode) {
  detail::check_mode(mode, t.order());
  const auto rows = static_cast<Eigen::Index>(t.dim(mode));
  const auto cols = static_cast<Eigen::Index>(t.size() / t.dim(mode));
  Matrix m(rows, cols);
  const auto vals = t.values();
  detail::for_each_unfolded(t.dims(), mode, [&](std::size_t off, std::size_t r, std::size_t c) {
    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vals[off];
  });
  return m;
}

/// Inverse of unfold.
inline DenseTensor fold(const Matrix& m, std::size_t mode, const Dims& dims) {
  if (dims.size() < 2) throw InvalidShape("fold target order must be at least 2");
  detail::check_mode(mode, dims.size());
  const std::size_t total = dims_product(dims);
  if (total != static_cast<std::size_t>(m.size()) ||
      static_cast<std::size_t>(m.rows()) != dims[mode]) {
    throw InvalidShape("cannot fold a " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + " matrix into dims " +
                       dims_to_string(dims) + " along mode " + std::to_string(mode));
  }
  std::vector<double> values(total);
  detail::for_each_unfolded(dims, mode, [&](std::size_t off, std::size_t r, std::size_t c) {
    values[off] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  });
  return DenseTensor(dims, std::move(values));
}

/// Column-wise Kronecker product: column r is kron(a.col(r), b.col(r)).
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw InvalidShape("khatri_rao operands need equal column counts (" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  }
  const Eigen::Index J = a.rows();
  const Eigen::Index K = b.rows();
  Matrix out(J * K, a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index j = 0; j < J; ++j) {
      out.col(r).segment(j * K, K) = a(j, r) * b.col(r);
    }
  }
  return out;
}

/// Left fold ((m0 (.) m1) (.) m2) ... over the given matrices.
inline Matrix khatri_rao(std::span<const Matrix> mats) {
  if (mats.empty()) throw InvalidShape("khatri_rao needs at least one operand");
  Matrix acc = mats.front();
  for (std::size_t i = 1; i < mats.size(); ++i) acc = khatri_rao(acc, mats[i]);
  return acc;
}

/// Khatri-Rao of every factor but `mode`, in descending mode order.
inline Matrix khatri_rao_except(std::span<const Matrix> factors, std::size_t mode) {
  detail::check_mode(mode, factors.size());
  std::vector<Matrix> ops;
  ops.reserve(factors.size() - 1);
  for (std::size_t n = factors.size(); n-- > 0;) {
    if (n != mode) ops.push_back(factors[n]);
  }
  return khatri_rao(std::span<const Matrix>(ops));
}

namespace detail {

inline void check_model_dims(const KruskalModel& m, const Dims& dims) {
  if (m.order() != dims.size()) {
    throw InvalidShape("model order " + std::to_string(m.order()) +
                       " does not match tensor order " + std::to_string(dims.size()));
  }
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (static_cast<std::size_t>(m.factor(n).rows()) != dims[n]) {
      throw InvalidShape("factor " + std::to_string(n) + " has " +
                         std::to_string(m.factor(n).rows()) + " rows, expected " +
                         std::to_string(dims[n]));
    }
  }
}

}  // namespace detail

/// Full tensor sum_r a1[:, r] o a2[:, r] o ... o aN[:, r].
inline DenseTensor reconstruct(const KruskalModel& m, const Dims& dims) {
  detail::check_model_dims(m, dims);
  const std::size_t last = dims.size() - 1;
  // Row-major values viewed as (prod_{n<last} I_n) x I_last equal
  // (A_0 (.) A_1 (.) ... (.) A_{last-1}) * A_last^T.
  const Matrix prefix =
      khatri_rao(std::span<const Matrix>(m.factors().data(), last));
  const Matrix mat = prefix * m.factor(last).transpose();
  std::vector<double> values(dims_product(dims));
  const Eigen::Index cols = mat.cols();
  for (Eigen::Index p = 0; p < mat.rows(); ++p) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      values[static_cast<std::size_t>(p * cols + k)] = mat(p, k);
    }
  }
  return DenseTensor(dims, std::move(values));
}

struct ResidualMetrics {
  double rmse = 0.0;
  double fit = 0.0;
};

inline double residual_norm(const DenseTensor& x, const KruskalModel& m) {
  const DenseTensor xhat = reconstruct(m, x.dims());
  double s = 0.0;
  const auto a = x.values();
  const auto b = xhat.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// rmse = ||X - Xhat||_F / sqrt(#elements), fit = 1 - ||X - Xhat||_F / ||X||_F.
/// For an all-zero X the fit is 1 on an exact model and 0 otherwise.
inline ResidualMetrics residual_metrics(const DenseTensor& x, const KruskalModel& m) {
  const double res = residual_norm(x, m);
  const double xn = x.norm();
  ResidualMetrics out;
  out.rmse = res / std::sqrt(static_cast<double>(x.size()));
  if (xn > 0.0) {
    out.fit = 1.0 - res / xn;
  } else {
    out.fit = res == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

/// 0.5 * ||X - Xhat||_F^2, the objective minimized by every solver.
inline double half_squared_loss(const DenseTensor& x, const KruskalModel& m) {
  const double r = residual_norm(x, m);
  return 0.5 * r * r;
}

/// Rescales each rank-one component so that its column has the same norm in
/// every factor (the geometric mean of the original norms). The
/// reconstruction is unchanged up to rounding. Components with a zero column
/// are left alone.
inline void balance_columns(KruskalModel& m) {
  const std::size_t N = m.order();
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(m.rank()); ++r) {
    std::vector<double> norms(N);
    double log_mean = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < N; ++n) {
      norms[n] = m.factor(n).col(r).norm();
      if (!(norms[n] > 0.0)) zero = true;
      log_mean += std::log(norms[n]);
    }
    if (zero) continue;
    const double target = std::exp(log_mean / static_cast<double>(N));
    for (std::size_t n = 0; n < N; ++n) m.factor(n).col(r) *= target / norms[n];
  }
}

/// Sub-tensor with the last index fixed at k; dims are (I_1..I_{N-1}, 1).
inline DenseTensor last_mode_slice(const DenseTensor& x, std::size_t k) {
  const std::size_t K = x.dims().back();
  if (k >= K) throw InvalidInput("slice index " + std::to_string(k) + " out of range");
  Dims d = x.dims();
  d.back() = 1;
  const std::size_t P = x.size() / K;
  std::vector<double> values(P);
  const auto src = x.values();
  for (std::size_t p = 0; p < P; ++p) values[p] = src[p * K + k];
  return DenseTensor(std::move(d), std::move(values));
}

/// Stacks equally shaped tensors of dims (I_1..I_{N-1}, 1) along the last mode.
inline DenseTensor stack_last_mode(std::span<const DenseTensor> slices) {
  if (slices.empty()) throw InvalidInput("cannot stack zero slices");
  const Dims& d0 = slices.front().dims();
  if (d0.back() != 1) throw InvalidShape("slices must have a trailing extent of 1");
  const std::size_t P = slices.front().size();
  const std::size_t K = slices.size();
  std::vector<double> values(P * K);
  for (std::size_t k = 0; k < K; ++k) {
    if (slices[k].dims() != d0) throw InvalidShape("slices must share dims");
    const auto src = slices[k].values();
    for (std::size_t p = 0; p < P; ++p) values[p * K + k] = src[p];
  }
  Dims d = d0;
  d.back() = K;
  return DenseTensor(std::move(d), std::move(values));
}

/// Row-major (rows x cols) matrix viewed as a (rows, cols, 1) slice.
inline DenseTensor matrix_as_slice(const Matrix& m) {
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      values[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    }
  }
  return DenseTensor({static_cast<std::size_t>(m.rows()),
                      static_cast<std::size_t>(m.cols()), 1},
                     std::move(values));
}

}  // namespace necpd

#endif  // NECPD_TENSOR_HPP
