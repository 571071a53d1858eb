#ifndef NECPD_FEATURES_HPP
#define NECPD_FEATURES_HPP

// Time-domain sensor events and their conversion to frequency features.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/tensor.hpp"

namespace necpd {

struct EventRecord {
  std::string id;
  Matrix signals;  // samples x sensors
  double sample_rate_hz = 1.0;
  std::string label = "healthy";  // "healthy" or a damage class name

  bool healthy() const { return label == "healthy"; }
  std::size_t samples() const { return static_cast<std::size_t>(signals.rows()); }
  std::size_t sensors() const { return static_cast<std::size_t>(signals.cols()); }
};

inline constexpr double kStdFloor = 1e-12;

struct FeatureOptions {
  std::size_t n_freq = 0;
  // Replace sensors (0,1), (2,3), ... by their differences before
  // standardizing; halves the location count.
  bool diff_adjacent = false;
};

struct Features {
  Matrix values;              // n_freq x locations
  bool constant_signal = false;  // some channel hit the std floor
};

/// Differences of adjacent sensor pairs: column j is s[2j] - s[2j+1].
inline Matrix adjacent_differences(const Matrix& signals) {
  if (signals.cols() < 2 || signals.cols() % 2) {
    throw InvalidInput("adjacent differencing needs an even, nonzero sensor count");
  }
  Matrix out(signals.rows(), signals.cols() / 2);
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = signals.col(2 * j) - signals.col(2 * j + 1);
  return out;
}

/// Per channel: standardize to zero mean and unit (population) standard
/// deviation, take the real FFT, and keep the single-sided amplitude
/// 2|X_b|/n of bins b = 1..n_freq (DC excluded).
inline Features extract_features(const EventRecord& e, const FeatureOptions& opt) {
  const Matrix sig = opt.diff_adjacent ? adjacent_differences(e.signals) : e.signals;
  const auto n = static_cast<std::size_t>(sig.rows());
  if (opt.n_freq == 0) throw InvalidInput("n_freq must be positive");
  if (n < 2 * opt.n_freq) {
    throw InvalidInput("event '" + e.id + "' has " + std::to_string(n) + " samples; need at least " +
                       std::to_string(2 * opt.n_freq) + " for " + std::to_string(opt.n_freq) + " bins");
  }
  if (!sig.allFinite()) throw InvalidInput("event '" + e.id + "' has non-finite samples");

  Features out;
  out.values.resize(static_cast<Eigen::Index>(opt.n_freq), sig.cols());
  Eigen::FFT<double> fft;
  std::vector<double> x(n);
  std::vector<std::complex<double>> spec;
  const double scale = 2.0 / static_cast<double>(n);
  for (Eigen::Index c = 0; c < sig.cols(); ++c) {
    const double mean = sig.col(c).mean();
    const double var = (sig.col(c).array() - mean).square().sum() / static_cast<double>(n);
    double sd = std::sqrt(var);
    if (sd < kStdFloor) {
      sd = kStdFloor;
      out.constant_signal = true;
    }
    for (std::size_t i = 0; i < n; ++i) x[i] = (sig(static_cast<Eigen::Index>(i), c) - mean) / sd;
    fft.fwd(spec, x);
    for (std::size_t b = 1; b <= opt.n_freq; ++b) {
      out.values(static_cast<Eigen::Index>(b - 1), c) = scale * std::abs(spec[b]);
    }
  }
  return out;
}

}  // namespace necpd

#endif  // NECPD_FEATURES_HPP
