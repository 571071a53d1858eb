#ifndef NECPD_SOLVERS_HPP
#define NECPD_SOLVERS_HPP

// CP solvers: batch ALS and the slice-wise stochastic family (SGD, perturbed
// SGD and NeCPD, which adds momentum, Gaussian perturbation and an L1
// shrinkage term), plus the single-step online update for streaming slices.
//
// The last mode is the temporal mode. A stochastic sample is one temporal
// slice: the sub-tensor with the last index fixed. A step touches every
// non-temporal factor and only the sampled row of the temporal factor.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/random.hpp"
#include "necpd/tensor.hpp"
#include "necpd/trace.hpp"

namespace necpd {

enum class Method { sgd, psgd, necpd };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::psgd: return "psgd";
    case Method::necpd: return "necpd";
  }
  return "?";
}

enum class SampleOrder {
  shuffled,    // fresh random permutation of the temporal slices every epoch
  sequential,  // slices 0..K-1 in order
};

struct SolverConfig {
  std::size_t rank = 1;
  double eta0 = 1.0;          // step size eta(t) = eta0 / (1 + t)
  double gamma = 0.0;         // friction, 0 <= gamma < 1
  double beta = 0.0;          // L1 shrinkage coefficient
  double noise_sigma = 0.0;   // std of the additive Gaussian perturbation
  std::size_t max_epochs = 1;
  double tol = 1e-8;          // stop when |fit change| over one epoch/iteration < tol
  std::uint64_t seed = 0;
  // Evaluate the gradient at the momentum look-ahead point (true Nesterov)
  // instead of the current factors.
  bool lookahead = false;
  // Re-solve the sampled temporal row by least squares before each
  // stochastic step.
  bool refresh_temporal_row = true;
  // Trace cadence in steps; 0 records once per epoch.
  std::size_t trace_every = 0;
  bool record_wall_time = false;

  double step_size(std::size_t t) const { return eta0 / (1.0 + static_cast<double>(t)); }

  void validate() const {
    if (rank == 0) throw InvalidInput("rank must be positive");
    if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw InvalidInput("eta0 must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in [0, 1)");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be nonnegative");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
      throw InvalidInput("noise_sigma must be nonnegative");
    }
    if (max_epochs == 0) throw InvalidInput("max_epochs must be positive");
    if (!(tol > 0.0)) throw InvalidInput("tol must be positive");
  }
};

// Seed streams derived from SolverConfig::seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSamplerStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;

struct SolverState {
  KruskalModel model;
  std::vector<Matrix> velocities;  // same shapes as the factors
  std::size_t t = 0;
  Rng rng;  // perturbation stream

  std::size_t temporal_mode() const { return model.order() - 1; }
};

/// Factors i.i.d. U[0,1], zero velocities, t = 0.
inline SolverState init_state(const Dims& dims, const SolverConfig& cfg) {
  cfg.validate();
  Rng init(split_seed(cfg.seed, kInitStream));
  std::vector<Matrix> factors;
  std::vector<Matrix> vel;
  const auto R = static_cast<Eigen::Index>(cfg.rank);
  for (std::size_t d : dims) {
    factors.push_back(uniform_matrix(static_cast<Eigen::Index>(d), R, init));
    vel.push_back(Matrix::Zero(static_cast<Eigen::Index>(d), R));
  }
  return SolverState{KruskalModel(std::move(factors)), std::move(vel), 0,
                     Rng(split_seed(cfg.seed, kNoiseStream))};
}

/// State around a given model (velocities zero, t = 0).
inline SolverState state_from_model(KruskalModel model, const SolverConfig& cfg) {
  std::vector<Matrix> vel;
  for (const auto& f : model.factors()) vel.push_back(Matrix::Zero(f.rows(), f.cols()));
  return SolverState{std::move(model), std::move(vel), 0, Rng(split_seed(cfg.seed, kNoiseStream))};
}

/// One temporal slice of a tensor together with its temporal row index.
struct Sample {
  DenseTensor slice;  // dims (I_1..I_{N-1}, 1)
  std::size_t index = 0;
};

inline Sample make_sample(const DenseTensor& x, std::size_t k) {
  return Sample{last_mode_slice(x, k), k};
}

namespace detail {

/// Solves X * gram = rhs (gram symmetric R x R), i.e. X = rhs * gram^{-1}.
/// A ridge of 1e-10 is added when gram is singular to 1e-12 relative.
inline Matrix solve_gram(const Matrix& gram, const Matrix& rhs) {
  Eigen::LDLT<Matrix> ldlt(gram);
  const double scale = gram.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) || ldlt.rcond() < 1e-12) {
    const Matrix ridged = gram + 1e-10 * Matrix::Identity(gram.rows(), gram.cols());
    Eigen::LDLT<Matrix> ridge(ridged);
    return ridge.solve(rhs.transpose()).transpose();
  }
  return ldlt.solve(rhs.transpose()).transpose();
}

/// Hadamard product of the Gram matrices of every factor but `skip`.
inline Matrix gram_hadamard_except(std::span<const Matrix> factors, std::size_t skip) {
  const Eigen::Index R = factors.front().cols();
  Matrix v = Matrix::Ones(R, R);
  for (std::size_t n = 0; n < factors.size(); ++n) {
    if (n == skip) continue;
    v = v.cwiseProduct(factors[n].transpose() * factors[n]);
  }
  return v;
}

inline void check_sample(const SolverState& state, const Sample& s) {
  const Dims dims = state.model.dims();
  const Dims& sd = s.slice.dims();
  if (sd.size() != dims.size() || sd.back() != 1 ||
      !std::equal(sd.begin(), sd.end() - 1, dims.begin())) {
    throw InvalidShape("sample slice dims " + dims_to_string(sd) +
                       " do not match model dims " + dims_to_string(dims));
  }
  if (s.index >= dims.back()) {
    throw InvalidShape("sample index " + std::to_string(s.index) +
                       " exceeds temporal factor rows " + std::to_string(dims.back()));
  }
}

/// Model restricted to one temporal row.
inline KruskalModel slice_model(const std::vector<Matrix>& factors, std::size_t row) {
  std::vector<Matrix> f = factors;
  f.back() = factors.back().row(static_cast<Eigen::Index>(row));
  return KruskalModel(std::move(f));
}

inline std::vector<Matrix> sample_gradients(const SolverState& state, const Sample& s,
                                            const SolverConfig& cfg, bool lookahead);

// Also rejects factors whose entries are finite but large enough for the
// reconstruction to overflow.
inline void check_finite(const SolverState& state) {
  double log_bound = std::log(static_cast<double>(state.model.rank()));
  for (std::size_t n = 0; n < state.model.order(); ++n) {
    const Matrix& f = state.model.factor(n);
    if (!f.allFinite()) {
      throw Divergence(n, "solver diverged: non-finite entries in factor " + std::to_string(n) +
                              " at step " + std::to_string(state.t));
    }
    if (f.size()) log_bound += std::log(std::max(f.cwiseAbs().maxCoeff(), 1e-300));
    if (log_bound > 600.0) {
      throw Divergence(n, "solver diverged: factor " + std::to_string(n) + " magnitudes overflow at step " +
                              std::to_string(state.t));
    }
  }
}

}  // namespace detail

/// Residual-form mode gradients G_n = (X_(n) - A_n KR_n^T) KR_n, with KR_n the
/// Khatri-Rao of the other factors in descending mode order. G_n equals
/// -d/dA_n of 0.5 * ||X - Xhat||^2, so A_n + eta * G_n is a descent step.
inline std::vector<Matrix> mode_gradients(const DenseTensor& x, const KruskalModel& m) {
  detail::check_model_dims(m, x.dims());
  const DenseTensor xhat = reconstruct(m, x.dims());
  std::vector<double> res(x.size());
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = x[i] - xhat[i];
  const DenseTensor residual(x.dims(), std::move(res));
  std::vector<Matrix> grads;
  grads.reserve(m.order());
  for (std::size_t n = 0; n < m.order(); ++n) {
    grads.push_back(unfold(residual, n) * khatri_rao_except(m.factors(), n));
  }
  return grads;
}

namespace detail {

inline std::vector<Matrix> sample_gradients(const SolverState& state, const Sample& s,
                                            const SolverConfig& cfg, bool lookahead) {
  const auto& f = state.model.factors();
  if (!lookahead) return mode_gradients(s.slice, slice_model(f, s.index));
  std::vector<Matrix> shifted(f.size());
  for (std::size_t n = 0; n < f.size(); ++n) shifted[n] = f[n] + cfg.gamma * state.velocities[n];
  return mode_gradients(s.slice, slice_model(shifted, s.index));
}

}  // namespace detail

/// Least-squares coefficients of a slice against the non-temporal factors:
/// argmin_c || vec(slice) - (A_1 (.) ... (.) A_{N-1}) c ||.
inline Vector temporal_row_least_squares(const KruskalModel& m, const DenseTensor& slice) {
  const std::size_t T = m.order() - 1;
  std::vector<Matrix> nonTemporal(m.factors().begin(), m.factors().begin() + static_cast<std::ptrdiff_t>(T));
  const Matrix kr = khatri_rao(std::span<const Matrix>(nonTemporal));
  if (static_cast<std::size_t>(kr.rows()) != slice.size()) {
    throw InvalidShape("slice of " + std::to_string(slice.size()) + " values does not match " +
                       std::to_string(kr.rows()) + " model rows");
  }
  const Eigen::Map<const Vector> v(slice.values().data(), static_cast<Eigen::Index>(slice.size()));
  const Matrix rhs = (kr.transpose() * v).transpose();
  Matrix gram = Matrix::Ones(kr.cols(), kr.cols());
  for (const auto& a : nonTemporal) gram = gram.cwiseProduct(a.transpose() * a);
  return detail::solve_gram(gram, rhs).transpose();
}

/// Spectral initial state: each non-temporal factor holds the leading R left
/// singular vectors of its unfolding (sign-fixed to a nonnegative column
/// sum, padded with U[0,1] columns when I_n < R), every temporal row is
/// solved by least squares, and the components are rebalanced so each mode
/// carries the same column norms.
inline SolverState spectral_init_state(const DenseTensor& x, const SolverConfig& cfg) {
  SolverState s = init_state(x.dims(), cfg);
  const std::size_t T = s.temporal_mode();
  const auto R = static_cast<Eigen::Index>(cfg.rank);
  for (std::size_t n = 0; n < T; ++n) {
    const Matrix xn = unfold(x, n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(xn * xn.transpose());
    const Eigen::Index In = xn.rows();
    Matrix& a = s.model.factor(n);
    for (Eigen::Index r = 0; r < std::min(R, In); ++r) {
      Vector v = eig.eigenvectors().col(In - 1 - r);
      if (v.sum() < 0.0) v = -v;
      a.col(r) = v;
    }
  }
  for (std::size_t k = 0; k < x.dims().back(); ++k) {
    s.model.factor(T).row(static_cast<Eigen::Index>(k)) =
        temporal_row_least_squares(s.model, last_mode_slice(x, k)).transpose();
  }
  balance_columns(s.model);
  return s;
}

/// Plain SGD: A_n <- A_n + eta(t) G_n on every mode. Velocities untouched.
inline SolverState sgd_step(SolverState state, const Sample& s, const SolverConfig& cfg) {
  detail::check_sample(state, s);
  const auto grads = detail::sample_gradients(state, s, cfg, false);
  const double eta = cfg.step_size(state.t);
  const std::size_t T = state.temporal_mode();
  const auto row = static_cast<Eigen::Index>(s.index);
  for (std::size_t n = 0; n < T; ++n) state.model.factor(n) += eta * grads[n];
  state.model.factor(T).row(row) += eta * grads[T];
  ++state.t;
  detail::check_finite(state);
  return state;
}

/// Adds i.i.d. N(0, sigma^2) noise to every non-temporal factor and to the
/// sampled temporal row, drawing mode by mode in column order.
inline SolverState perturb(SolverState state, const Sample& s, double sigma) {
  detail::check_sample(state, s);
  if (sigma == 0.0) return state;
  const std::size_t T = state.temporal_mode();
  for (std::size_t n = 0; n < T; ++n) {
    Matrix& a = state.model.factor(n);
    a += gaussian_matrix(a.rows(), a.cols(), sigma, state.rng);
  }
  Matrix& c = state.model.factor(T);
  c.row(static_cast<Eigen::Index>(s.index)) += gaussian_matrix(1, c.cols(), sigma, state.rng);
  detail::check_finite(state);
  return state;
}

/// Perturbed SGD baseline: an SGD step followed by the Gaussian perturbation.
inline SolverState psgd_step(SolverState state, const Sample& s, const SolverConfig& cfg) {
  const std::size_t t = state.t;
  state = sgd_step(std::move(state), s, cfg);
  state = perturb(std::move(state), s, cfg.noise_sigma);
  state.t = t + 1;
  return state;
}

/// Exponential-average velocity: v <- gamma v + (1 - gamma) grad. After T
/// updates from v = 0 with a constant grad, v = (1 - gamma^T) grad.
template <typename V, typename G>
void momentum_update(V&& v, const G& grad, double gamma) {
  v = gamma * v + (1.0 - gamma) * grad;
}

/// NeCPD step, per mode:
///   v <- gamma v + (1 - gamma) G
///   A <- A + eta(t) v + eps - beta sign(A),  eps ~ N(0, noise_sigma^2)
/// With gamma = beta = noise_sigma = 0 this is exactly sgd_step; with only
/// noise_sigma > 0 it is exactly psgd_step.
inline SolverState necpd_step(SolverState state, const Sample& s, const SolverConfig& cfg) {
  detail::check_sample(state, s);
  const auto grads = detail::sample_gradients(state, s, cfg, cfg.lookahead);
  const double eta = cfg.step_size(state.t);
  const double g = cfg.gamma;
  const double sigma = cfg.noise_sigma;
  const double beta = cfg.beta;
  const std::size_t T = state.temporal_mode();
  const auto row = static_cast<Eigen::Index>(s.index);

  auto update = [&](auto&& a, auto&& v, const Matrix& grad) {
    momentum_update(v, grad, g);
    Matrix next = a + eta * v;
    if (sigma > 0.0) next += gaussian_matrix(a.rows(), a.cols(), sigma, state.rng);
    if (beta > 0.0) next -= beta * a.cwiseSign();
    a = next;
  };
  for (std::size_t n = 0; n < T; ++n) {
    update(state.model.factor(n), state.velocities[n], grads[n]);
  }
  update(state.model.factor(T).row(row), state.velocities[T].row(row), grads[T]);
  ++state.t;
  detail::check_finite(state);
  return state;
}

inline SolverState stochastic_step(Method method, SolverState state, const Sample& s,
                                   const SolverConfig& cfg) {
  switch (method) {
    case Method::sgd: return sgd_step(std::move(state), s, cfg);
    case Method::psgd: return psgd_step(std::move(state), s, cfg);
    case Method::necpd: return necpd_step(std::move(state), s, cfg);
  }
  return state;
}

struct FitResult {
  SolverState state;
  ConvergenceTrace trace;

  const KruskalModel& model() const { return state.model; }
};

namespace detail {

class TraceRecorder {
 public:
  explicit TraceRecorder(bool wall) : wall_(wall), start_(std::chrono::steady_clock::now()) {}

  const TraceEntry& record(ConvergenceTrace& trace, const DenseTensor& x, const KruskalModel& m,
                           std::size_t t) {
    const auto rm = residual_metrics(x, m);
    double ms = 0.0;
    if (wall_) {
      ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }
    if (trace.empty() || trace.back().t < t) trace.push({t, rm.rmse, rm.fit, ms});
    return trace.back();
  }

 private:
  bool wall_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Epoch permutation of the temporal indices.
inline std::vector<std::size_t> sample_order(std::size_t K, SampleOrder order, Rng& rng) {
  std::vector<std::size_t> idx(K);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order == SampleOrder::shuffled) {
    // Fisher-Yates with an explicit draw so the order is independent of the
    // standard library's shuffle implementation.
    for (std::size_t i = K; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
  }
  return idx;
}

/// Streams temporal slices, one stochastic step per slice, recording the
/// full-tensor RMSE every cfg.trace_every steps and at each epoch end.
/// Stops when the fit changes by less than cfg.tol over an epoch.
inline FitResult stochastic_fit(const DenseTensor& x, const SolverConfig& cfg, Method method,
                                SampleOrder order = SampleOrder::shuffled,
                                std::optional<SolverState> initial = std::nullopt) {
  cfg.validate();
  if (x.order() < 3) throw InvalidShape("stochastic CP solvers need an order-3+ tensor");
  SolverState state = initial ? std::move(*initial) : init_state(x.dims(), cfg);
  detail::check_model_dims(state.model, x.dims());
  if (state.model.rank() != cfg.rank) throw InvalidInput("initial model rank differs from cfg.rank");

  Rng sampler(split_seed(cfg.seed, kSamplerStream));
  ConvergenceTrace trace;
  detail::TraceRecorder rec(cfg.record_wall_time);
  double prev_fit = rec.record(trace, x, state.model, state.t).fit;
  const std::size_t K = x.dims().back();

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t k : sample_order(K, order, sampler)) {
      const Sample s = make_sample(x, k);
      if (cfg.refresh_temporal_row) {
        state.model.factor(state.temporal_mode()).row(static_cast<Eigen::Index>(k)) =
            temporal_row_least_squares(state.model, s.slice).transpose();
      }
      state = stochastic_step(method, std::move(state), s, cfg);
      if (cfg.trace_every && state.t % cfg.trace_every == 0) rec.record(trace, x, state.model, state.t);
    }
    const double fit = rec.record(trace, x, state.model, state.t).fit;
    if (std::abs(fit - prev_fit) < cfg.tol) break;
    prev_fit = fit;
  }
  return FitResult{std::move(state), std::move(trace)};
}

inline FitResult sgd_fit(const DenseTensor& x, const SolverConfig& cfg,
                         SampleOrder order = SampleOrder::shuffled) {
  return stochastic_fit(x, cfg, Method::sgd, order);
}

inline FitResult psgd_fit(const DenseTensor& x, const SolverConfig& cfg,
                          SampleOrder order = SampleOrder::shuffled) {
  return stochastic_fit(x, cfg, Method::psgd, order);
}

inline FitResult necpd_fit(const DenseTensor& x, const SolverConfig& cfg,
                           SampleOrder order = SampleOrder::shuffled) {
  return stochastic_fit(x, cfg, Method::necpd, order);
}

/// Streams one new temporal slice into the model: appends a temporal row
/// initialized by least squares, then takes exactly one NeCPD step on it.
/// `slice` has the non-temporal dims, with or without a trailing extent of 1.
inline SolverState online_update(SolverState state, const DenseTensor& slice,
                                 const SolverConfig& cfg) {
  const Dims dims = state.model.dims();
  const std::size_t T = state.temporal_mode();
  Dims sd = slice.dims();
  if (sd.size() == dims.size() - 1) sd.push_back(1);
  if (sd.size() != dims.size() || sd.back() != 1 ||
      !std::equal(sd.begin(), sd.end() - 1, dims.begin())) {
    throw InvalidShape("new slice dims " + dims_to_string(slice.dims()) +
                       " do not match the non-temporal model dims " + dims_to_string(dims));
  }
  Sample s{DenseTensor(sd, std::vector<double>(slice.values().begin(), slice.values().end())),
           dims.back()};
  const Vector c = temporal_row_least_squares(state.model, s.slice);

  std::vector<Matrix> factors = state.model.factors();
  Matrix& temporal = factors[T];
  temporal.conservativeResize(temporal.rows() + 1, Eigen::NoChange);
  temporal.row(temporal.rows() - 1) = c.transpose();
  state.model = KruskalModel(std::move(factors));
  Matrix& vel = state.velocities[T];
  vel.conservativeResize(vel.rows() + 1, Eigen::NoChange);
  vel.row(vel.rows() - 1).setZero();

  return necpd_step(std::move(state), s, cfg);
}

/// Order-3 convenience: `slice` is the I_1 x I_2 (feature x location) matrix.
inline SolverState online_update(SolverState state, const Matrix& slice, const SolverConfig& cfg) {
  return online_update(std::move(state), matrix_as_slice(slice), cfg);
}

/// Empty-history state for streaming: random non-temporal factors and a
/// temporal factor with zero rows.
inline SolverState init_stream_state(const Dims& non_temporal_dims, const SolverConfig& cfg) {
  Dims d = non_temporal_dims;
  d.push_back(1);
  SolverState s = init_state(d, cfg);
  std::vector<Matrix> f = s.model.factors();
  f.back().resize(0, static_cast<Eigen::Index>(cfg.rank));
  s.velocities.back().resize(0, static_cast<Eigen::Index>(cfg.rank));
  s.model = KruskalModel(std::move(f));
  return s;
}

/// Alternating least squares. Each mode is solved exactly against the
/// Khatri-Rao of the others (normal equations with Hadamard-product Grams).
/// The trace records one row per iteration, t = iteration number.
inline FitResult als_fit(const DenseTensor& x, const SolverConfig& cfg,
                         std::optional<KruskalModel> initial = std::nullopt) {
  cfg.validate();
  if (x.order() < 3) throw InvalidShape("ALS needs an order-3+ tensor; use a matrix method for order 2");
  for (std::size_t n = 0; n < x.order(); ++n) {
    if (cfg.rank > x.dim(n)) {
      throw RankTooLarge("rank " + std::to_string(cfg.rank) + " exceeds mode-" + std::to_string(n) +
                         " extent " + std::to_string(x.dim(n)));
    }
  }
  SolverState state = initial ? state_from_model(std::move(*initial), cfg) : init_state(x.dims(), cfg);
  detail::check_model_dims(state.model, x.dims());

  std::vector<Matrix> unfoldings;
  for (std::size_t n = 0; n < x.order(); ++n) unfoldings.push_back(unfold(x, n));

  ConvergenceTrace trace;
  detail::TraceRecorder rec(cfg.record_wall_time);
  double prev_fit = residual_metrics(x, state.model).fit;
  std::vector<Matrix> factors = state.model.factors();
  for (std::size_t it = 1; it <= cfg.max_epochs; ++it) {
    for (std::size_t n = 0; n < x.order(); ++n) {
      const Matrix mttkrp = unfoldings[n] * khatri_rao_except(factors, n);
      factors[n] = detail::solve_gram(detail::gram_hadamard_except(factors, n), mttkrp);
    }
    state.model = KruskalModel(factors);
    state.t = it;
    const double fit = rec.record(trace, x, state.model, it).fit;
    if (std::abs(fit - prev_fit) < cfg.tol) break;
    prev_fit = fit;
  }
  return FitResult{std::move(state), std::move(trace)};
}

/// Best-fit ALS over `restarts` seeded initializations (seed split per restart).
inline FitResult als_fit_best(const DenseTensor& x, const SolverConfig& cfg, std::size_t restarts) {
  if (restarts == 0) throw InvalidInput("restarts must be positive");
  std::optional<FitResult> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    SolverConfig c = cfg;
    c.seed = split_seed(cfg.seed, 1000 + r);
    FitResult res = als_fit(x, c);
    if (!best || res.trace.back().fit > best->trace.back().fit) best = std::move(res);
  }
  return std::move(*best);
}

}  // namespace necpd

#endif  // NECPD_SOLVERS_HPP
