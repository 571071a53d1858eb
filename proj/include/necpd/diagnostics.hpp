#ifndef NECPD_DIAGNOSTICS_HPP
#define NECPD_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/io.hpp"
#include "necpd/solvers.hpp"
#include "necpd/tensor.hpp"
#include "necpd/trace.hpp"

namespace necpd {

/// n-mode product Y = T x_n M, i.e. Y_(n) = M * T_(n).
inline DenseTensor mode_product(const DenseTensor& t, const Matrix& m, std::size_t mode) {
  detail::check_mode(mode, t.order());
  if (static_cast<std::size_t>(m.cols()) != t.dim(mode)) {
    throw InvalidShape("mode product: matrix has " + std::to_string(m.cols()) +
                       " columns, mode extent is " + std::to_string(t.dim(mode)));
  }
  Dims d = t.dims();
  d[mode] = static_cast<std::size_t>(m.rows());
  return fold(m * unfold(t, mode), mode, d);
}

struct PseudoInverse {
  Matrix pinv;
  bool truncated = false;  // some singular value fell below the cutoff
};

/// Moore-Penrose pseudo-inverse, singular values below
/// rel_tol * sigma_max treated as zero.
inline PseudoInverse pseudo_inverse(const Matrix& a, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() ? rel_tol * s(0) : 0.0;
  PseudoInverse out;
  Vector inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      inv(i) = 1.0 / s(i);
    } else {
      inv(i) = 0.0;
      out.truncated = true;
    }
  }
  // a is I x R with I >= R in every use here; a wide matrix simply has fewer
  // singular values than columns.
  if (s.size() < a.cols()) out.truncated = true;
  out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

struct CorcondiaResult {
  double score = 0.0;          // percent; 100 for a perfectly superdiagonal core
  bool rank_deficient = false; // a factor pseudo-inverse had to be truncated
};

/// Core consistency: least-squares Tucker core G of x against the model
/// factors, scored as 100 * (1 - ||G - T||^2 / R) with T the superdiagonal
/// tensor of ones.
inline CorcondiaResult corcondia(const DenseTensor& x, const KruskalModel& m) {
  detail::check_model_dims(m, x.dims());
  CorcondiaResult out;
  DenseTensor core = x;
  for (std::size_t n = 0; n < m.order(); ++n) {
    const PseudoInverse p = pseudo_inverse(m.factor(n));
    out.rank_deficient = out.rank_deficient || p.truncated;
    core = mode_product(core, p.pinv, n);
  }
  const std::size_t R = m.rank();
  const std::size_t N = m.order();
  double ss = 0.0;
  std::vector<std::size_t> idx(N, 0);
  for (std::size_t off = 0; off < core.size(); ++off) {
    const bool diag = std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return i == idx[0]; });
    const double d = core[off] - (diag ? 1.0 : 0.0);
    ss += d * d;
    for (std::size_t n = N; n-- > 0;) {
      if (++idx[n] < R) break;
      idx[n] = 0;
    }
  }
  out.score = 100.0 * (1.0 - ss / static_cast<double>(R));
  return out;
}

struct RankScanRow {
  std::size_t rank = 0;
  double fit = 0.0;
  double corcondia = 0.0;
  bool rank_deficient = false;
};

/// ALS fit (best of `restarts`) and CORCONDIA for every rank 1..rmax that the
/// tensor dims allow.
inline std::vector<RankScanRow> rank_scan(const DenseTensor& x, std::size_t rmax,
                                          const SolverConfig& cfg, std::size_t restarts = 3) {
  if (rmax == 0) throw InvalidInput("rmax must be positive");
  const std::size_t cap = *std::min_element(x.dims().begin(), x.dims().end());
  std::vector<RankScanRow> rows;
  for (std::size_t r = 1; r <= std::min(rmax, cap); ++r) {
    SolverConfig c = cfg;
    c.rank = r;
    const FitResult fit = als_fit_best(x, c, restarts);
    const CorcondiaResult cc = corcondia(x, fit.model());
    rows.push_back({r, fit.trace.back().fit, cc.score, cc.rank_deficient});
  }
  return rows;
}

/// Largest rank whose CORCONDIA reaches `threshold` (rank 1 if none does).
inline std::size_t select_rank(const std::vector<RankScanRow>& scan, double threshold = 90.0) {
  std::size_t best = 1;
  for (const auto& row : scan) {
    if (row.corcondia >= threshold) best = std::max(best, row.rank);
  }
  return best;
}

struct TraceSummary {
  std::string label;
  std::size_t final_t = 0;
  double final_rmse = 0.0;
  double final_fit = 0.0;
  std::optional<std::size_t> steps_to_target;
  // Differences against the reference (first label in sorted order).
  double delta_final_rmse = 0.0;
  std::optional<long long> delta_steps_to_target;
};

struct TraceReport {
  double target_rmse = 0.0;
  std::vector<std::string> labels;  // sorted
  std::vector<std::size_t> steps;   // union of all steps, ascending
  std::vector<std::vector<std::optional<double>>> rmse;  // [step][label]
  std::vector<TraceSummary> summaries;                   // one per label
};

inline TraceReport compare_traces(std::vector<std::pair<std::string, ConvergenceTrace>> traces,
                                  double target_rmse) {
  if (traces.empty()) throw InvalidInput("compare_traces needs at least one trace");
  std::sort(traces.begin(), traces.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].second.empty()) throw InvalidInput("trace '" + traces[i].first + "' is empty");
    if (i && traces[i].first == traces[i - 1].first) {
      throw InvalidInput("duplicate trace label '" + traces[i].first + "'");
    }
  }
  TraceReport rep;
  rep.target_rmse = target_rmse;
  std::map<std::size_t, std::vector<std::optional<double>>> grid;
  for (std::size_t li = 0; li < traces.size(); ++li) {
    rep.labels.push_back(traces[li].first);
    for (const auto& e : traces[li].second.entries()) {
      auto& row = grid[e.t];
      row.resize(traces.size());
      row[li] = e.rmse;
    }
  }
  for (auto& [t, row] : grid) {
    row.resize(traces.size());
    rep.steps.push_back(t);
    rep.rmse.push_back(row);
  }
  for (const auto& [label, trace] : traces) {
    TraceSummary s;
    s.label = label;
    s.final_t = trace.back().t;
    s.final_rmse = trace.back().rmse;
    s.final_fit = trace.back().fit;
    s.steps_to_target = trace.steps_to(target_rmse);
    rep.summaries.push_back(s);
  }
  const TraceSummary ref = rep.summaries.front();
  for (auto& s : rep.summaries) {
    s.delta_final_rmse = s.final_rmse - ref.final_rmse;
    if (s.steps_to_target && ref.steps_to_target) {
      s.delta_steps_to_target = static_cast<long long>(*s.steps_to_target) -
                                static_cast<long long>(*ref.steps_to_target);
    }
  }
  return rep;
}

/// Merged CSV: t followed by one rmse column per label; blank where a trace
/// has no entry at that step.
inline void write_report_csv(std::ostream& os, const TraceReport& rep) {
  os << 't';
  for (const auto& l : rep.labels) os << ',' << l;
  os << '\n';
  for (std::size_t i = 0; i < rep.steps.size(); ++i) {
    os << rep.steps[i];
    for (const auto& v : rep.rmse[i]) {
      os << ',';
      if (v) os << io::format_double(*v);
    }
    os << '\n';
  }
}

inline void write_report_summary(std::ostream& os, const TraceReport& rep) {
  os << "target_rmse " << io::format_double(rep.target_rmse) << '\n';
  for (const auto& s : rep.summaries) {
    os << s.label << ": final_t=" << s.final_t << " final_rmse=" << io::format_double(s.final_rmse)
       << " final_fit=" << io::format_double(s.final_fit) << " steps_to_target=";
    if (s.steps_to_target) os << *s.steps_to_target; else os << "never";
    os << " delta_final_rmse=" << io::format_double(s.delta_final_rmse) << " delta_steps_to_target=";
    if (s.delta_steps_to_target) os << *s.delta_steps_to_target; else os << "n/a";
    os << '\n';
  }
}

}  // namespace necpd

#endif  // NECPD_DIAGNOSTICS_HPP
