#ifndef NECPD_TRACE_HPP
#define NECPD_TRACE_HPP

#include <cstddef>
#include <optional>
#include <ostream>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/io.hpp"

namespace necpd {

struct TraceEntry {
  std::size_t t = 0;
  double rmse = 0.0;
  double fit = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

/// (step, rmse, fit, wall_ms) rows with strictly increasing steps.
class ConvergenceTrace {
 public:
  void push(const TraceEntry& e) {
    if (!entries_.empty() && e.t <= entries_.back().t) {
      throw InvalidInput("trace steps must be strictly increasing");
    }
    entries_.push_back(e);
  }

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<TraceEntry>& entries() const noexcept { return entries_; }
  const TraceEntry& back() const { return entries_.back(); }
  const TraceEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// First recorded step whose rmse is at or below `target`.
  std::optional<std::size_t> steps_to(double target) const {
    for (const auto& e : entries_) {
      if (e.rmse <= target) return e.t;
    }
    return std::nullopt;
  }

  friend bool operator==(const ConvergenceTrace&, const ConvergenceTrace&) = default;

 private:
  std::vector<TraceEntry> entries_;
};

inline void write_trace_csv(std::ostream& os, const ConvergenceTrace& trace) {
  os << "t,rmse,fit,wall_ms\n";
  for (const auto& e : trace.entries()) {
    os << e.t << ',' << io::format_double(e.rmse) << ',' << io::format_double(e.fit) << ','
       << io::format_double(e.wall_ms) << '\n';
  }
}

inline ConvergenceTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("empty trace CSV");
  if (io::split_csv_line(line) != std::vector<std::string>{"t", "rmse", "fit", "wall_ms"}) {
    throw InvalidInput("trace CSV header must be t,rmse,fit,wall_ms");
  }
  ConvergenceTrace trace;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != 4) throw InvalidInput("trace CSV rows need 4 cells");
    TraceEntry e;
    const double t = io::parse_double(cells[0]);
    if (t < 0 || t != static_cast<double>(static_cast<std::size_t>(t))) {
      throw InvalidInput("trace step must be a nonnegative integer");
    }
    e.t = static_cast<std::size_t>(t);
    e.rmse = io::parse_double(cells[1]);
    e.fit = io::parse_double(cells[2]);
    e.wall_ms = io::parse_double(cells[3]);
    trace.push(e);
  }
  return trace;
}

}  // namespace necpd

#endif  // NECPD_TRACE_HPP
