#ifndef NECPD_IO_HPP
#define NECPD_IO_HPP

// File formats.
//
// Binary tensor ("NTEN" v1), all integers and doubles little-endian:
//   4 bytes  magic "NTEN"
//   1 byte   version 0x01
//   u32      order N
//   N x u64  extents
//   prod(I_n) x f64 values, row-major
//
// Factor matrices are CSV with a header row c1,...,cR and one line per row.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "necpd/error.hpp"
#include "necpd/tensor.hpp"

namespace necpd::io {

inline constexpr std::array<char, 4> kTensorMagic{'N', 'T', 'E', 'N'};
inline constexpr std::uint8_t kTensorVersion = 0x01;
inline constexpr std::size_t kMaxTensorValues = std::size_t{1} << 32;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw InvalidInput("truncated tensor file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const DenseTensor& t) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  os.put(static_cast<char>(kTensorVersion));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.order()));
  for (std::size_t d : t.dims()) detail::put_le<std::uint64_t>(os, d);
  for (double v : t.values()) detail::put_le<double>(os, v);
}

inline DenseTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kTensorMagic) {
    throw InvalidInput("not an NTEN tensor file (bad magic)");
  }
  const int version = is.get();
  if (version != kTensorVersion) {
    throw InvalidInput("unsupported NTEN version " + std::to_string(version));
  }
  const auto order = detail::get_le<std::uint32_t>(is);
  if (order < 2 || order > 64) throw InvalidInput("implausible tensor order " + std::to_string(order));
  Dims dims(order);
  std::size_t total = 1;
  for (auto& d : dims) {
    const auto e = detail::get_le<std::uint64_t>(is);
    if (e == 0 || e > std::numeric_limits<std::uint32_t>::max()) {
      throw InvalidInput("implausible tensor extent " + std::to_string(e));
    }
    d = static_cast<std::size_t>(e);
    if (total > kMaxTensorValues / d) throw InvalidInput("tensor too large for this reader");
    total *= d;
  }
  std::vector<double> values(total);
  for (auto& v : values) v = detail::get_le<double>(is);
  return DenseTensor(std::move(dims), std::move(values));
}

inline void save_tensor(const std::string& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open " + path + " for writing");
  write_tensor(os, t);
}

inline DenseTensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path);
  return read_tensor(is);
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (c) os << ',';
    os << 'c' << (c + 1);
  }
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidInput("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InvalidInput("not a number: '" + s + "'");
  if (!std::isfinite(v)) throw InvalidInput("non-finite value: '" + s + "'");
  return v;
}

inline Matrix read_matrix_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("empty matrix CSV");
  const auto header = split_csv_line(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != "c" + std::to_string(c + 1)) {
      throw InvalidInput("matrix CSV header must be c1..cR, got '" + line + "'");
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InvalidInput("matrix CSV row has " + std::to_string(cells.size()) +
                         " cells, expected " + std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

inline void save_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open " + path + " for writing");
  write_matrix_csv(os, m);
}

inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open " + path);
  return read_matrix_csv(is);
}

}  // namespace necpd::io

#endif  // NECPD_IO_HPP
