// Copyright 2026 The KCOT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Matrix file formats.
//
//   CSV:    one matrix row per line, comma separated. A leading line that does
//           not parse as numbers is treated as a header and skipped.
//   Binary: uint64 rows, uint64 cols (little endian), then rows*cols float64
//           values in row-major order (little endian).
//
// Files ending in ".bin" use the binary format; everything else is CSV.

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "kcot/core.hpp"

namespace kcot {

enum class MatrixFormat { kCsv, kBinary };

inline MatrixFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? MatrixFormat::kBinary : MatrixFormat::kCsv;
}

/// Shortest decimal string that parses back to exactly `x`. Integral values
/// keep a trailing ".0" so they read as floating point.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw Error("failed to format double");
  std::string s(buf.data(), end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_csv_row(std::string_view line, std::vector<double>& row) {
  row.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string_view cell =
        line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    double v = 0.0;
    if (!parse_double(cell, v)) return false;
    row.push_back(v);
    if (comma == std::string_view::npos) return true;
    start = comma + 1;
  }
}

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b{};
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

}  // namespace detail

inline Matrix parse_csv_matrix(std::istream& in, const std::string& source = "<stream>") {
  std::vector<double> values;
  std::vector<double> row;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (!detail::parse_csv_row(view, row)) {
      if (rows == 0 && cols < 0 && line_no == 1) continue;  // header
      throw Error(source + ":" + std::to_string(line_no) + ": malformed CSV row");
    }
    if (cols < 0) cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != cols) {
      throw Error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                  " columns, got " + std::to_string(row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw Error(source + ": no matrix rows");
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

inline void write_csv_matrix(std::ostream& out, const Matrix& m) {
  for (Index k = 0; k < m.rows(); ++k) {
    for (Index i = 0; i < m.cols(); ++i) {
      if (i) out << ',';
      out << format_double(m(k, i));
    }
    out << '\n';
  }
}

inline Matrix parse_binary_matrix(std::istream& in, const std::string& source = "<stream>") {
  std::uint64_t dims[2] = {0, 0};
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims))) {
    throw Error(source + ": truncated binary matrix header");
  }
  const std::uint64_t rows = detail::to_little_endian(dims[0]);
  const std::uint64_t cols = detail::to_little_endian(dims[1]);
  if (rows == 0 || cols == 0) throw Error(source + ": empty binary matrix");
  if (rows > (std::uint64_t{1} << 32) || cols > (std::uint64_t{1} << 32) ||
      rows * cols > (std::uint64_t{1} << 34)) {
    throw Error(source + ": binary matrix dimensions too large");
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  const auto bytes = static_cast<std::streamsize>(rows * cols * sizeof(double));
  if (!in.read(reinterpret_cast<char*>(m.data()), bytes)) {
    throw Error(source + ": truncated binary matrix payload");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (Index j = 0; j < m.size(); ++j) m.data()[j] = detail::to_little_endian(m.data()[j]);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(source + ": trailing bytes after matrix");
  return m;
}

inline void write_binary_matrix(std::ostream& out, const Matrix& m) {
  const std::uint64_t dims[2] = {detail::to_little_endian(static_cast<std::uint64_t>(m.rows())),
                                 detail::to_little_endian(static_cast<std::uint64_t>(m.cols()))};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (Index j = 0; j < m.size(); ++j) {
    const double v = detail::to_little_endian(m.data()[j]);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  const MatrixFormat fmt = format_for_path(path);
  std::ifstream in(path, fmt == MatrixFormat::kBinary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("cannot open " + path.string());
  return fmt == MatrixFormat::kBinary ? parse_binary_matrix(in, path.string())
                                      : parse_csv_matrix(in, path.string());
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string encode_matrix(const Matrix& m, MatrixFormat fmt) {
  std::ostringstream out(fmt == MatrixFormat::kBinary ? std::ios::binary | std::ios::out : std::ios::out);
  if (fmt == MatrixFormat::kBinary) {
    write_binary_matrix(out, m);
  } else {
    write_csv_matrix(out, m);
  }
  return out.str();
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  write_file_atomic(path, encode_matrix(m, format_for_path(path)));
}

}  // namespace kcot
