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

#include "kcot/matrix_io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace kcot {
namespace {

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Matrix awkward_values() {
  SceneRng rng(21);
  Matrix m = testing::random_matrix(rng, 4, 3, -1e3, 1e3);
  m(0, 0) = 0.1;
  m(0, 1) = 1.0 / 3.0;
  m(0, 2) = -0.0;
  m(1, 0) = 5e-324;
  m(1, 1) = 1.7976931348623157e308;
  m(1, 2) = 1.0;
  return m;
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(1.0), "1.0");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.0), "-2.0");
  EXPECT_EQ(format_double(1e-7), "1e-07");
}

TEST(MatrixIo, CsvRoundTripIsBitExact) {
  const Matrix m = awkward_values();
  std::istringstream in(encode_matrix(m, MatrixFormat::kCsv));
  EXPECT_TRUE(bit_equal(parse_csv_matrix(in), m));
}

TEST(MatrixIo, BinaryRoundTripIsBitExact) {
  const Matrix m = awkward_values();
  std::istringstream in(encode_matrix(m, MatrixFormat::kBinary), std::ios::binary);
  EXPECT_TRUE(bit_equal(parse_binary_matrix(in), m));
}

TEST(MatrixIo, BinaryLayoutIsLittleEndianRowMajor) {
  Matrix m(1, 2);
  m << 1.0, 2.0;
  const std::string bytes = encode_matrix(m, MatrixFormat::kBinary);
  ASSERT_EQ(bytes.size(), 16u + 16u);
  EXPECT_EQ(bytes[0], 1);
  EXPECT_EQ(bytes[8], 2);
  // 1.0 is 0x3FF0000000000000; its last little-endian byte is 0x3F.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 7]), 0x3F);
}

TEST(MatrixIo, FileRoundTripByExtension) {
  const auto dir = testing::temp_dir("matrix_io");
  const Matrix m = awkward_values();
  write_matrix(dir / "m.csv", m);
  write_matrix(dir / "m.bin", m);
  EXPECT_TRUE(bit_equal(read_matrix(dir / "m.csv"), m));
  EXPECT_TRUE(bit_equal(read_matrix(dir / "m.bin"), m));
  EXPECT_FALSE(std::filesystem::exists(dir / "m.csv.tmp"));
}

TEST(MatrixIo, CsvSkipsHeaderAndBlankLines) {
  std::istringstream in("a,b\n1,2\n\n3,4\n");
  const Matrix m = parse_csv_matrix(in);
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 1), 4.0);
}

TEST(MatrixIo, CsvErrors) {
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(parse_csv_matrix(ragged), Error);
  std::istringstream junk("1,2\n3,x\n");
  EXPECT_THROW(parse_csv_matrix(junk), Error);
  std::istringstream empty("");
  EXPECT_THROW(parse_csv_matrix(empty), Error);
  EXPECT_THROW(read_matrix("/nonexistent/kcot.csv"), Error);
}

TEST(MatrixIo, BinaryErrors) {
  const std::string good = encode_matrix(Matrix::Ones(2, 2), MatrixFormat::kBinary);
  std::istringstream truncated(good.substr(0, good.size() - 1), std::ios::binary);
  EXPECT_THROW(parse_binary_matrix(truncated), Error);
  std::istringstream trailing(good + "x", std::ios::binary);
  EXPECT_THROW(parse_binary_matrix(trailing), Error);
  std::istringstream header(good.substr(0, 10), std::ios::binary);
  EXPECT_THROW(parse_binary_matrix(header), Error);
  std::string huge = good;
  huge[7] = 0x7f;
  std::istringstream too_big(huge, std::ios::binary);
  EXPECT_THROW(parse_binary_matrix(too_big), Error);
}

}  // namespace
}  // namespace kcot
