#include <cstring>
#include <sstream>
#include <string>

#include <Eigen/Core>

#include "doctest.h"
#include "textmania/binio.hpp"
#include "textmania/errors.hpp"

using namespace textmania;

TEST_CASE("write_le emits little-endian bytes regardless of host") {
  std::ostringstream os;
  binio::write_le<uint32_t>(os, 0x01020304u);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 4);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x04);
  CHECK(static_cast<unsigned char>(bytes[1]) == 0x03);
  CHECK(static_cast<unsigned char>(bytes[2]) == 0x02);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x01);
}

TEST_CASE("float payloads use the IEEE-754 little-endian layout") {
  std::ostringstream os;
  binio::write_le<float>(os, 1.0f);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 4);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[1]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[2]) == 0x80);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x3f);
}

TEST_CASE("scalar round trips are bitwise") {
  std::stringstream ss;
  binio::write_le<uint16_t>(ss, 0xbeef);
  binio::write_le<uint64_t>(ss, 0x0123456789abcdefULL);
  binio::write_le<float>(ss, -0.0f);
  binio::write_le<double>(ss, 1e-300);
  CHECK(binio::read_le<uint16_t>(ss, "u16") == 0xbeef);
  CHECK(binio::read_le<uint64_t>(ss, "u64") == 0x0123456789abcdefULL);
  float f = binio::read_le<float>(ss, "float");
  CHECK(std::signbit(f));
  CHECK(f == 0.0f);
  CHECK(binio::read_le<double>(ss, "double") == 1e-300);
}

TEST_CASE("truncated scalar read names the field") {
  std::stringstream ss;
  binio::write_le<uint16_t>(ss, 7);
  CHECK_THROWS_AS(binio::read_le<uint64_t>(ss, "header"), FormatError);
}

TEST_CASE("string round trip and guards") {
  std::stringstream ss;
  binio::write_string(ss, "hello world");
  binio::write_string(ss, "");
  CHECK(binio::read_string(ss, "first") == "hello world");
  CHECK(binio::read_string(ss, "second") == "");

  std::stringstream truncated;
  binio::write_le<uint32_t>(truncated, 100);
  truncated << "short";
  CHECK_THROWS_AS(binio::read_string(truncated, "s"), FormatError);

  std::stringstream huge;
  binio::write_le<uint32_t>(huge, 0xffffffffu);
  CHECK_THROWS_AS(binio::read_string(huge, "s"), FormatError);
}

TEST_CASE("matrix payload is row-major float32") {
  Eigen::MatrixXf m(2, 2);
  m << 1.0f, 2.0f, 3.0f, 4.0f;
  std::ostringstream os;
  binio::write_matrix_payload(os, m);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 16);
  float vals[4];
  std::memcpy(vals, bytes.data(), 16);
  CHECK(vals[0] == 1.0f);
  CHECK(vals[1] == 2.0f);  // row-major: row 0 first
  CHECK(vals[2] == 3.0f);
  CHECK(vals[3] == 4.0f);
}

TEST_CASE("matrix payload round trips bitwise") {
  Eigen::MatrixXf m(3, 5);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) m(r, c) = -1.5f + 0.37f * (5 * r + c);
  m(1, 1) = -0.0f;
  m(2, 4) = 1e-38f;

  std::stringstream ss;
  binio::write_matrix_payload(ss, m);
  Eigen::MatrixXf back = binio::read_matrix_payload(ss, 3, 5, "m");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      uint32_t a, b;
      float fa = m(r, c), fb = back(r, c);
      std::memcpy(&a, &fa, 4);
      std::memcpy(&b, &fb, 4);
      CHECK(a == b);
    }
}

TEST_CASE("short matrix payload reports the expected shape") {
  std::stringstream ss;
  binio::write_le<float>(ss, 1.0f);
  CHECK_THROWS_AS(binio::read_matrix_payload(ss, 2, 2, "m"), FormatError);
}
