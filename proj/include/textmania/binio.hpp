#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Core>

#include "textmania/errors.hpp"

namespace textmania::binio {

// Little-endian primitives. File formats in this project are defined
// little-endian regardless of host order.

template <typename T>
T byteswap_if_needed(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void write_le(std::ostream& os, T v) {
  v = byteswap_if_needed(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw FormatError(std::string("truncated file while reading ") + what +
                      " at offset " + std::to_string(is.tellg()));
  }
  return byteswap_if_needed(v);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what,
                               uint32_t max_len = 1u << 30) {
  auto n = read_le<uint32_t>(is, what);
  if (n > max_len) {
    throw FormatError(std::string("implausible length for ") + what + ": " +
                      std::to_string(n));
  }
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return s;
}

// Row-major float32 matrix payload, no framing: callers write dims first.
inline void write_matrix_payload(std::ostream& os,
                                 const Eigen::MatrixXf& m) {
  if constexpr (std::endian::native == std::endian::little) {
    using RowMajor =
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rm = m;
    os.write(reinterpret_cast<const char*>(rm.data()),
             static_cast<std::streamsize>(sizeof(float) * rm.size()));
  } else {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) write_le<float>(os, m(r, c));
  }
}

inline Eigen::MatrixXf read_matrix_payload(std::istream& is, Eigen::Index rows,
                                           Eigen::Index cols,
                                           const char* what) {
  using RowMajor =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm(rows, cols);
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(float) * rm.size()));
    if (!is) {
      throw FormatError(std::string("truncated matrix payload for ") + what +
                        " (wanted " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ")");
    }
  } else {
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        rm(r, c) = read_le<float>(is, what);
  }
  return rm;
}

}  // namespace textmania::binio
