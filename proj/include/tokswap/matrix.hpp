#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tokswap/common.hpp"

namespace tokswap {

// Dense row-major matrix. Values are held in the scalar type T; files always
// store 32-bit little-endian floats.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{})
      : rows(r), cols(c), data(r * c, fill) {}

  T* row(std::size_t i) { return data.data() + i * cols; }
  const T* row(std::size_t i) const { return data.data() + i * cols; }
  T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

namespace detail {

inline void put_le32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// Binary format: one ASCII header line "rows cols\n" followed by rows*cols
// little-endian IEEE-754 binary32 values in row-major order.
template <typename T>
void save_matrix(const std::filesystem::path& path, const Matrix<T>& m) {
  std::string out;
  out.reserve(32 + m.data.size() * 4);
  out += std::to_string(m.rows) + " " + std::to_string(m.cols) + "\n";
  for (T v : m.data)
    detail::put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file_atomic(path, out);
}

template <typename T>
Matrix<T> load_matrix(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  std::size_t nl = blob.find('\n');
  if (nl == std::string::npos) fail("malformed matrix file: missing header");
  std::istringstream header(blob.substr(0, nl));
  std::size_t rows = 0, cols = 0;
  if (!(header >> rows >> cols)) fail("malformed matrix file: bad header");
  std::size_t need = rows * cols * 4;
  if (blob.size() - nl - 1 != need) fail("malformed matrix file: size mismatch");
  Matrix<T> m(rows, cols);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + nl + 1);
  for (std::size_t i = 0; i < rows * cols; ++i, p += 4)
    m.data[i] = static_cast<T>(std::bit_cast<float>(detail::get_le32(p)));
  return m;
}

// Text variant used in tests and for manual inspection: the same header then
// one whitespace-separated row per line, round-trip exact for binary32.
template <typename T>
void save_matrix_text(const std::filesystem::path& path, const Matrix<T>& m) {
  std::ostringstream out;
  out << m.rows << " " << m.cols << "\n";
  out.precision(9);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) out << " ";
      out << static_cast<float>(m.at(i, j));
    }
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

template <typename T>
Matrix<T> load_matrix_text(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols)) fail("malformed matrix file: bad header");
  Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    float v;
    if (!(in >> v)) fail("malformed matrix file: truncated values");
    m.data[i] = static_cast<T>(v);
  }
  return m;
}

}  // namespace tokswap
