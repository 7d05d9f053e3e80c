#pragma once

#include <cstddef>
#include <vector>

namespace hlte {

// Minimal row-major dense matrix; just enough for feature blocks and MLP I/O.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;  // row-major, rows*cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

}  // namespace hlte
