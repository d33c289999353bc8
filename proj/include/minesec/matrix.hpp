#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace minesec {

// Dense row-major matrix of doubles. Shapes in this project are small
// (batches of a few hundred rows, widths up to a few hundred), so plain
// loops are all we need.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline std::string shape_string(const Matrix& m) {
  return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

// c = a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(a) + " * " +
                                shape_string(b));
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// c = a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw std::invalid_argument("matmul_nt: shape mismatch " + shape_string(a) + " * " +
                                shape_string(b) + "^T");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
  return c;
}

// c = a^T * b  with a: [k x r], b: [k x c]
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw std::invalid_argument("matmul_tn: shape mismatch " + shape_string(a) + "^T * " +
                                shape_string(b));
  Matrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw std::invalid_argument("concat_cols: row mismatch " + shape_string(a) + " | " +
                                shape_string(b));
  Matrix c(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* dst = c.row(r);
    const double* ra = a.row(r);
    const double* rb = b.row(r);
    for (std::size_t j = 0; j < a.cols; ++j) dst[j] = ra[j];
    for (std::size_t j = 0; j < b.cols; ++j) dst[a.cols + j] = rb[j];
  }
  return c;
}

inline std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) s[c] += row[c];
  }
  return s;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace minesec
