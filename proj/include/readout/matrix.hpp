#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace readout {

/// Small dense row-major matrix. Probability matrices throughout the library
/// are column-stochastic: entry (i, j) is the probability of destination or
/// output i given source state j, and every column sums to 1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return a[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return a[static_cast<std::size_t>(r) * cols + c];
  }

  const double* row(int r) const {
    return a.data() + static_cast<std::size_t>(r) * cols;
  }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double col_sum(int c) const {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += (*this)(r, c);
    return s;
  }

  friend Matrix operator*(const Matrix& x, const Matrix& y) {
    assert(x.cols == y.rows);
    Matrix z(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
      for (int k = 0; k < x.cols; ++k) {
        const double v = x(i, k);
        if (v == 0.0) continue;
        for (int j = 0; j < y.cols; ++j) z(i, j) += v * y(k, j);
      }
    return z;
  }
};

/// Kahan compensated accumulator; enumeration sums use it so results are
/// reproducible at ~1e-16 across platforms.
struct KahanSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

}  // namespace readout
