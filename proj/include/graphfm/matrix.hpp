#pragma once

#include <cassert>
#include <vector>

#include "graphfm/common.hpp"

namespace graphfm {

// Dense row-major matrix of doubles. The only tensor shape in the framework
// is 2-D; vectors are n x 1 or 1 x n.
struct Matrix {
  i64 rows = 0;
  i64 cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(i64 r, i64 c, double fill = 0.0) : rows(r), cols(c), data(std::size_t(r * c), fill) {}

  double& at(i64 r, i64 c) { return data[std::size_t(r * cols + c)]; }
  double at(i64 r, i64 c) const { return data[std::size_t(r * cols + c)]; }
  double* row(i64 r) { return data.data() + r * cols; }
  const double* row(i64 r) const { return data.data() + r * cols; }
  i64 size() const { return rows * cols; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  static Matrix identity(i64 n) {
    Matrix m(n, n);
    for (i64 i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

// C = op(A) * op(B) with optional transposes.
inline Matrix matmul(const Matrix& a, const Matrix& b, bool ta = false, bool tb = false) {
  const i64 m = ta ? a.cols : a.rows;
  const i64 k = ta ? a.rows : a.cols;
  const i64 kb = tb ? b.cols : b.rows;
  const i64 n = tb ? b.rows : b.cols;
  if (k != kb) throw NumericError("matmul: inner dimension mismatch");
  Matrix c(m, n);
  if (!ta && !tb) {
    for (i64 i = 0; i < m; ++i) {
      double* ci = c.row(i);
      for (i64 p = 0; p < k; ++p) {
        const double aip = a.at(i, p);
        if (aip == 0.0) continue;
        const double* bp = b.row(p);
        for (i64 j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else if (ta && !tb) {
    for (i64 p = 0; p < k; ++p) {
      const double* ap = a.row(p);
      const double* bp = b.row(p);
      for (i64 i = 0; i < m; ++i) {
        const double api = ap[i];
        if (api == 0.0) continue;
        double* ci = c.row(i);
        for (i64 j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  } else if (!ta && tb) {
    for (i64 i = 0; i < m; ++i) {
      const double* ai = a.row(i);
      double* ci = c.row(i);
      for (i64 j = 0; j < n; ++j) {
        const double* bj = b.row(j);
        double s = 0.0;
        for (i64 p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] = s;
      }
    }
  } else {
    for (i64 p = 0; p < k; ++p) {
      const double* ap = a.row(p);
      for (i64 i = 0; i < m; ++i) {
        const double api = ap[i];
        if (api == 0.0) continue;
        double* ci = c.row(i);
        for (i64 j = 0; j < n; ++j) ci[j] += api * b.at(j, p);
      }
    }
  }
  return c;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace graphfm
