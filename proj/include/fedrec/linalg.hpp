#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedrec {

using Vec = std::vector<double>;

// Dense row-major matrix. Small and fixed-shape; all hot loops in the
// trainer go through the free functions below.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return a[r * cols + c];
  }
  std::size_t size() const { return a.size(); }
  void zero() { a.assign(a.size(), 0.0); }
};

// y = M x
inline void matvec(const Mat& m, const Vec& x, Vec& y) {
  if (x.size() != m.cols) throw std::invalid_argument("matvec: shape mismatch");
  y.assign(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.a.data() + r * m.cols;
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

// y += M^T x
inline void matvec_t_add(const Mat& m, const Vec& x, Vec& y) {
  if (x.size() != m.rows || y.size() != m.cols)
    throw std::invalid_argument("matvec_t_add: shape mismatch");
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = m.a.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += xr * row[c];
  }
}

// M += u v^T
inline void add_outer(Mat& m, const Vec& u, const Vec& v) {
  assert(u.size() == m.rows && v.size() == m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    double* row = m.a.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += ur * v[c];
  }
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace fedrec
