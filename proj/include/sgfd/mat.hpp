#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sgfd {

using Vec = std::vector<double>;

// Row-major dense matrix. Plain loops everywhere: summation order is part of
// the contract (bit-exact identity tests, deterministic reductions).
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

// y = A x
inline Vec matvec(const Mat& A, const Vec& x) {
  if (x.size() != A.cols) throw std::invalid_argument("matvec: dimension mismatch");
  Vec y(A.rows, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A.at(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// y = A^T x
inline Vec matTvec(const Mat& A, const Vec& x) {
  if (x.size() != A.rows) throw std::invalid_argument("matTvec: dimension mismatch");
  Vec y(A.cols, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) y[j] += A.at(i, j) * x[i];
  return y;
}

inline double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace sgfd
