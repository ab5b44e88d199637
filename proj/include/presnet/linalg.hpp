#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "presnet/rng.hpp"

namespace presnet {

using Vec = std::vector<double>;

/// Thrown on any contract violation (bad dimensions, malformed files,
/// invalid configuration).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return a_.size(); }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return a_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return a_[i * cols_ + j];
  }

  double* data() noexcept { return a_.data(); }
  const double* data() const noexcept { return a_.data(); }
  double* row(std::size_t i) noexcept { return a_.data() + i * cols_; }
  const double* row(std::size_t i) const noexcept {
    return a_.data() + i * cols_;
  }

  bool operator==(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

/// result[i] = sum_j m(i,j) v[j]
inline Vec matvec(const Matrix& m, const Vec& v) {
  require(m.cols() == v.size(), "matvec: dimension mismatch");
  Vec out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* __restrict__ r = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += r[j] * v[j];
    out[i] = acc;
  }
  return out;
}

/// result[j] = sum_i m(i,j) v[i]
inline Vec matvec_transpose(const Matrix& m, const Vec& v) {
  require(m.rows() == v.size(), "matvec_transpose: dimension mismatch");
  Vec out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* __restrict__ r = m.row(i);
    const double vi = v[i];
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r[j] * vi;
  }
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double norm2(const Vec& v) noexcept {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline double norm_inf(const Vec& v) noexcept {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Root of the summed squared entries of a single matrix.
inline double frobenius_norm(const Matrix& m) noexcept {
  double acc = 0.0;
  const double* p = m.data();
  for (std::size_t k = 0; k < m.size(); ++k) acc += p[k] * p[k];
  return std::sqrt(acc);
}

/// Root of the summed squared entries over a non-empty sequence of matrices.
inline double frobenius_norm(const std::vector<Matrix>& ms) {
  require(!ms.empty(), "frobenius_norm: empty matrix sequence");
  double acc = 0.0;
  for (const Matrix& m : ms) {
    const double* p = m.data();
    for (std::size_t k = 0; k < m.size(); ++k) acc += p[k] * p[k];
  }
  return std::sqrt(acc);
}

/// Entries i.i.d. uniform on [-a, a], a = sqrt(6/(fan_in+fan_out)).
/// Result has fan_out rows and fan_in columns, drawn in row-major order,
/// so a fixed seed fully determines the matrix.
inline Matrix glorot_uniform_init(std::size_t fan_in, std::size_t fan_out,
                                  RngStream& rng) {
  require(fan_in >= 1 && fan_out >= 1, "glorot_uniform_init: fans must be >= 1");
  const double a =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_out, fan_in);
  double* p = w.data();
  for (std::size_t k = 0; k < w.size(); ++k) p[k] = rng.uniform(-a, a);
  return w;
}

}  // namespace presnet
