#pragma once

// Dense row-major matrices and vectors, symmetric eigendecomposition and
// the seeded random source shared by the rest of the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "amdn/error.hpp"

namespace amdn {

namespace detail {
inline void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite value");
  }
}
// Four independent partial sums let the compiler vectorize without
// reassociation flags; the summation order is still fixed.
inline double unrolled_dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}
}  // namespace detail

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {
    detail::require_finite(data_, "Vector");
  }
  explicit Vector(std::vector<double> data) : data_(std::move(data)) {
    detail::require_finite(data_, "Vector");
  }
  Vector(std::initializer_list<double> init) : data_(init) {
    detail::require_finite(data_, "Vector");
  }

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    detail::require_finite(data_, "Matrix");
  }
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    detail::require_finite(data_, "Matrix");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    detail::require_finite(data_, "Matrix");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double frobenius_squared(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

inline double trace(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("trace: matrix not square");
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, i);
  return s;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
}  // namespace detail

/// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b);
  return out;
}

/// a * b^T
inline Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_abt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  if (!out.empty() && a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b).transpose();
  return out;
}

/// a^T * b
inline Matrix matmul_atb(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_atb: inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  if (!out.empty() && a.rows() > 0) detail::view(out).noalias() = detail::view(a).transpose() * detail::view(b);
  return out;
}

inline Vector matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
  return out;
}

struct SymEig {
  Vector values;   ///< descending
  Matrix vectors;  ///< one unit eigenvector per row, matching `values`
};

/// Top-`top_d` eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
inline SymEig sym_eig(const Matrix& m, std::size_t top_d, int max_sweeps = 100) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw ShapeError("sym_eig: matrix not square");
  if (top_d < 1 || top_d > n) throw DomainError("sym_eig: top_d out of range");

  double scale = 1.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-9 * scale) throw DomainError("sym_eig: matrix not symmetric");

  // Work on the symmetrized copy so tiny asymmetries cannot bias the result.
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  Matrix v = Matrix::identity(n);

  const double total = frobenius_squared(a);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-32 * total || off == 0.0) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p);
            const double arq = a(r, q);
            a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
            a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
          }
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }
  if (!converged) throw ConvergenceError("sym_eig: Jacobi rotations did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymEig out{Vector(top_d), Matrix(top_d, n)};
  for (std::size_t k = 0; k < top_d; ++k) {
    const std::size_t col = order[k];
    out.values[k] = a(col, col);
    for (std::size_t r = 0; r < n; ++r) out.vectors(k, r) = v(r, col);
  }
  return out;
}

/// Seeded pseudo-random source. The mt19937_64 engine output is fully
/// specified by the standard and all derived draws are computed here rather
/// than through <random> distributions, so streams are bit-identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent child stream, a pure function of (seed, stream).
  Rng fork(std::uint64_t stream) const { return Rng(splitmix(seed_ ^ splitmix(stream + 0x9e3779b97f4a7c15ULL))); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::uniform_index: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal by the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Vector gaussian_sample(Rng& rng, std::size_t n, double mean, double variance) {
  if (!(variance >= 0.0)) throw DomainError("gaussian_sample: negative variance");
  Vector out(n, mean);
  if (variance == 0.0) return out;
  const double sd = std::sqrt(variance);
  for (std::size_t i = 0; i < n; ++i) out[i] = mean + sd * rng.normal();
  return out;
}

}  // namespace amdn
