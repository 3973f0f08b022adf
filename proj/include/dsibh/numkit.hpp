#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace dsibh::numkit {

/// Dense row-major matrix of doubles.
///
/// Entries are kept finite: every producing operation in this namespace
/// throws NumericError instead of returning NaN or infinity.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  /// Copies the listed rows, in order, into a new matrix.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix transposed() const;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b with a fixed i-k-j loop order, so results are bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

enum class Op { add, sub, mul, sigmoid, tanh, relu, exp, log };

/// Applies `op` entrywise. Binary tags (add, sub, mul) need `b` with the
/// same shape as `a`; unary tags ignore `b`.
Matrix elementwise(Op op, const Matrix& a, const Matrix* b = nullptr);
inline Matrix elementwise(Op op, const Matrix& a, const Matrix& b) { return elementwise(op, a, &b); }

Matrix scaled(const Matrix& a, double s);
double sum(const Matrix& a);
double frobenius_sq(const Matrix& a);

/// Overflow-safe log(1 + e^x).
double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

/// Value of a scalar function together with its analytic gradient.
struct ValueGrad {
  double value = 0.0;
  Matrix grad;
};

using DifferentiableFn = std::function<ValueGrad(const Matrix&)>;

/// Largest entrywise |analytic - central difference| / max(1, |central difference|).
double grad_check(const DifferentiableFn& f, const Matrix& x, double h = 1e-4);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> symmetric_eigenvalues(const Matrix& a, double tol = 1e-14,
                                          int max_sweeps = 100);

/// Portable seeded generator. The distributions are written out here rather
/// than taken from <random>, whose algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dsibh::numkit
