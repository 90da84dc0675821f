#pragma once

// Dense kernels shared by the detector, metrics and batch code. All arithmetic
// is done in double even though features are stored as float on disk.

#include <cstddef>
#include <span>
#include <vector>

namespace oodgate {

using Vector = std::vector<double>;

/// Row-major dense matrix. Entries are required to be finite.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Throws InvalidInput if any entry is NaN or infinite.
void require_finite(std::span<const double> v, const char* what);

/// log(sum(exp(v))) with max subtraction.
double logsumexp(std::span<const double> v);

/// softmax(v / tau).
Vector softmax(std::span<const double> v, double tau = 1.0);

/// Shannon entropy in nats; zero-probability terms contribute nothing.
double entropy(std::span<const double> p);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);

/// Cosine similarity. Defined as exactly 0 when either vector has zero norm.
double cosine(std::span<const double> u, std::span<const double> v);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Affine head: out[c] = sum_l W(l, c) * h[l] + b[c], with W of shape L x C.
Vector head_forward(const Matrix& W, std::span<const double> b, std::span<const double> h);
void head_forward_into(const Matrix& W, std::span<const double> b, std::span<const double> h,
                       std::span<double> out);

}  // namespace oodgate
