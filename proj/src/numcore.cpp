#include "oodgate/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oodgate/error.hpp"

namespace oodgate {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  require_finite({&fill, 1}, "matrix fill");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw Error(ErrorCode::InvalidDimension,
                "matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) + " given " +
                    std::to_string(values_.size()) + " values");
  }
  require_finite(values_, "matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidInput, std::string(what) + " has a non-finite entry");
  }
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidDimension, "logsumexp of empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

Vector softmax(std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidParameter, "softmax temperature must be > 0");
  if (v.empty()) throw Error(ErrorCode::InvalidDimension, "softmax of empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - m) / tau);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::InvalidDimension, "dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::InvalidDimension, "cosine length mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidDimension, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void head_forward_into(const Matrix& W, std::span<const double> b, std::span<const double> h,
                       std::span<double> out) {
  const std::size_t L = W.rows();
  const std::size_t C = W.cols();
  if (h.size() != L || b.size() != C || out.size() != C) {
    throw Error(ErrorCode::InvalidDimension, "head_forward: W is " + std::to_string(L) + "x" +
                                                 std::to_string(C) + ", h has " + std::to_string(h.size()) +
                                                 ", b has " + std::to_string(b.size()));
  }
  std::copy(b.begin(), b.end(), out.begin());
  for (std::size_t l = 0; l < L; ++l) {
    const double hl = h[l];
    if (hl == 0.0) continue;
    const auto w = W.row(l);
    for (std::size_t c = 0; c < C; ++c) out[c] += w[c] * hl;
  }
}

Vector head_forward(const Matrix& W, std::span<const double> b, std::span<const double> h) {
  Vector out(W.cols());
  head_forward_into(W, b, h, out);
  return out;
}

}  // namespace oodgate
