#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace opendg {

// Dense row-major matrix of 64-bit reals. Everything downstream (MLPs,
// mixup, ensembles, Frechet analysis) is built on this one type.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

// a (m x k) times b (k x n); throws ShapeError on inner-dim mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// a += scale * b (same shape required)
void add_scaled(Matrix& a, const Matrix& b, double scale = 1.0);

bool all_finite(const Matrix& m);

// Row-wise softmax with per-row max subtraction, so arbitrarily large
// logits do not overflow. Each output row sums to 1.
Matrix softmax_rows(const Matrix& logits);

// Mean over rows of -sum_k t^(k) * log(p^(k) + eps), eps = 1e-12.
// Both inputs must be row-stochastic and share a shape.
double soft_cross_entropy(const Matrix& pred_probs, const Matrix& target_probs);

// Gradient of soft_cross_entropy w.r.t. the logits that produced
// `probs` via softmax_rows, including the eps clamp term, divided by
// the row count (matching the mean in the loss).
Matrix soft_cross_entropy_logit_grad(const Matrix& probs, const Matrix& target_probs);

inline constexpr double kLogEps = 1e-12;

}  // namespace opendg
