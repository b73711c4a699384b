#include "opendg/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "opendg/errors.hpp"

namespace opendg {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  m.rows = rows.size();
  m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rows) {
    if (r.size() != m.cols) {
      throw ShapeError("Matrix::from_rows: ragged initializer");
    }
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols) +
                     " and " + std::to_string(b.rows) + " do not match");
  }
  Matrix out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) {
        orow[j] += aik * brow[j];
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) {
      out.at(j, i) = a.at(i, j);
    }
  }
  return out;
}

void add_scaled(Matrix& a, const Matrix& b, double scale) {
  if (!a.same_shape(b)) {
    throw ShapeError("add_scaled: shape mismatch");
  }
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] += scale * b.data[i];
  }
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const double* in = logits.row_ptr(i);
    double* o = out.row_ptr(i);
    double mx = in[0];
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < logits.cols; ++j) o[j] /= sum;
  }
  return out;
}

namespace {

void check_row_stochastic(const Matrix& m, const char* name) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) sum += m.at(i, j);
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ContractError(std::string("soft_cross_entropy: ") + name +
                          " row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
    }
  }
}

}  // namespace

double soft_cross_entropy(const Matrix& pred_probs, const Matrix& target_probs) {
  if (!pred_probs.same_shape(target_probs)) {
    throw ShapeError("soft_cross_entropy: shape mismatch");
  }
  if (pred_probs.rows == 0) {
    throw ShapeError("soft_cross_entropy: empty input");
  }
  check_row_stochastic(pred_probs, "pred");
  check_row_stochastic(target_probs, "target");
  double total = 0.0;
  for (std::size_t i = 0; i < pred_probs.rows; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < pred_probs.cols; ++j) {
      const double t = target_probs.at(i, j);
      if (t != 0.0) {
        row -= t * std::log(pred_probs.at(i, j) + kLogEps);
      }
    }
    total += row;
  }
  return total / static_cast<double>(pred_probs.rows);
}

Matrix soft_cross_entropy_logit_grad(const Matrix& probs, const Matrix& target_probs) {
  if (!probs.same_shape(target_probs)) {
    throw ShapeError("soft_cross_entropy_logit_grad: shape mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(probs.rows);
  Matrix grad(probs.rows, probs.cols);
  // With L = -sum_k t_k log(p_k + eps) and p = softmax(z):
  //   dL/dz_j = p_j * sum_k c_k - c_j,  c_k = t_k * p_k / (p_k + eps).
  // As eps -> 0 this is the familiar p - t.
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double csum = 0.0;
    for (std::size_t j = 0; j < probs.cols; ++j) {
      const double p = probs.at(i, j);
      const double c = target_probs.at(i, j) * p / (p + kLogEps);
      grad.at(i, j) = -c;
      csum += c;
    }
    for (std::size_t j = 0; j < probs.cols; ++j) {
      grad.at(i, j) = (grad.at(i, j) + probs.at(i, j) * csum) * inv_n;
    }
  }
  return grad;
}

}  // namespace opendg
