#include "opendg/analysis.hpp"

#include <cmath>
#include <string>

#include "opendg/errors.hpp"

namespace opendg {

DomainStats fit_stats(const Matrix& features) {
  if (features.rows < 2) {
    throw DataError("fit_stats: need at least 2 rows, got " +
                    std::to_string(features.rows));
  }
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  DomainStats stats;
  stats.n = n;
  stats.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = features.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) stats.mean[j] += row[j];
  }
  for (auto& v : stats.mean) v /= static_cast<double>(n);

  stats.covariance = Matrix(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = features.row_ptr(i);
    for (std::size_t a = 0; a < d; ++a) {
      const double da = row[a] - stats.mean[a];
      for (std::size_t b = a; b < d; ++b) {
        stats.covariance.at(a, b) += da * (row[b] - stats.mean[b]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      stats.covariance.at(a, b) *= inv;
      stats.covariance.at(b, a) = stats.covariance.at(a, b);
    }
  }
  return stats;
}

SymmetricEigen jacobi_eigen(const Matrix& sym, double tol, int max_sweeps) {
  if (sym.rows != sym.cols) {
    throw ShapeError("jacobi_eigen: matrix must be square");
  }
  const std::size_t n = sym.rows;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(sym.at(i, j) - sym.at(j, i)) > 1e-10) {
        throw NumericError("jacobi_eigen: matrix is not symmetric");
      }
    }
  }
  Matrix a = sym;
  Matrix v = Matrix::identity(n);

  double frob = 0.0;
  for (double x : a.data) frob += x * x;
  frob = std::sqrt(frob);
  const double threshold = tol * (frob > 0.0 ? frob : 1.0);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a.at(i, j) * a.at(i, j);
    }
    if (std::sqrt(off) < threshold) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  SymmetricEigen eig;
  eig.vectors = std::move(v);
  eig.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) eig.values[i] = a.at(i, i);
  return eig;
}

Matrix sqrt_psd(const Matrix& sym) {
  const SymmetricEigen eig = jacobi_eigen(sym);
  const std::size_t n = sym.rows;
  Matrix root(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = std::sqrt(std::max(eig.values[k], 0.0));
    if (lam == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = eig.vectors.at(i, k) * lam;
      for (std::size_t j = 0; j < n; ++j) {
        root.at(i, j) += vik * eig.vectors.at(j, k);
      }
    }
  }
  return root;
}

double frechet_distance(const DomainStats& a, const DomainStats& b) {
  const std::size_t d = a.mean.size();
  if (b.mean.size() != d || a.covariance.rows != d || b.covariance.rows != d) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  auto check_psd = [](const DomainStats& s, const char* name) {
    const SymmetricEigen eig = jacobi_eigen(s.covariance);
    for (double lam : eig.values) {
      if (lam < -1e-6) {
        throw NumericError(std::string("frechet_distance: ") + name +
                           " covariance is not PSD (eigenvalue " +
                           std::to_string(lam) + ")");
      }
    }
  };
  check_psd(a, "first");
  check_psd(b, "second");

  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  double trace_a = 0.0, trace_b = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    trace_a += a.covariance.at(i, i);
    trace_b += b.covariance.at(i, i);
  }
  // Symmetric form: Tr((Sb^1/2 Sa Sb^1/2)^1/2) equals Tr((Sa Sb)^1/2)
  // but keeps the argument symmetric PSD.
  const Matrix rb = sqrt_psd(b.covariance);
  Matrix inner = matmul(matmul(rb, a.covariance), rb);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = v;
      inner.at(j, i) = v;
    }
  }
  const SymmetricEigen eig = jacobi_eigen(inner);
  double trace_root = 0.0;
  for (double lam : eig.values) trace_root += std::sqrt(std::max(lam, 0.0));

  const double dist = mean_term + trace_a + trace_b - 2.0 * trace_root;
  if (dist < -1e-6) {
    throw NumericError("frechet_distance: negative distance " + std::to_string(dist));
  }
  return std::max(dist, 0.0);
}

}  // namespace opendg
