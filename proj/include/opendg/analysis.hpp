#pragma once

#include <vector>

#include "opendg/matrix.hpp"

namespace opendg {

// Gaussian fit of one domain's features.
struct DomainStats {
  std::vector<double> mean;
  Matrix covariance;  // symmetric PSD, feature_dim x feature_dim
  std::size_t n = 0;
};

// Sample mean and unbiased sample covariance; needs at least 2 rows.
DomainStats fit_stats(const Matrix& features);

struct SymmetricEigen {
  Matrix vectors;              // columns are eigenvectors
  std::vector<double> values;  // matching eigenvalues, unordered
};

// Cyclic Jacobi rotations; converges when the off-diagonal Frobenius norm
// drops below tol * ||A||_F, capped at max_sweeps sweeps. Fine for the
// small feature dimensions used here.
SymmetricEigen jacobi_eigen(const Matrix& sym, double tol = 1e-12,
                            int max_sweeps = 100);

// Symmetric PSD square root; eigenvalues are clamped at 0 before rooting.
Matrix sqrt_psd(const Matrix& sym);

// Squared Frechet distance between Gaussian fits:
//   d^2 = |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sb^1/2 Sa Sb^1/2)^1/2),
// clamped at 0 for small negative slack, NumericError beyond -1e-6.
double frechet_distance(const DomainStats& a, const DomainStats& b);

}  // namespace opendg
