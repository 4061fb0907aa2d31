#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ssvep/matrix.hpp"

namespace ssvep {
namespace riem {

// Symmetric positive-definite channel covariance.
struct SpdMatrix {
  Matrix values;

  std::size_t dim() const { return values.rows; }
  // Throws unless symmetric (1e-10 relative) with all eigenvalues > 0.
  void validate() const;
};

struct TangentVector {
  std::vector<double> coords;  // length n(n+1)/2, off-diagonals scaled by sqrt(2)
};

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // columns, orthonormal
};

// Cyclic Jacobi iteration; runs until the off-diagonal Frobenius norm drops
// below 1e-12 * ||a||_F, at most 100 sweeps.
EigenDecomposition sym_eig(const Matrix& a);

// (X_c X_c^T)/(T-1) on row-centered data, blended toward (tr/n) I by
// `shrinkage`; the result is checked to be SPD.
SpdMatrix sample_covariance(const Matrix& x, double shrinkage = 1e-3);

enum class SpdFn { Log, Exp, Sqrt, InvSqrt };

// V f(diag) V^T through sym_eig.
Matrix spd_map(const SpdMatrix& a, SpdFn fn);

// Affine-invariant metric ||log(A^-1/2 B A^-1/2)||_F.
double riemann_distance(const SpdMatrix& a, const SpdMatrix& b);

// Frechet mean by fixed-point iteration, initialized at the arithmetic mean.
SpdMatrix geometric_mean(const std::vector<SpdMatrix>& ms, double tol = 1e-8,
                         std::size_t max_iter = 50);

// Projects c into the tangent space at `reference`; the Euclidean norm of the
// coordinates equals riemann_distance(c, reference).
TangentVector tangent_map(const SpdMatrix& c, const SpdMatrix& reference);

}  // namespace riem
}  // namespace ssvep
