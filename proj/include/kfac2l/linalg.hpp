#pragma once

#include <Eigen/Dense>

#include <cstddef>

#include "kfac2l/error.hpp"

namespace kfac2l {

/// Column-major dense matrix; vec() stacks its columns.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/** Symmetric eigendecomposition with ascending eigenvalues.
 *
 *  Each eigenvector column is sign-normalized so that its first entry with
 *  magnitude above 1e-12 is positive; this makes spectral coarse spaces
 *  reproducible across runs.
 */
struct SymEig {
  Vector values;
  Matrix vectors;
};

/// Kronecker product: block (i,j) of the result is a(i,j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

/** (A kron B) x computed as vec(B X A^T) with X = MAT(x) of shape
 *  cols(B) x cols(A). The Kronecker product is never formed. */
Vector kron_matvec(const Matrix& a, const Matrix& b, const Vector& x);

/// Eigendecomposition of (A + A^T)/2.
SymEig sym_eig(const Matrix& a);

/** Solves (A + jitter I) x = b by Cholesky.
 *
 *  If the factorization fails or the relative residual exceeds 1e-8, the
 *  jitter is escalated by a factor 10 (starting from 1e-12 * max|diag| when
 *  the requested jitter is zero) and the solve retried, at most three times.
 *  Throws Error(Singular) once the retries are exhausted.
 */
Vector solve_spd(const Matrix& a, const Vector& b, double jitter = 0.0);

/// Stacks the columns of m.
Vector vec(const Matrix& m);

/// Inverse of vec for a matrix with the given row count.
Matrix mat(const Vector& v, Eigen::Index rows, Eigen::Index cols);

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
double relative_error(const Matrix& a, const Matrix& b);

}  // namespace linalg
}  // namespace kfac2l
