#include "kfac2l/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kfac2l::linalg {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vector kron_matvec(const Matrix& a, const Matrix& b, const Vector& x) {
  require(x.size() == a.cols() * b.cols(), ErrorCode::DimensionMismatch,
          "kron_matvec: x has length " + std::to_string(x.size()) + ", expected " +
              std::to_string(a.cols() * b.cols()));
  Eigen::Map<const Matrix> xm(x.data(), b.cols(), a.cols());
  Matrix y = b * xm * a.transpose();
  return Eigen::Map<const Vector>(y.data(), y.size());
}

SymEig sym_eig(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::DimensionMismatch,
          "sym_eig: matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  require(solver.info() == Eigen::Success, ErrorCode::Singular, "sym_eig: solver did not converge");
  SymEig out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.vectors.rows(); ++i) {
      double v = out.vectors(i, j);
      if (std::abs(v) > 1e-12) {
        if (v < 0) out.vectors.col(j) *= -1.0;
        break;
      }
    }
  }
  return out;
}

Vector solve_spd(const Matrix& a, const Vector& b, double jitter) {
  require(a.rows() == a.cols() && a.rows() == b.size(), ErrorCode::DimensionMismatch,
          "solve_spd: dimension mismatch");
  require(jitter >= 0.0, ErrorCode::DimensionMismatch, "solve_spd: negative jitter");
  const Eigen::Index n = a.rows();
  if (n == 0) return Vector();
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1.0);
  const double bnorm = b.norm();

  double current = jitter;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    if (attempt > 0) current = current > 0.0 ? current * 10.0 : 1e-12 * scale;
    Matrix shifted = a;
    shifted.diagonal().array() += current;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Vector x = llt.solve(b);
    if (!x.allFinite()) continue;
    double res = (shifted * x - b).norm();
    if (res <= 1e-8 * bnorm || (bnorm == 0.0 && res == 0.0)) return x;
  }
  throw Error(ErrorCode::Singular, "solve_spd: factorization failed after jitter escalation");
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix mat(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  require(v.size() == rows * cols, ErrorCode::DimensionMismatch, "mat: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

double relative_error(const Matrix& a, const Matrix& b) {
  double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

}  // namespace kfac2l::linalg
