#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace consensus {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline double asymmetry(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double tol = 1e-9) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return asymmetry(m) <= tol * scale;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Ascending eigenvalues of the symmetric part of m.
inline Vector sym_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_max(const Matrix& m) { return sym_eigenvalues(m).maxCoeff(); }
inline double lambda_min(const Matrix& m) { return sym_eigenvalues(m).minCoeff(); }

inline bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols() || !is_symmetric(m, 1e-8)) return false;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  return llt.info() == Eigen::Success && lambda_min(m) > 0.0;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace linalg
}  // namespace consensus
