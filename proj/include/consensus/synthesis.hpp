#pragma once

// Gain synthesis for the consensus protocols.
//
// The LMI  A P + P A^T - 2 B B^T < 0  is solved through its Riccati form:
// with W = P^{-1}, left/right multiplication gives
//   A^T W + W A - 2 W B B^T W < 0,
// and the stabilizing solution of the equality version with a positive
// definite slack Qw yields  A P + P A^T - 2 B B^T = -P Qw P < 0.
// The shifted variant (A + eps/2 I) produces a Q for
//   A Q + Q A^T + eps Q - 2 B B^T < 0.

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/graph.hpp"
#include "consensus/linalg.hpp"

namespace consensus {

struct AgentDynamics {
  Matrix A;
  Matrix B;

  AgentDynamics() = default;
  AgentDynamics(Matrix a, Matrix b) : A(std::move(a)), B(std::move(b)) {
    if (A.rows() == 0 || A.rows() != A.cols())
      throw Error(ErrorKind::InvalidArgument, "A must be square and non-empty");
    if (B.rows() != A.rows() || B.cols() == 0)
      throw Error(ErrorKind::InvalidArgument, "B must have as many rows as A");
    if (!A.allFinite() || !B.allFinite())
      throw Error(ErrorKind::InvalidArgument, "dynamics contain non-finite entries");
  }

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index p() const { return B.cols(); }
};

/// Coupling gains at their minimal admissible values. Leaderless runs use c;
/// leader-follower runs use c1 (linear part) and c2 (leader-input rejection).
struct Coupling {
  bool leader_follower = false;
  double c = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;

  Coupling scaled(double multiplier) const {
    Coupling out = *this;
    out.c *= multiplier;
    out.c1 *= multiplier;
    out.c2 *= multiplier;
    return out;
  }
};

struct GainSet {
  Matrix P;  // Q in the disturbance-robust variant
  Matrix K;
  Matrix Gamma;
  double alpha = 0.0;
  Coupling coupling;
  std::optional<double> epsilon;
  double lmi_margin = 0.0;
};

struct LmiCheck {
  bool feasible = false;
  double margin = 0.0;
};

inline constexpr double kRankTol = 1e-9;
/// LMI margins weaker than this trigger the margin-maximizing fallback.
inline constexpr double kWeakLmiMargin = 1e-6;

namespace detail {

inline Eigen::Index numeric_rank(const Eigen::MatrixXcd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > kRankTol * s(0)) ++rank;
  return rank;
}

/// Hautus test restricted to eigenvalues with real part >= threshold.
inline bool hautus(const Matrix& a, const Matrix& b, double threshold) {
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, false);
  const Eigen::VectorXcd ev = es.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k).real() < threshold) continue;
    Eigen::MatrixXcd pencil(n, n + b.cols());
    pencil.leftCols(n) = a.cast<std::complex<double>>() -
                         ev(k) * Eigen::MatrixXcd::Identity(n, n);
    pencil.rightCols(b.cols()) = b.cast<std::complex<double>>();
    if (numeric_rank(pencil) < n) return false;
  }
  return true;
}

inline double max_real_part(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

inline Matrix riccati_residual(const Matrix& a, const Matrix& b, const Matrix& qw,
                               double r_scale, const Matrix& w) {
  return a.transpose() * w + w * a - r_scale * w * b * b.transpose() * w + qw;
}

inline bool residual_ok(const Matrix& a, const Matrix& b, const Matrix& qw, double r_scale,
                        const Matrix& w) {
  return riccati_residual(a, b, qw, r_scale, w).norm() <= 1e-8 * (1.0 + w.norm());
}

/// Stable invariant subspace of the Hamiltonian. Returns nullopt if the
/// eigenvalue split is not n/n or the eigenvector block is singular.
inline std::optional<Matrix> care_hamiltonian(const Matrix& a, const Matrix& b,
                                              const Matrix& qw, double r_scale,
                                              double* cond_out) {
  const Eigen::Index n = a.rows();
  Matrix h(2 * n, 2 * n);
  h << a, -r_scale * b * b.transpose(), -qw, -a.transpose();
  Eigen::EigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  std::vector<Eigen::Index> stable;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev(k).real() < 0.0) stable.push_back(k);
  if (static_cast<Eigen::Index>(stable.size()) != n) return std::nullopt;
  Eigen::MatrixXcd basis(2 * n, n);
  for (Eigen::Index k = 0; k < n; ++k) basis.col(k) = vecs.col(stable[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXcd u1 = basis.topRows(n);
  const Eigen::MatrixXcd u2 = basis.bottomRows(n);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(u1);
  const auto& s = svd.singularValues();
  const double cond = s(n - 1) > 0.0 ? s(0) / s(n - 1) : INFINITY;
  if (cond_out) *cond_out = cond;
  if (!std::isfinite(cond)) return std::nullopt;
  const Eigen::MatrixXcd w = u2 * u1.inverse();
  return linalg::symmetrize(w.real());
}

}  // namespace detail

inline bool is_stabilizable(const Matrix& a, const Matrix& b) {
  return detail::hautus(a, b, 0.0);
}

inline bool is_controllable(const Matrix& a, const Matrix& b) {
  return detail::hautus(a, b, -INFINITY);
}

/// Solves F^T X + X F = -C by the Kronecker form. Intended for the small
/// state dimensions used here.
inline Matrix solve_lyapunov(const Matrix& f, const Matrix& c) {
  const Eigen::Index n = f.rows();
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix op = linalg::kron(eye, f.transpose()) + linalg::kron(f.transpose(), eye);
  const Vector rhs = -Eigen::Map<const Vector>(c.data(), n * n);
  Eigen::FullPivLU<Matrix> lu(op);
  if (!lu.isInvertible())
    throw Error(ErrorKind::NumericalFailure, "Lyapunov operator is singular");
  const Vector x = lu.solve(rhs);
  return linalg::symmetrize(Eigen::Map<const Matrix>(x.data(), n, n));
}

namespace detail {

/// Newton-Kleinman iteration from a stabilizing W0.
inline std::optional<Matrix> newton_kleinman(const Matrix& a, const Matrix& b,
                                             const Matrix& qw, double r_scale, Matrix w,
                                             int max_iter = 50) {
  const Matrix bbt = b * b.transpose();
  for (int it = 0; it < max_iter; ++it) {
    if (residual_ok(a, b, qw, r_scale, w) && max_real_part(a - r_scale * bbt * w) < 0.0)
      return w;
    const Matrix f = a - r_scale * bbt * w;
    if (max_real_part(f) >= 0.0) return std::nullopt;
    w = solve_lyapunov(f, qw + r_scale * w * bbt * w);
    if (!w.allFinite()) return std::nullopt;
  }
  if (residual_ok(a, b, qw, r_scale, w)) return w;
  return std::nullopt;
}

/// Bass initialization: a W0 with A - r B B^T W0 Hurwitz, for controllable
/// (or at least stabilizable with well-conditioned shift) pairs.
inline std::optional<Matrix> bass_initial(const Matrix& a, const Matrix& b, double r_scale) {
  const Eigen::Index n = a.rows();
  const double shift = std::max(0.0, max_real_part(a)) + 1.0;
  const Matrix as = a + shift * Matrix::Identity(n, n);
  // as Z + Z as^T = 2 B B^T, i.e. F^T Z + Z F = -C with F = as^T.
  // Then (as - 2 B B^T Z^{-1}) Z + Z (.)^T = -2 B B^T certifies stability.
  Matrix z;
  try {
    z = solve_lyapunov(as.transpose(), -2.0 * b * b.transpose());
  } catch (const Error&) {
    return std::nullopt;
  }
  Eigen::LLT<Matrix> llt(z);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return linalg::symmetrize(2.0 * z.inverse() / r_scale);
}

}  // namespace detail

/// Stabilizing solution of A^T W + W A - r W B B^T W + Qw = 0.
inline Matrix solve_care(const Matrix& a, const Matrix& b, const Matrix& qw, double r_scale) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.cols() != n || b.rows() != n || qw.rows() != n || qw.cols() != n)
    throw Error(ErrorKind::InvalidArgument, "CARE dimension mismatch");
  if (!(r_scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_scale must be positive");
  if (!linalg::is_positive_definite(qw))
    throw Error(ErrorKind::InvalidArgument, "Qw must be symmetric positive definite");
  if (!is_stabilizable(a, b)) throw Error(ErrorKind::NotStabilizable, "(A,B) is not stabilizable");

  const Matrix bbt = b * b.transpose();
  double cond = INFINITY;
  std::optional<Matrix> w = detail::care_hamiltonian(a, b, qw, r_scale, &cond);
  if (w && cond <= 1e10 && detail::residual_ok(a, b, qw, r_scale, *w) &&
      detail::max_real_part(a - r_scale * bbt * *w) < 0.0) {
    return *w;
  }
  // Polish or replace an inaccurate eigenvector solution.
  if (w && w->allFinite() && detail::max_real_part(a - r_scale * bbt * *w) < 0.0) {
    if (auto refined = detail::newton_kleinman(a, b, qw, r_scale, *w)) return *refined;
  }
  if (auto w0 = detail::bass_initial(a, b, r_scale)) {
    if (auto refined = detail::newton_kleinman(a, b, qw, r_scale, *w0)) return *refined;
  }
  throw Error(ErrorKind::NumericalFailure, "Hamiltonian split and Newton-Kleinman both failed");
}

/// Largest eigenvalue of A P + P A^T (+ eps P) - 2 B B^T.
inline LmiCheck verify_lmi(const AgentDynamics& dyn, const Matrix& p,
                           std::optional<double> epsilon = std::nullopt) {
  Matrix lhs = dyn.A * p + p * dyn.A.transpose() - 2.0 * dyn.B * dyn.B.transpose();
  if (epsilon) lhs += *epsilon * p;
  LmiCheck out;
  out.margin = linalg::lambda_max(lhs);
  out.feasible = out.margin < 0.0 && linalg::is_positive_definite(p);
  return out;
}

namespace detail {

/// Stabilizing solution of A^T W + W A - W G W + Q = 0 for a symmetric,
/// possibly indefinite G. Requires a clean n/n split of the Hamiltonian
/// spectrum away from the imaginary axis and a positive definite W.
inline std::optional<Matrix> riccati_indefinite(const Matrix& a, const Matrix& g, const Matrix& q) {
  const Eigen::Index n = a.rows();
  Matrix h(2 * n, 2 * n);
  h << a, -g, -q, -a.transpose();
  Eigen::EigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXcd ev = es.eigenvalues();
  const double scale = 1.0 + h.norm();
  std::vector<Eigen::Index> stable;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k).real()) <= 1e-9 * scale) return std::nullopt;
    if (ev(k).real() < 0.0) stable.push_back(k);
  }
  if (static_cast<Eigen::Index>(stable.size()) != n) return std::nullopt;
  Eigen::MatrixXcd basis(2 * n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    basis.col(k) = es.eigenvectors().col(stable[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXcd u1 = basis.topRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(u1);
  if (!lu.isInvertible()) return std::nullopt;
  const Matrix w = linalg::symmetrize((basis.bottomRows(n) * lu.inverse()).real());
  if (!w.allFinite() || !linalg::is_positive_definite(w)) return std::nullopt;
  const Matrix res = a.transpose() * w + w * a - w * g * w + q;
  if (res.norm() > 1e-8 * (1.0 + w.norm() * w.norm())) return std::nullopt;
  return w;
}

/// P with A P + P A^T - 2 B B^T <= -mu I for mu near half the largest value
/// the bisection certifies: with G = 2 B B^T - mu I and P = W^{-1}, the
/// Riccati equation gives A P + P A^T - 2 B B^T = -mu I - P Q P.
inline std::optional<Matrix> max_margin_lmi(const AgentDynamics& dyn) {
  const Eigen::Index n = dyn.n();
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix bbt2 = 2.0 * dyn.B * dyn.B.transpose();
  auto solve_at = [&](double mu) -> std::optional<Matrix> {
    const auto w = riccati_indefinite(dyn.A, bbt2 - mu * eye, mu * eye);
    if (!w) return std::nullopt;
    return linalg::symmetrize(w->inverse());
  };
  double lo = 0.0, hi = std::max(1.0, linalg::lambda_max(bbt2));
  if (solve_at(hi)) {
    lo = hi;
  } else {
    for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (solve_at(mid)) lo = mid;
      else hi = mid;
    }
  }
  if (!(lo > 0.0)) return std::nullopt;
  for (double mu = 0.5 * lo; mu > 1e-6 * lo; mu *= 0.5) {
    if (auto p = solve_at(mu)) return p;
  }
  return std::nullopt;
}

}  // namespace detail

/// P = W^{-1} from the CARE with Qw = I. When that P only satisfies the LMI
/// with a margin weaker than kWeakLmiMargin, a margin-maximizing solution is
/// used instead if it does better.
inline Matrix solve_consensus_lmi(const AgentDynamics& dyn) {
  const Matrix w = solve_care(dyn.A, dyn.B, Matrix::Identity(dyn.n(), dyn.n()), 2.0);
  Matrix p = linalg::symmetrize(w.inverse());
  LmiCheck check = verify_lmi(dyn, p);
  if (check.margin > -kWeakLmiMargin) {
    if (auto better = detail::max_margin_lmi(dyn)) {
      const LmiCheck alt = verify_lmi(dyn, *better);
      if (alt.feasible && alt.margin < check.margin) {
        p = *better;
        check = alt;
      }
    }
  }
  if (!check.feasible)
    throw Error(ErrorKind::FeasibilityCheckFailed,
                "post-check margin " + std::to_string(check.margin));
  return p;
}

/// Q for the shifted LMI with eps > 1.
inline Matrix solve_consensus_lmi_eps(const AgentDynamics& dyn, double epsilon) {
  if (!(epsilon > 1.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must exceed 1");
  const Matrix shifted = dyn.A + 0.5 * epsilon * Matrix::Identity(dyn.n(), dyn.n());
  if (!is_stabilizable(shifted, dyn.B))
    throw Error(ErrorKind::NotControllable,
                "(A + eps/2 I, B) is not stabilizable; (A,B) is not controllable");
  const Matrix w = solve_care(shifted, dyn.B, Matrix::Identity(dyn.n(), dyn.n()), 2.0);
  const Matrix q = linalg::symmetrize(w.inverse());
  const LmiCheck check = verify_lmi(dyn, q, epsilon);
  if (!check.feasible)
    throw Error(ErrorKind::FeasibilityCheckFailed,
                "post-check margin " + std::to_string(check.margin));
  return q;
}

/// K = -B^T P^{-1}.
inline Matrix feedback_gain(const Matrix& p, const Matrix& b) {
  if (!linalg::is_positive_definite(p))
    throw Error(ErrorKind::SingularP, "P is not symmetric positive definite");
  const Vector ev = linalg::sym_eigenvalues(p);
  if (ev.maxCoeff() / ev.minCoeff() > 1e12)
    throw Error(ErrorKind::SingularP, "P condition number exceeds 1e12");
  return -(b.transpose() * linalg::symmetrize(p).llt().solve(Matrix::Identity(p.rows(), p.cols())));
}

inline Matrix gamma_from_gain(const Matrix& k) { return k.transpose() * k; }

inline double convergence_rate_alpha(const AgentDynamics& dyn, const Matrix& p) {
  const LmiCheck check = verify_lmi(dyn, p);
  if (check.margin >= 0.0)
    throw Error(ErrorKind::InfeasibleP, "LMI not satisfied, margin " + std::to_string(check.margin));
  return -check.margin / linalg::lambda_max(p);
}

inline Coupling leaderless_coupling(double lambda2) {
  if (!(lambda2 > kZeroEigenTol))
    throw Error(ErrorKind::DisconnectedGraph, "lambda2 is zero; graph is disconnected");
  Coupling out;
  out.c = 1.0 / lambda2;
  return out;
}

inline Coupling leader_follower_coupling(double lambda_min_l1, double gamma) {
  if (!(lambda_min_l1 > kZeroEigenTol))
    throw Error(ErrorKind::DisconnectedGraph, "pinned Laplacian is singular");
  if (gamma < 0.0) throw Error(ErrorKind::InvalidArgument, "gamma must be nonnegative");
  Coupling out;
  out.leader_follower = true;
  out.c1 = 1.0 / lambda_min_l1;
  out.c2 = gamma;
  return out;
}

/// Structural identity Gamma == K^T K, entrywise within tol.
inline bool gamma_matches_gain(const Matrix& k, const Matrix& gamma, double tol) {
  const Matrix expected = gamma_from_gain(k);
  if (expected.rows() != gamma.rows() || expected.cols() != gamma.cols()) return false;
  return (expected - gamma).cwiseAbs().maxCoeff() <= tol;
}

/// P (or Q), K, Gamma and alpha; coupling gains are left for the caller.
inline GainSet synthesize_gains(const AgentDynamics& dyn,
                                std::optional<double> epsilon = std::nullopt) {
  GainSet g;
  g.epsilon = epsilon;
  g.P = epsilon ? solve_consensus_lmi_eps(dyn, *epsilon) : solve_consensus_lmi(dyn);
  g.K = feedback_gain(g.P, dyn.B);
  g.Gamma = gamma_from_gain(g.K);
  g.alpha = convergence_rate_alpha(dyn, g.P);
  g.lmi_margin = verify_lmi(dyn, g.P, epsilon).margin;
  return g;
}

}  // namespace consensus
