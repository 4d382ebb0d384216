#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/graph.hpp"
#include "consensus/linalg.hpp"
#include "consensus/simulation.hpp"

namespace consensus {

enum class BoundId { D1, D2, D3, D4, D5, D6, D7, D8, D9 };

constexpr std::string_view to_string(BoundId id) {
  constexpr std::string_view names[] = {"D1", "D2", "D3", "D4", "D5", "D6", "D7", "D8", "D9"};
  return names[static_cast<int>(id)];
}

inline BoundId bound_id_from_string(std::string_view name) {
  for (int i = 0; i < 9; ++i) {
    const auto id = static_cast<BoundId>(i);
    if (to_string(id) == name) return id;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown bound id '" + std::string(name) + "'");
}

/// Sets bounding V rather than ||xi||^2.
constexpr bool is_level_set(BoundId id) {
  return id == BoundId::D2 || id == BoundId::D5 || id == BoundId::D8;
}

constexpr bool is_leader_follower_bound(BoundId id) {
  return id == BoundId::D4 || id == BoundId::D5 || id == BoundId::D6;
}

/// Default verdict tolerances.
inline constexpr double kEnvelopeTolRel = 0.02;
inline constexpr double kEnvelopeTolAbs = 1e-9;
inline constexpr double kBoundTolRel = 0.02;
inline constexpr double kSettleFraction = 0.2;

// ---------------------------------------------------------------------------
// Consensus errors

/// xi = (M kron I_n) x.
inline Vector consensus_error(const Vector& x, Eigen::Index n) {
  if (n <= 0 || x.size() % n != 0)
    throw Error(ErrorKind::InvalidArgument, "stacked state length is not a multiple of n");
  const Eigen::Index n_agents = x.size() / n;
  const Matrix m = centering_projector(static_cast<std::size_t>(n_agents));
  return linalg::kron(m, Matrix::Identity(n, n)) * x;
}

/// zeta_i = x_i - x0.
inline Vector lf_consensus_error(const Vector& x, const Vector& x0) {
  const Eigen::Index n = x0.size();
  if (n == 0 || x.size() % n != 0)
    throw Error(ErrorKind::InvalidArgument, "stacked state length is not a multiple of n");
  Vector zeta = x;
  for (Eigen::Index i = 0; i < x.size() / n; ++i) zeta.segment(i * n, n) -= x0;
  return zeta;
}

/// 1/2 e^T (L kron P^{-1}) e, for any symmetric weighting L (Laplacian or
/// pinned block).
inline double quadratic_energy(const Vector& e, const Matrix& l, const Matrix& p) {
  const Eigen::Index n = p.rows();
  const Matrix p_inv = linalg::symmetrize(p).llt().solve(Matrix::Identity(n, n));
  const Eigen::Index n_agents = l.rows();
  if (e.size() != n_agents * n) throw Error(ErrorKind::InvalidArgument, "error vector size mismatch");
  double v = 0.0;
  for (Eigen::Index i = 0; i < n_agents; ++i) {
    const Vector pe = p_inv * e.segment(i * n, n);
    for (Eigen::Index j = 0; j < n_agents; ++j) {
      if (l(i, j) != 0.0) v += l(i, j) * e.segment(j * n, n).dot(pe);
    }
  }
  return 0.5 * v;
}

inline double lyapunov_v1(const Vector& xi, const Matrix& l, const Matrix& p) {
  return quadratic_energy(xi, l, p);
}

/// Adaptive-gain part sum (d_bar - beta)^2 / 2 tau + (e_bar - e)^2 / 2 eps.
inline double adaptive_energy(const AdaptiveState& gains, double beta, const Vector& e_true,
                              const Vector& tau, const Vector& eps_rates) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < gains.d_bar.size(); ++i) {
    const double dt = gains.d_bar(i) - beta;
    const double et = gains.e_bar(i) - e_true(i);
    v += dt * dt / (2.0 * tau(i)) + et * et / (2.0 * eps_rates(i));
  }
  return v;
}

inline double lyapunov_v2(const Vector& xi, const Matrix& l, const Matrix& p,
                          const AdaptiveState& gains, double beta, const Vector& e_true,
                          const Vector& tau, const Vector& eps_rates) {
  return lyapunov_v1(xi, l, p) + adaptive_energy(gains, beta, e_true, tau, eps_rates);
}

// ---------------------------------------------------------------------------
// Residual sets

struct AnalysisConstants {
  double beta = 0.0;
  double beta_hat = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double varrho = 0.0;
  double sigma = 0.0;
  std::optional<double> epsilon;
};

/// beta and beta_hat are taken at their lower limits.
/// graph_eig is lambda2 (leaderless) or lambda_min(L1) (leader-follower).
inline AnalysisConstants analysis_constants(const Vector& d, double graph_eig, double gamma,
                                            double alpha, const ProtocolConfig& cfg,
                                            std::optional<double> epsilon = std::nullopt) {
  if (!(graph_eig > 0.0))
    throw Error(ErrorKind::PreconditionViolated, "graph eigenvalue must be positive");
  AnalysisConstants c;
  const double d_max = d.size() > 0 ? d.maxCoeff() : 0.0;
  c.beta = std::max(d_max, 1.0 / graph_eig);
  c.beta_hat = std::max(d_max + gamma, 1.0 / graph_eig);
  c.alpha = alpha;
  c.epsilon = epsilon;
  c.delta = alpha;
  c.varrho = 0.0;
  c.sigma = epsilon ? *epsilon - 1.0 : std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cfg.tau.size(); ++i) {
    const double ft = cfg.phi(i) * cfg.tau(i);
    const double pe = cfg.psi(i) * cfg.eps_rates(i);
    c.delta = std::min({c.delta, ft, pe});
    c.varrho = std::max({c.varrho, ft, pe});
    c.sigma = std::min({c.sigma, ft, pe});
  }
  return c;
}

/// Everything the D1..D9 formulas consume. Unused fields may stay at their
/// defaults for a given id.
struct BoundInputs {
  std::size_t n_agents = 0;
  double kappa = 0.0;
  double lambda_max_p = 0.0;  // P, or Q for D7..D9
  double lambda_min_p = 0.0;
  double alpha = 0.0;
  double graph_eig = 0.0;     // lambda2, or lambda_min(L1) for D4..D6
  double lambda_max_l = 0.0;
  double beta = 0.0;          // beta, or beta_hat for D5/D6
  double delta = 0.0;
  double varrho = 0.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  Vector phi;
  Vector psi;
  Vector e;
  Vector upsilon;
};

namespace detail {

inline double leak_sum(const BoundInputs& in) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < in.phi.size(); ++i)
    s += in.beta * in.beta * in.phi(i) + in.e(i) * in.e(i) * in.psi(i);
  return s;
}

inline void require(bool cond, const char* what) {
  if (!cond) throw Error(ErrorKind::PreconditionViolated, what);
}

}  // namespace detail

inline double residual_bound(BoundId id, const BoundInputs& in) {
  using detail::require;
  const double n_agents = static_cast<double>(in.n_agents);
  const double nk = n_agents * in.kappa;
  const double ups2 = in.upsilon.size() > 0 ? in.upsilon.squaredNorm() : 0.0;
  switch (id) {
    case BoundId::D1:
    case BoundId::D4:
      require(in.alpha > 0.0 && in.graph_eig > 0.0, "alpha and graph eigenvalue must be positive");
      return 2.0 * in.lambda_max_p * nk / (in.alpha * in.graph_eig);
    case BoundId::D2:
    case BoundId::D5:
      require(in.delta > 0.0, "delta must be positive");
      return detail::leak_sum(in) / (2.0 * in.delta) + nk / (4.0 * in.delta);
    case BoundId::D3:
    case BoundId::D6:
      require(in.varrho < in.alpha, "requires varrho < alpha");
      require(in.graph_eig > 0.0, "graph eigenvalue must be positive");
      return in.lambda_max_p / (in.graph_eig * (in.alpha - in.varrho)) *
             (detail::leak_sum(in) + 0.5 * nk);
    case BoundId::D7:
      require(in.epsilon > 1.0, "requires epsilon > 1");
      require(in.graph_eig > 0.0 && in.lambda_min_p > 0.0, "spectral inputs must be positive");
      return 2.0 * in.lambda_max_p / ((in.epsilon - 1.0) * in.graph_eig) *
             (in.lambda_max_l / (2.0 * in.lambda_min_p) * ups2 + nk);
    case BoundId::D8:
      require(in.sigma > 0.0 && in.lambda_min_p > 0.0, "sigma and lambda_min(Q) must be positive");
      return detail::leak_sum(in) / (2.0 * in.sigma) +
             in.lambda_max_l / (2.0 * in.sigma * in.lambda_min_p) * ups2 + nk / (4.0 * in.sigma);
    case BoundId::D9:
      require(in.epsilon - 1.0 > in.varrho, "requires varrho < epsilon - 1");
      require(in.graph_eig > 0.0 && in.lambda_min_p > 0.0, "spectral inputs must be positive");
      return in.lambda_max_p / (in.graph_eig * (in.epsilon - 1.0 - in.varrho)) *
             (detail::leak_sum(in) + in.lambda_max_l / in.lambda_min_p * ups2 + 0.5 * nk);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown bound id");
}

// ---------------------------------------------------------------------------
// Verdicts

struct EnvelopeResult {
  bool ok = true;
  double max_violation = 0.0;
};

/// V(t) <= (V0 - offset) exp(-rate t) + offset + tol_abs + tol_rel V0 at
/// every sample.
inline EnvelopeResult envelope_check(const std::vector<double>& times,
                                     const std::vector<double>& v, double v0, double rate,
                                     double offset, double tol_rel = kEnvelopeTolRel,
                                     double tol_abs = kEnvelopeTolAbs) {
  if (times.size() != v.size()) throw Error(ErrorKind::InvalidArgument, "series length mismatch");
  if (!(rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "envelope rate must be positive");
  EnvelopeResult out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double envelope = (v0 - offset) * std::exp(-rate * times[k]) + offset;
    const double excess = v[k] - envelope;
    out.max_violation = std::max(out.max_violation, excess);
    if (excess > tol_abs + tol_rel * std::abs(v0)) out.ok = false;
  }
  return out;
}

struct ResidualReport {
  BoundId bound_id = BoundId::D1;
  double bound_value = 0.0;
  std::optional<double> entry_time;
  bool pass = false;
  bool envelope_ok = true;
  double max_violation = 0.0;
  std::string metric;  // "xi_norm_sq" or the Lyapunov level
};

/// Pass iff metric <= bound (1 + tol) on the final settle_fraction of the
/// horizon. entry_time is the first sample after which the condition holds
/// for the rest of the run.
inline ResidualReport uub_verdict(const std::vector<double>& times,
                                  const std::vector<double>& metric, double bound,
                                  double settle_fraction = kSettleFraction,
                                  double tol = kBoundTolRel) {
  if (times.size() != metric.size() || times.empty())
    throw Error(ErrorKind::InvalidArgument, "series must be non-empty and aligned");
  if (!(bound > 0.0)) throw Error(ErrorKind::InvalidArgument, "bound must be positive");
  if (!(settle_fraction > 0.0 && settle_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "settle_fraction must lie in (0, 1)");
  const double limit = bound * (1.0 + tol);
  ResidualReport r;
  r.bound_value = bound;
  const double t0 = times.front();
  const double t_end = times.back();
  const double settle_start = t_end - settle_fraction * (t_end - t0);
  r.pass = true;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] + 1e-12 < settle_start) continue;
    const double excess = metric[k] - limit;
    if (excess > 0.0) {
      r.pass = false;
      r.max_violation = std::max(r.max_violation, excess);
    }
  }
  std::optional<std::size_t> entry;
  for (std::size_t k = times.size(); k-- > 0;) {
    if (metric[k] > limit) break;
    entry = k;
  }
  if (entry) r.entry_time = times[*entry];
  return r;
}

// ---------------------------------------------------------------------------
// Trajectory-level verification

/// Spectral and gain quantities a verification needs, derived from the
/// scenario alone.
struct VerificationContext {
  Matrix weighting;  // L (leaderless) or L1 (leader-follower)
  double graph_eig = 0.0;
  double lambda_max_l = 0.0;
  AnalysisConstants constants;
  BoundInputs inputs;
};

inline VerificationContext verification_context(const Scenario& s, BoundId id) {
  const bool lf_bound = is_leader_follower_bound(id);
  if (lf_bound != s.has_leader())
    throw Error(ErrorKind::SchemaMismatch,
                std::string(to_string(id)) + " does not apply to this scenario's graph type");
  const bool eps_bound = id == BoundId::D7 || id == BoundId::D8 || id == BoundId::D9;
  const bool static_bound = id == BoundId::D1 || id == BoundId::D4 || id == BoundId::D7;
  if (static_bound == is_adaptive(s.protocol.kind))
    throw Error(ErrorKind::PreconditionViolated,
                std::string(to_string(id)) + " does not certify protocol " +
                    std::string(to_string(s.protocol.kind)));
  if (eps_bound && !s.gains.epsilon)
    throw Error(ErrorKind::PreconditionViolated,
                std::string(to_string(id)) + " needs gains from the shifted LMI (epsilon)");
  VerificationContext ctx;
  if (s.has_leader()) {
    const auto pinned = leader_follower_partition(std::get<LeaderFollowerGraph>(s.graph));
    ctx.weighting = pinned.l1;
    ctx.graph_eig = pinned.lambda_min;
    ctx.lambda_max_l = pinned.lambda_max;
  } else {
    ctx.weighting = laplacian(std::get<Graph>(s.graph));
    const auto spec = spectrum(ctx.weighting);
    ctx.graph_eig = spec.lambda2;
    ctx.lambda_max_l = spec.lambda_max;
  }
  const std::size_t n_agents = s.n_agents();
  const auto na = static_cast<Eigen::Index>(n_agents);
  Vector d = Vector::Zero(na);
  Vector e = Vector::Zero(na);
  const bool adaptive_bound = !(id == BoundId::D1 || id == BoundId::D4 || id == BoundId::D7);
  for (std::size_t i = 0; i < n_agents; ++i) {
    const auto parts = linear_parts(s.uncertainties[i].bound);
    if (!parts) {
      if (adaptive_bound)
        throw Error(ErrorKind::PreconditionViolated,
                    "adaptive residual sets need linear (d, e) uncertainty bounds");
      continue;
    }
    d(static_cast<Eigen::Index>(i)) = parts->d;
    e(static_cast<Eigen::Index>(i)) = parts->e;
  }
  const double gamma = s.leader_input ? s.leader_input->gamma : s.protocol.gamma;
  ProtocolConfig cfg = s.protocol;
  if (!is_adaptive(cfg.kind)) {
    // Static runs still need well-formed vectors for the constants.
    cfg.tau = cfg.eps_rates = cfg.phi = cfg.psi = Vector::Zero(0);
  }
  ctx.constants = analysis_constants(d, ctx.graph_eig, gamma, s.gains.alpha, cfg, s.gains.epsilon);

  BoundInputs& in = ctx.inputs;
  in.n_agents = n_agents;
  in.kappa = s.protocol.kappa;
  const Vector p_ev = linalg::sym_eigenvalues(s.gains.P);
  in.lambda_max_p = p_ev.maxCoeff();
  in.lambda_min_p = p_ev.minCoeff();
  in.alpha = s.gains.alpha;
  in.graph_eig = ctx.graph_eig;
  in.lambda_max_l = ctx.lambda_max_l;
  in.beta = lf_bound ? ctx.constants.beta_hat : ctx.constants.beta;
  in.delta = ctx.constants.delta;
  in.varrho = ctx.constants.varrho;
  in.sigma = ctx.constants.sigma;
  in.epsilon = s.gains.epsilon.value_or(0.0);
  in.phi = cfg.phi;
  in.psi = cfg.psi;
  in.e = e;
  if (!s.non_matching.empty()) {
    in.upsilon = Vector(na);
    for (std::size_t i = 0; i < n_agents; ++i)
      in.upsilon(static_cast<Eigen::Index>(i)) = s.non_matching[i].upsilon;
  }
  return ctx;
}

/// Per-sample series used by the verdicts: ||error||^2, the quadratic energy
/// 1/2 e^T (L kron P^{-1}) e and the full Lyapunov level with adaptive terms.
struct LyapunovSeries {
  std::vector<double> error_sq;
  std::vector<double> energy;
  std::vector<double> level;
};

inline LyapunovSeries lyapunov_series(const Scenario& s, const Trajectory& traj,
                                      const VerificationContext& ctx, bool lf_bound) {
  LyapunovSeries out;
  const Eigen::Index n = s.dynamics.n();
  const bool adaptive = is_adaptive(s.protocol.kind);
  Vector e_true = ctx.inputs.e;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const Vector err = s.has_leader() ? lf_consensus_error(traj.states[k], traj.leader_states[k])
                                      : consensus_error(traj.states[k], n);
    const double energy = quadratic_energy(err, ctx.weighting, s.gains.P);
    double level = energy;
    if (adaptive) {
      level += adaptive_energy({traj.d_bar[k], traj.e_bar[k]},
                               lf_bound ? ctx.constants.beta_hat : ctx.constants.beta, e_true,
                               s.protocol.tau, s.protocol.eps_rates);
    }
    out.error_sq.push_back(err.squaredNorm());
    out.energy.push_back(energy);
    out.level.push_back(level);
  }
  return out;
}

/// Residual-set membership plus the matching exponential envelope:
///  D1/D4: energy vs rate alpha, offset N kappa / alpha;
///  D7:    energy vs rate eps-1, offset b/(eps-1);
///  D2/D3/D5/D6: adaptive level vs rate delta, offset D2 (resp. D5);
///  D8/D9: adaptive level vs rate sigma, offset D8.
inline ResidualReport verify_trajectory(const Scenario& s, const Trajectory& traj, BoundId id,
                                        double settle_fraction = kSettleFraction) {
  if (traj.times.empty()) throw Error(ErrorKind::InvalidArgument, "empty trajectory");
  const VerificationContext ctx = verification_context(s, id);
  const bool lf_bound = is_leader_follower_bound(id);
  const LyapunovSeries series = lyapunov_series(s, traj, ctx, lf_bound);
  const double bound = residual_bound(id, ctx.inputs);

  ResidualReport report =
      uub_verdict(traj.times, is_level_set(id) ? series.level : series.error_sq, bound,
                  settle_fraction);
  report.bound_id = id;
  report.metric = is_level_set(id) ? "lyapunov_level" : "error_norm_sq";

  const double nk = static_cast<double>(s.n_agents()) * s.protocol.kappa;
  EnvelopeResult env;
  switch (id) {
    case BoundId::D1:
    case BoundId::D4:
      env = envelope_check(traj.times, series.energy, series.energy.front(), s.gains.alpha,
                           nk / s.gains.alpha);
      break;
    case BoundId::D7: {
      const double rate = *s.gains.epsilon - 1.0;
      const double ups2 = ctx.inputs.upsilon.size() ? ctx.inputs.upsilon.squaredNorm() : 0.0;
      const double drive = ctx.lambda_max_l / (2.0 * ctx.inputs.lambda_min_p) * ups2 + nk;
      env = envelope_check(traj.times, series.energy, series.energy.front(), rate, drive / rate);
      break;
    }
    case BoundId::D2:
    case BoundId::D3:
    case BoundId::D5:
    case BoundId::D6: {
      const double offset = residual_bound(lf_bound ? BoundId::D5 : BoundId::D2, ctx.inputs);
      env = envelope_check(traj.times, series.level, series.level.front(), ctx.constants.delta,
                           offset);
      break;
    }
    case BoundId::D8:
    case BoundId::D9: {
      const double offset = residual_bound(BoundId::D8, ctx.inputs);
      env = envelope_check(traj.times, series.level, series.level.front(), ctx.constants.sigma,
                           offset);
      break;
    }
  }
  report.envelope_ok = env.ok;
  report.max_violation = std::max(report.max_violation, env.ok ? 0.0 : env.max_violation);
  report.pass = report.pass && env.ok && traj.status == RunStatus::Completed;
  return report;
}

}  // namespace consensus
