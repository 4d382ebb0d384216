#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "consensus/errors.hpp"
#include "consensus/linalg.hpp"
#include "consensus/synthesis.hpp"

namespace consensus {

enum class ProtocolKind {
  StaticLeaderless,
  DiscontinuousLeaderless,
  AdaptiveLeaderless,
  SimplifiedAdaptive,
  StaticLeaderFollower,
  AdaptiveLeaderFollower,
};

constexpr std::string_view to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::StaticLeaderless: return "static_leaderless";
    case ProtocolKind::DiscontinuousLeaderless: return "discontinuous_leaderless";
    case ProtocolKind::AdaptiveLeaderless: return "adaptive_leaderless";
    case ProtocolKind::SimplifiedAdaptive: return "simplified_adaptive";
    case ProtocolKind::StaticLeaderFollower: return "static_leader_follower";
    case ProtocolKind::AdaptiveLeaderFollower: return "adaptive_leader_follower";
  }
  return "unknown";
}

inline ProtocolKind protocol_kind_from_string(std::string_view name) {
  for (auto kind : {ProtocolKind::StaticLeaderless, ProtocolKind::DiscontinuousLeaderless,
                    ProtocolKind::AdaptiveLeaderless, ProtocolKind::SimplifiedAdaptive,
                    ProtocolKind::StaticLeaderFollower, ProtocolKind::AdaptiveLeaderFollower}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown protocol kind '" + std::string(name) + "'");
}

constexpr bool is_leader_follower(ProtocolKind kind) {
  return kind == ProtocolKind::StaticLeaderFollower || kind == ProtocolKind::AdaptiveLeaderFollower;
}

constexpr bool is_adaptive(ProtocolKind kind) {
  return kind == ProtocolKind::AdaptiveLeaderless || kind == ProtocolKind::SimplifiedAdaptive ||
         kind == ProtocolKind::AdaptiveLeaderFollower;
}

// ---------------------------------------------------------------------------
// Uncertainty descriptors

/// ||f(x,t)|| <= rho(x,t)
struct RhoFunction {
  std::function<double(const Vector&, double)> rho;
};

/// ||f(x,t)|| <= d + e ||x||
struct LinearBound {
  double d = 0.0;
  double e = 0.0;
};

/// ||f(x,t)|| <= d
struct ConstantBound {
  double d = 0.0;
};

using UncertaintyBound = std::variant<RhoFunction, LinearBound, ConstantBound>;

inline double bound_value(const UncertaintyBound& bound, const Vector& x, double t) {
  return std::visit(
      [&](const auto& b) -> double {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RhoFunction>) {
          return b.rho(x, t);
        } else if constexpr (std::is_same_v<T, LinearBound>) {
          return b.d + b.e * x.norm();
        } else {
          return b.d;
        }
      },
      bound);
}

/// Constant and linear parts (d, e) of a bound, as consumed by the adaptive
/// residual-set formulas. Rho functions have none.
inline std::optional<LinearBound> linear_parts(const UncertaintyBound& bound) {
  if (const auto* lb = std::get_if<LinearBound>(&bound)) return *lb;
  if (const auto* cb = std::get_if<ConstantBound>(&bound)) return LinearBound{cb->d, 0.0};
  return std::nullopt;
}

/// Lumped matched uncertainty of one agent and its declared bound.
struct UncertaintyModel {
  std::function<Vector(const Vector&, double)> f;
  UncertaintyBound bound = ConstantBound{0.0};
};

struct AdaptiveState {
  Vector d_bar;
  Vector e_bar;
};

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::StaticLeaderless;
  double kappa = 0.5;
  Vector tau;
  Vector eps_rates;
  Vector phi;
  Vector psi;
  double gamma = 0.0;

  static ProtocolConfig uniform(ProtocolKind kind, std::size_t n_agents, double kappa,
                                double tau, double eps_rate, double phi, double psi,
                                double gamma = 0.0) {
    const auto n = static_cast<Eigen::Index>(n_agents);
    ProtocolConfig cfg;
    cfg.kind = kind;
    cfg.kappa = kappa;
    cfg.tau = Vector::Constant(n, tau);
    cfg.eps_rates = Vector::Constant(n, eps_rate);
    cfg.phi = Vector::Constant(n, phi);
    cfg.psi = Vector::Constant(n, psi);
    cfg.gamma = gamma;
    return cfg;
  }

  void validate(std::size_t n_agents) const {
    if (!(kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be positive");
    if (gamma < 0.0) throw Error(ErrorKind::InvalidArgument, "gamma must be nonnegative");
    if (!is_adaptive(kind)) return;
    const auto n = static_cast<Eigen::Index>(n_agents);
    for (const Vector* v : {&tau, &eps_rates, &phi, &psi}) {
      if (v->size() != n)
        throw Error(ErrorKind::InvalidArgument, "per-agent adaptive parameters need N entries");
      if (!(v->minCoeff() > 0.0))
        throw Error(ErrorKind::InvalidArgument, "adaptive parameters must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Boundary-layer nonlinearities. The equality case (weight * ||w|| == kappa)
// always takes the inner branch.

/// w/||w|| outside the layer rho ||w|| > kappa, w/kappa inside.
inline Vector g_boundary(const Vector& w, double rho, double kappa) {
  const double norm = w.norm();
  if (rho * norm > kappa) return w / norm;
  return w / kappa;
}

/// Discontinuous unit vector, zero at the origin.
inline Vector g_hat(const Vector& w) {
  const double norm = w.norm();
  if (norm == 0.0) return Vector::Zero(w.size());
  return w / norm;
}

/// Adaptive layer with weight s = d_bar + e_bar ||x||:
/// w s/||w|| outside, w s^2/kappa inside.
inline Vector r_boundary(const Vector& w, double d_bar, double e_bar, double x_norm,
                         double kappa) {
  const double s = d_bar + e_bar * x_norm;
  const double norm = w.norm();
  if (s * norm > kappa) return w * (s / norm);
  return w * (s * s / kappa);
}

/// Simplified adaptive layer: w d_bar/||w|| outside, w d_bar/kappa inside.
inline Vector r_bar(const Vector& w, double d_bar, double kappa) {
  const double norm = w.norm();
  if (d_bar * norm > kappa) return w * (d_bar / norm);
  return w * (d_bar / kappa);
}

/// Leader-follower layer with weight gamma + rho.
inline Vector g_tilde(const Vector& w, double rho, double gamma, double kappa) {
  const double norm = w.norm();
  if ((gamma + rho) * norm > kappa) return w / norm;
  return w / kappa;
}

// ---------------------------------------------------------------------------
// Control laws. `delta` is the aggregated relative state sum_j a_ij (x_i - x_j)
// (including the leader term for leader-follower kinds), computed once per
// agent per evaluation.

struct AdaptiveOutput {
  Vector u;
  double d_dot = 0.0;
  double e_dot = 0.0;
};

inline Vector static_leaderless_control(const Vector& delta, double rho, const GainSet& gains,
                                        double kappa) {
  const Vector w = gains.K * delta;
  return gains.coupling.c * w + rho * g_boundary(w, rho, kappa);
}

inline Vector discontinuous_leaderless_control(const Vector& delta, double rho,
                                               const GainSet& gains) {
  const Vector w = gains.K * delta;
  return gains.coupling.c * w + rho * g_hat(w);
}

inline AdaptiveOutput adaptive_leaderless_control(std::size_t i, const Vector& delta,
                                                  const AdaptiveState& state, double x_norm,
                                                  const GainSet& gains,
                                                  const ProtocolConfig& cfg) {
  const auto k = static_cast<Eigen::Index>(i);
  const double d_bar = state.d_bar(k);
  const double e_bar = state.e_bar(k);
  const Vector w = gains.K * delta;
  const double w_norm = w.norm();
  AdaptiveOutput out;
  out.u = d_bar * w + r_boundary(w, d_bar, e_bar, x_norm, cfg.kappa);
  const double quad = delta.dot(gains.Gamma * delta);
  out.d_dot = cfg.tau(k) * (-cfg.phi(k) * d_bar + quad + w_norm);
  out.e_dot = cfg.eps_rates(k) * (-cfg.psi(k) * e_bar + w_norm * x_norm);
  return out;
}

inline Vector static_lf_control(const Vector& delta, double rho, const GainSet& gains,
                                double gamma, double kappa) {
  const Vector w = gains.K * delta;
  return gains.coupling.c1 * w + (gains.coupling.c2 + rho) * g_tilde(w, rho, gamma, kappa);
}

/// Same functional form as the leaderless adaptive law; only the
/// aggregation behind `delta` differs.
inline AdaptiveOutput adaptive_lf_control(std::size_t i, const Vector& delta,
                                          const AdaptiveState& state, double x_norm,
                                          const GainSet& gains, const ProtocolConfig& cfg) {
  return adaptive_leaderless_control(i, delta, state, x_norm, gains, cfg);
}

inline AdaptiveOutput simplified_adaptive_control(std::size_t i, const Vector& delta,
                                                  double d_bar, const GainSet& gains,
                                                  const ProtocolConfig& cfg) {
  const auto k = static_cast<Eigen::Index>(i);
  const Vector w = gains.K * delta;
  AdaptiveOutput out;
  out.u = d_bar * w + r_bar(w, d_bar, cfg.kappa);
  out.d_dot = cfg.tau(k) * (-cfg.phi(k) * d_bar + delta.dot(gains.Gamma * delta) + w.norm());
  out.e_dot = 0.0;
  return out;
}

}  // namespace consensus
