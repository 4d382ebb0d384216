#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/graph.hpp"
#include "consensus/linalg.hpp"
#include "consensus/protocols.hpp"
#include "consensus/synthesis.hpp"

namespace consensus {

inline constexpr double kDivergenceThreshold = 1e9;

/// Classical fourth-order Runge-Kutta step for y' = f(t, y).
template <class Field>
Vector step_rk4(Field&& f, const Vector& y, double t, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "step size must be positive");
  const Vector k1 = f(t, y);
  const Vector k2 = f(t + 0.5 * h, Vector(y + 0.5 * h * k1));
  const Vector k3 = f(t + 0.5 * h, Vector(y + 0.5 * h * k2));
  const Vector k4 = f(t + h, Vector(y + h * k3));
  Vector next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw Error(ErrorKind::NonFiniteState, "RK4 step produced non-finite state");
  return next;
}

/// Seeded source for scenario parameters. mt19937_64 output is fixed by the
/// C++ standard; the mapping to [lo, hi) uses the top 53 bits directly so
/// draws do not depend on the standard library's distribution classes.
class ScenarioRng {
 public:
  explicit ScenarioRng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    const double u01 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u01;
  }

  Vector uniform_vector(Eigen::Index n, double lo, double hi) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 engine_;
};

/// Bounded disturbance outside the input channel.
struct NonMatchingDisturbance {
  std::function<Vector(double)> omega;
  double upsilon = 0.0;
};

/// Leader input; may depend on the leader state (virtual input).
struct LeaderInput {
  std::function<Vector(double, const Vector&)> u0;
  double gamma = 0.0;
};

using Topology = std::variant<Graph, LeaderFollowerGraph>;

struct Scenario {
  Topology graph;
  AgentDynamics dynamics;
  std::vector<UncertaintyModel> uncertainties;
  std::vector<NonMatchingDisturbance> non_matching;  // empty when absent
  std::optional<LeaderInput> leader_input;
  ProtocolConfig protocol;
  GainSet gains;
  std::vector<Vector> x0;
  Vector leader_x0;
  AdaptiveState adaptive0;
  double t_final = 10.0;
  double h = 1e-3;
  std::uint64_t seed = 0;
  int record_stride = 1;

  std::size_t n_agents() const {
    return std::visit(
        [](const auto& g) -> std::size_t {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, Graph>) return g.n_nodes();
          else return g.n_followers();
        },
        graph);
  }
  bool has_leader() const { return std::holds_alternative<LeaderFollowerGraph>(graph); }

  /// Follower-follower adjacency.
  const Matrix& adjacency() const {
    if (const auto* g = std::get_if<Graph>(&graph)) return g->adjacency();
    return std::get<LeaderFollowerGraph>(graph).followers().adjacency();
  }
};

enum class RunStatus { Completed, Diverged, AssumptionViolated };

constexpr std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::AssumptionViolated: return "assumption_violated";
  }
  return "unknown";
}

/// Runtime check of one declared bound (uncertainty, leader input, or
/// non-matching disturbance), evaluated on every grid point.
struct MonitorReport {
  std::string name;
  std::size_t checks = 0;
  std::size_t violations = 0;
  double first_violation_t = std::numeric_limits<double>::quiet_NaN();
  int first_violation_agent = -1;
  double worst_ratio = 0.0;  // max ||value|| / bound
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;         // stacked follower states, N*n
  std::vector<Vector> leader_states;  // empty for leaderless runs
  std::vector<Vector> controls;       // N*p, evaluated at the pre-step state
  std::vector<Vector> d_bar;
  std::vector<Vector> e_bar;
  std::vector<double> error_norm;     // ||xi|| or ||zeta||
  std::vector<MonitorReport> monitors;
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;
};

namespace detail {

inline Vector block(const Vector& v, std::size_t i, Eigen::Index n) {
  return v.segment(static_cast<Eigen::Index>(i) * n, n);
}

/// Packs follower states, optional leader state and adaptive gains into one
/// integration vector: [x (N n) | x0 (n) | d_bar (N) | e_bar (N)].
struct StateLayout {
  std::size_t agents = 0;
  Eigen::Index n = 0;
  bool leader = false;
  bool adaptive = false;

  Eigen::Index x_size() const { return static_cast<Eigen::Index>(agents) * n; }
  Eigen::Index leader_offset() const { return x_size(); }
  Eigen::Index d_offset() const { return x_size() + (leader ? n : 0); }
  Eigen::Index e_offset() const { return d_offset() + static_cast<Eigen::Index>(agents); }
  Eigen::Index size() const {
    return d_offset() + (adaptive ? 2 * static_cast<Eigen::Index>(agents) : 0);
  }
};

struct Evaluation {
  Vector derivative;
  Vector controls;
};

class ClosedLoop {
 public:
  explicit ClosedLoop(const Scenario& s)
      : s_(s), layout_{s.n_agents(), s.dynamics.n(), s.has_leader(), is_adaptive(s.protocol.kind)} {
    if (s.has_leader()) leader_links_ = std::get<LeaderFollowerGraph>(s.graph).leader_links();
  }

  const StateLayout& layout() const { return layout_; }

  Vector pack(const std::vector<Vector>& x0, const Vector& leader_x0,
              const AdaptiveState& adaptive0) const {
    Vector y = Vector::Zero(layout_.size());
    for (std::size_t i = 0; i < layout_.agents; ++i)
      y.segment(static_cast<Eigen::Index>(i) * layout_.n, layout_.n) = x0[i];
    if (layout_.leader) y.segment(layout_.leader_offset(), layout_.n) = leader_x0;
    if (layout_.adaptive) {
      const auto na = static_cast<Eigen::Index>(layout_.agents);
      y.segment(layout_.d_offset(), na) = adaptive0.d_bar;
      y.segment(layout_.e_offset(), na) = adaptive0.e_bar;
    }
    return y;
  }

  Vector followers(const Vector& y) const { return y.head(layout_.x_size()); }
  Vector leader(const Vector& y) const { return y.segment(layout_.leader_offset(), layout_.n); }

  AdaptiveState adaptive(const Vector& y) const {
    const auto na = static_cast<Eigen::Index>(layout_.agents);
    if (!layout_.adaptive) return {Vector::Zero(na), Vector::Zero(na)};
    return {y.segment(layout_.d_offset(), na), y.segment(layout_.e_offset(), na)};
  }

  /// Aggregated relative state of agent i, including a_i0 (x_i - x0).
  Vector relative(std::size_t i, const Vector& y) const {
    const Eigen::Index n = layout_.n;
    const Matrix& a = s_.adjacency();
    const auto ii = static_cast<Eigen::Index>(i);
    const Vector xi = block(y, i, n);
    Vector delta = Vector::Zero(n);
    for (std::size_t j = 0; j < layout_.agents; ++j) {
      const double aij = a(ii, static_cast<Eigen::Index>(j));
      if (aij != 0.0) delta += aij * (xi - block(y, j, n));
    }
    if (layout_.leader && leader_links_(ii) != 0.0)
      delta += leader_links_(ii) * (xi - leader(y));
    return delta;
  }

  Evaluation evaluate(double t, const Vector& y) const {
    const Eigen::Index n = layout_.n;
    const Eigen::Index p = s_.dynamics.p();
    const auto& cfg = s_.protocol;
    const auto& gains = s_.gains;
    Evaluation ev;
    ev.derivative = Vector::Zero(layout_.size());
    ev.controls = Vector::Zero(static_cast<Eigen::Index>(layout_.agents) * p);
    const AdaptiveState adaptive_state = adaptive(y);

    for (std::size_t i = 0; i < layout_.agents; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Vector xi = block(y, i, n);
      const Vector delta = relative(i, y);
      const UncertaintyModel& unc = s_.uncertainties[i];
      Vector u;
      switch (cfg.kind) {
        case ProtocolKind::StaticLeaderless:
          u = static_leaderless_control(delta, bound_value(unc.bound, xi, t), gains, cfg.kappa);
          break;
        case ProtocolKind::DiscontinuousLeaderless:
          u = discontinuous_leaderless_control(delta, bound_value(unc.bound, xi, t), gains);
          break;
        case ProtocolKind::StaticLeaderFollower:
          u = static_lf_control(delta, bound_value(unc.bound, xi, t), gains, cfg.gamma, cfg.kappa);
          break;
        case ProtocolKind::AdaptiveLeaderless:
        case ProtocolKind::AdaptiveLeaderFollower: {
          const AdaptiveOutput out =
              cfg.kind == ProtocolKind::AdaptiveLeaderless
                  ? adaptive_leaderless_control(i, delta, adaptive_state, xi.norm(), gains, cfg)
                  : adaptive_lf_control(i, delta, adaptive_state, xi.norm(), gains, cfg);
          u = out.u;
          ev.derivative(layout_.d_offset() + ii) = out.d_dot;
          ev.derivative(layout_.e_offset() + ii) = out.e_dot;
          break;
        }
        case ProtocolKind::SimplifiedAdaptive: {
          const AdaptiveOutput out =
              simplified_adaptive_control(i, delta, adaptive_state.d_bar(ii), gains, cfg);
          u = out.u;
          ev.derivative(layout_.d_offset() + ii) = out.d_dot;
          break;
        }
      }
      ev.controls.segment(ii * p, p) = u;
      Vector input = u;
      if (unc.f) input += unc.f(xi, t);
      Vector xdot = s_.dynamics.A * xi + s_.dynamics.B * input;
      if (!s_.non_matching.empty()) xdot += s_.non_matching[i].omega(t);
      ev.derivative.segment(ii * n, n) = xdot;
    }
    if (layout_.leader) {
      const Vector x0 = leader(y);
      Vector xdot0 = s_.dynamics.A * x0;
      if (s_.leader_input) xdot0 += s_.dynamics.B * s_.leader_input->u0(t, x0);
      ev.derivative.segment(layout_.leader_offset(), n) = xdot0;
    }
    return ev;
  }

  /// Projection keeping adaptive gains nonnegative after a step.
  void clamp(Vector& y) const {
    if (!layout_.adaptive) return;
    const auto len = 2 * static_cast<Eigen::Index>(layout_.agents);
    y.segment(layout_.d_offset(), len) = y.segment(layout_.d_offset(), len).cwiseMax(0.0);
  }

  double error_norm(const Vector& y) const {
    const Eigen::Index n = layout_.n;
    const Vector x = followers(y);
    double sq = 0.0;
    if (layout_.leader) {
      const Vector x0 = leader(y);
      for (std::size_t i = 0; i < layout_.agents; ++i) sq += (block(x, i, n) - x0).squaredNorm();
    } else {
      Vector mean = Vector::Zero(n);
      for (std::size_t i = 0; i < layout_.agents; ++i) mean += block(x, i, n);
      mean /= static_cast<double>(layout_.agents);
      for (std::size_t i = 0; i < layout_.agents; ++i) sq += (block(x, i, n) - mean).squaredNorm();
    }
    return std::sqrt(sq);
  }

 private:
  const Scenario& s_;
  StateLayout layout_;
  Vector leader_links_;
};

inline void check_bound(MonitorReport& m, double value, double bound, double t, std::size_t agent) {
  ++m.checks;
  const double slack = 1e-9 * (1.0 + bound);
  if (bound > 0.0) m.worst_ratio = std::max(m.worst_ratio, value / bound);
  else if (value > 0.0) m.worst_ratio = std::numeric_limits<double>::infinity();
  if (value > bound + slack) {
    if (m.violations == 0) {
      m.first_violation_t = t;
      m.first_violation_agent = static_cast<int>(agent);
    }
    ++m.violations;
  }
}


inline std::vector<MonitorReport> make_monitors(const Scenario& s) {
  std::vector<MonitorReport> monitors{{"matched_uncertainty"}};
  if (s.has_leader() && s.leader_input) monitors.push_back({"leader_input"});
  if (!s.non_matching.empty()) monitors.push_back({"non_matching_disturbance"});
  return monitors;
}

/// One round of declared-bound checks at time t, in make_monitors order.
inline void check_monitors(const Scenario& s, std::vector<MonitorReport>& monitors, double t,
                           const Vector& x, const Vector& x0) {
  const Eigen::Index n = s.dynamics.n();
  const std::size_t n_agents = s.n_agents();
  std::size_t m = 0;
  for (std::size_t i = 0; i < n_agents; ++i) {
    const Vector xi = block(x, i, n);
    const auto& unc = s.uncertainties[i];
    const double value = unc.f ? unc.f(xi, t).norm() : 0.0;
    check_bound(monitors[m], value, bound_value(unc.bound, xi, t), t, i);
  }
  ++m;
  if (s.has_leader() && s.leader_input) {
    check_bound(monitors[m], s.leader_input->u0(t, x0).norm(), s.leader_input->gamma, t, 0);
    ++m;
  }
  if (!s.non_matching.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i)
      check_bound(monitors[m], s.non_matching[i].omega(t).norm(), s.non_matching[i].upsilon, t, i);
  }
}

}  // namespace detail

inline void validate_scenario(const Scenario& s) {
  const std::size_t n_agents = s.n_agents();
  const Eigen::Index n = s.dynamics.n();
  if (s.uncertainties.size() != n_agents)
    throw Error(ErrorKind::InvalidArgument, "one uncertainty model per agent is required");
  if (!s.non_matching.empty() && s.non_matching.size() != n_agents)
    throw Error(ErrorKind::InvalidArgument, "non-matching disturbances need one entry per agent");
  if (s.x0.size() != n_agents)
    throw Error(ErrorKind::InvalidArgument, "x0 needs one state per agent");
  for (const auto& xi : s.x0)
    if (xi.size() != n) throw Error(ErrorKind::InvalidArgument, "x0 entry has wrong dimension");
  if (s.has_leader() && s.leader_x0.size() != n)
    throw Error(ErrorKind::InvalidArgument, "leader initial state has wrong dimension");
  if (s.has_leader() != is_leader_follower(s.protocol.kind))
    throw Error(ErrorKind::InvalidArgument, "protocol kind does not match graph type");
  s.protocol.validate(n_agents);
  if (is_adaptive(s.protocol.kind)) {
    const auto na = static_cast<Eigen::Index>(n_agents);
    if (s.adaptive0.d_bar.size() != na || s.adaptive0.e_bar.size() != na)
      throw Error(ErrorKind::InvalidArgument, "adaptive0 needs N entries for d_bar and e_bar");
    if (s.adaptive0.d_bar.minCoeff() < 0.0 || s.adaptive0.e_bar.minCoeff() < 0.0)
      throw Error(ErrorKind::InvalidArgument, "initial adaptive gains must be nonnegative");
  }
  if (s.gains.K.rows() != s.dynamics.p() || s.gains.K.cols() != n)
    throw Error(ErrorKind::InvalidArgument, "gain K has wrong shape");
  if (is_adaptive(s.protocol.kind) && (s.gains.Gamma.rows() != n || s.gains.Gamma.cols() != n))
    throw Error(ErrorKind::InvalidArgument, "gain Gamma has wrong shape");
  if (!(s.h > 0.0) || !(s.t_final > 0.0))
    throw Error(ErrorKind::InvalidArgument, "t_final and h must be positive");
  if (s.record_stride < 1) throw Error(ErrorKind::InvalidArgument, "record_stride must be >= 1");
}

/// Integrates the closed loop on the uniform grid t_k = k h. Samples are
/// recorded every record_stride steps; controls are evaluated at the
/// pre-step state. Assumption monitors run on every grid point. Divergence
/// or a runtime bound violation stops the run and returns the partial
/// trajectory with a non-completed status.
inline Trajectory simulate(const Scenario& s) {
  validate_scenario(s);
  const detail::ClosedLoop loop(s);
  const auto& layout = loop.layout();
  const auto steps = static_cast<long long>(std::llround(s.t_final / s.h));

  Trajectory traj;
  traj.monitors = detail::make_monitors(s);

  auto field = [&loop](double t, const Vector& y) { return loop.evaluate(t, y).derivative; };

  Vector y = loop.pack(s.x0, s.leader_x0, s.adaptive0);
  for (long long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * s.h;
    const bool record = (k % s.record_stride == 0) || k == steps;
    if (record) {
      const auto ev = loop.evaluate(t, y);
      traj.times.push_back(t);
      traj.states.push_back(loop.followers(y));
      if (layout.leader) traj.leader_states.push_back(loop.leader(y));
      traj.controls.push_back(ev.controls);
      const AdaptiveState a = loop.adaptive(y);
      traj.d_bar.push_back(a.d_bar);
      traj.e_bar.push_back(a.e_bar);
      traj.error_norm.push_back(loop.error_norm(y));
    }

    detail::check_monitors(s, traj.monitors, t, loop.followers(y),
                           layout.leader ? loop.leader(y) : Vector());
    for (const auto& mon : traj.monitors) {
      if (mon.violations > 0) {
        traj.status = RunStatus::AssumptionViolated;
        traj.diagnostic = mon.name + " bound exceeded at t=" +
                          std::to_string(mon.first_violation_t) + " agent " +
                          std::to_string(mon.first_violation_agent);
        return traj;
      }
    }
    if (k == steps) break;

    Vector next;
    try {
      next = step_rk4(field, y, t, s.h);
    } catch (const Error& e) {
      traj.status = RunStatus::Diverged;
      traj.diagnostic = std::string(e.what()) + " at t=" + std::to_string(t);
      return traj;
    }
    loop.clamp(next);
    if (next.cwiseAbs().maxCoeff() > kDivergenceThreshold) {
      traj.status = RunStatus::Diverged;
      traj.diagnostic = "state norm exceeded 1e9 at t=" + std::to_string(t + s.h);
      return traj;
    }
    y = std::move(next);
  }
  return traj;
}

/// Re-runs the declared-bound checks on the recorded samples of a trajectory
/// (used when a trajectory is loaded back from disk).
inline std::vector<MonitorReport> evaluate_monitors(const Scenario& s, const Trajectory& traj) {
  auto monitors = detail::make_monitors(s);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    detail::check_monitors(s, monitors, traj.times[k], traj.states[k],
                           s.has_leader() ? traj.leader_states[k] : Vector());
  }
  return monitors;
}

// ---------------------------------------------------------------------------
// Scenario library

/// Six agents on a ring with the chord (1, 4); Laplacian spectrum {0, 1, 2, 3, 3, 5}.
inline Graph example_leaderless_graph() {
  return Graph::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {1, 4}});
}

/// Six followers on a path; the leader talks to followers 0 and 3.
inline LeaderFollowerGraph example_leader_follower_graph() {
  return LeaderFollowerGraph::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}, {0, 3});
}

struct ProtocolParams {
  ProtocolKind kind = ProtocolKind::AdaptiveLeaderless;
  double kappa = 0.5;
  double tau = 10.0;
  double eps_rate = 10.0;
  double phi = 0.05;
  double psi = 0.05;
  double coupling_multiplier = 1.0;
};

struct MassSpringParams {
  std::size_t n_agents = 6;
  double mass = 2.5;
  std::vector<double> spring_constants;  // drawn from [0, k_max) when empty
  double k_max = 5.0;
  std::optional<Graph> graph;            // example_leaderless_graph() when empty
  ProtocolParams protocol;
  std::optional<double> upsilon;         // adds (sin t, cos t) upsilon / sqrt 2
  std::optional<double> epsilon;         // shifted-LMI gains when set
  double t_final = 20.0;
  double h = 1e-3;
  std::uint64_t seed = 1;
};

inline AgentDynamics mass_spring_dynamics(double mass) {
  if (!(mass > 0.0)) throw Error(ErrorKind::InvalidArgument, "mass must be positive");
  Matrix a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  Matrix b(2, 1);
  b << 0.0, 1.0 / mass;
  return {a, b};
}

/// Fills gains for a leaderless scenario: P (or Q), K, Gamma, alpha and
/// c = multiplier / lambda2.
inline GainSet leaderless_gains(const AgentDynamics& dyn, const Graph& g,
                                std::optional<double> epsilon, double multiplier) {
  if (!is_connected(g)) throw Error(ErrorKind::DisconnectedGraph, "leaderless graph is disconnected");
  GainSet gains = synthesize_gains(dyn, epsilon);
  gains.coupling = leaderless_coupling(spectrum(g).lambda2).scaled(multiplier);
  return gains;
}

inline GainSet leader_follower_gains(const AgentDynamics& dyn, const LeaderFollowerGraph& g,
                                     double gamma, double multiplier) {
  GainSet gains = synthesize_gains(dyn);
  gains.coupling =
      leader_follower_coupling(leader_follower_partition(g).lambda_min, gamma).scaled(multiplier);
  return gains;
}

/// Network of mass-spring agents m y'' + k_i y = u_i written as
/// x' = A x + B (u + k_i E x) with E = [-1, 0] and ||k_i E x|| <= k_i ||x||.
/// Draw order from the seed: spring constants (if not given), then x0 agent
/// by agent, each uniform in [-1, 1]^2.
inline Scenario build_mass_spring_scenario(const MassSpringParams& params) {
  ScenarioRng rng(params.seed);
  const std::size_t n_agents = params.n_agents;
  std::vector<double> k = params.spring_constants;
  if (k.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i) k.push_back(rng.uniform(0.0, params.k_max));
  }
  if (k.size() != n_agents)
    throw Error(ErrorKind::InvalidArgument, "need one spring constant per agent");

  Scenario s;
  const Graph g = params.graph ? *params.graph : example_leaderless_graph();
  if (g.n_nodes() != n_agents) throw Error(ErrorKind::InvalidArgument, "graph size mismatch");
  s.graph = g;
  s.dynamics = mass_spring_dynamics(params.mass);
  for (std::size_t i = 0; i < n_agents; ++i) {
    const double ki = k[i];
    if (ki < 0.0) throw Error(ErrorKind::InvalidArgument, "spring constants must be nonnegative");
    UncertaintyModel unc;
    unc.f = [ki](const Vector& x, double) {
      Vector f(1);
      f(0) = -ki * x(0);
      return f;
    };
    unc.bound = LinearBound{0.0, ki};
    s.uncertainties.push_back(std::move(unc));
  }
  if (params.upsilon) {
    const double ups = *params.upsilon;
    for (std::size_t i = 0; i < n_agents; ++i) {
      s.non_matching.push_back({[ups](double t) {
                                  Vector w(2);
                                  w << std::sin(t), std::cos(t);
                                  return Vector(w * (ups / std::sqrt(2.0)));
                                },
                                ups});
    }
  }
  const auto& pp = params.protocol;
  if (is_leader_follower(pp.kind))
    throw Error(ErrorKind::InvalidArgument, "mass-spring scenario is leaderless");
  s.protocol = ProtocolConfig::uniform(pp.kind, n_agents, pp.kappa, pp.tau, pp.eps_rate, pp.phi,
                                       pp.psi);
  s.gains = leaderless_gains(s.dynamics, g, params.epsilon, pp.coupling_multiplier);
  for (std::size_t i = 0; i < n_agents; ++i) s.x0.push_back(rng.uniform_vector(2, -1.0, 1.0));
  const auto na = static_cast<Eigen::Index>(n_agents);
  s.adaptive0 = {Vector::Zero(na), Vector::Zero(na)};
  s.t_final = params.t_final;
  s.h = params.h;
  s.seed = params.seed;
  return s;
}

struct ChuaParams {
  std::size_t n_followers = 6;
  double a = 9.0;
  double b = 18.0;
  double m0_1 = -0.75;
  double m0_2 = -4.0 / 3.0;
  std::vector<double> m1;  // drawn from [-6, 0) when empty
  std::vector<double> m2;
  std::optional<LeaderFollowerGraph> graph;
  ProtocolParams protocol{ProtocolKind::AdaptiveLeaderFollower, 0.5, 5.0, 5.0, 0.05, 0.05, 1.0};
  double t_final = 30.0;
  double h = 5e-4;
  std::uint64_t seed = 1;
};

/// |x + 1| - |x - 1|, the piecewise-linear part of the Chua diode.
inline double chua_saturation(double x) { return std::abs(x + 1.0) - std::abs(x - 1.0); }

inline AgentDynamics chua_dynamics(double a, double b, double m0_1) {
  Matrix am(3, 3);
  am << -a * (1.0 + m0_1), a, 0.0,
        1.0, -1.0, 1.0,
        0.0, -b, 0.0;
  Matrix bm(3, 1);
  bm << 1.0, 0.0, 0.0;
  return {am, bm};
}

/// Sup of the leader's virtual input (a/2)(m0_1 - m0_2)(|x+1| - |x-1|).
inline double chua_leader_bound(double a, double m0_1, double m0_2) {
  return a * std::abs(m0_1 - m0_2);
}

/// Leader-follower network of Chua circuits. The leader runs on its own
/// diode nonlinearity f0(x0), treated as a bounded virtual input. Followers
/// carry f_i = a (m0_1 - m_i^1) x_i1 + (a/2)(m_i^1 - m_i^2)(|x_i1+1| - |x_i1-1|)
/// with the parameter-range bound d = 6a, e = a max(6 + m0_1, -m0_1).
/// Draw order: m1 and m2 per follower (interleaved), leader x0, follower x0.
inline Scenario build_chua_scenario(const ChuaParams& params) {
  ScenarioRng rng(params.seed);
  const std::size_t n_agents = params.n_followers;
  std::vector<double> m1 = params.m1;
  std::vector<double> m2 = params.m2;
  if (m1.empty() && m2.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      m1.push_back(rng.uniform(-6.0, 0.0));
      m2.push_back(rng.uniform(-6.0, 0.0));
    }
  }
  if (m1.size() != n_agents || m2.size() != n_agents)
    throw Error(ErrorKind::InvalidArgument, "need m1 and m2 for every follower");

  const double a = params.a;
  const double m01 = params.m0_1;
  const double m02 = params.m0_2;
  Scenario s;
  const LeaderFollowerGraph g = params.graph ? *params.graph : example_leader_follower_graph();
  if (g.n_followers() != n_agents) throw Error(ErrorKind::InvalidArgument, "graph size mismatch");
  s.graph = g;
  s.dynamics = chua_dynamics(a, params.b, m01);

  const double d_bound = 6.0 * a;
  const double e_bound = a * std::max(6.0 + m01, -m01);
  for (std::size_t i = 0; i < n_agents; ++i) {
    const double mi1 = m1[i];
    const double mi2 = m2[i];
    UncertaintyModel unc;
    unc.f = [a, m01, mi1, mi2](const Vector& x, double) {
      Vector f(1);
      f(0) = a * (m01 - mi1) * x(0) + 0.5 * a * (mi1 - mi2) * chua_saturation(x(0));
      return f;
    };
    unc.bound = LinearBound{d_bound, e_bound};
    s.uncertainties.push_back(std::move(unc));
  }
  const double gamma = chua_leader_bound(a, m01, m02);
  s.leader_input = LeaderInput{[a, m01, m02](double, const Vector& x0) {
                                 Vector u(1);
                                 u(0) = 0.5 * a * (m01 - m02) * chua_saturation(x0(0));
                                 return u;
                               },
                               gamma};
  const auto& pp = params.protocol;
  if (!is_leader_follower(pp.kind))
    throw Error(ErrorKind::InvalidArgument, "Chua scenario is leader-follower");
  s.protocol = ProtocolConfig::uniform(pp.kind, n_agents, pp.kappa, pp.tau, pp.eps_rate, pp.phi,
                                       pp.psi, gamma);
  s.gains = leader_follower_gains(s.dynamics, g, gamma, pp.coupling_multiplier);
  s.leader_x0 = rng.uniform_vector(3, -1.0, 1.0);
  for (std::size_t i = 0; i < n_agents; ++i) s.x0.push_back(rng.uniform_vector(3, -1.0, 1.0));
  const auto na = static_cast<Eigen::Index>(n_agents);
  s.adaptive0 = {Vector::Zero(na), Vector::Zero(na)};
  s.t_final = params.t_final;
  s.h = params.h;
  s.seed = params.seed;
  return s;
}

}  // namespace consensus
