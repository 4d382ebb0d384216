#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "consensus/errors.hpp"
#include "consensus/graph.hpp"
#include "consensus/linalg.hpp"
#include "consensus/metrics.hpp"
#include "consensus/protocols.hpp"
#include "consensus/simulation.hpp"
#include "consensus/synthesis.hpp"

namespace consensus::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Small JSON helpers

namespace detail {

[[noreturn]] inline void schema_error(const std::string& what) {
  throw Error(ErrorKind::InvalidArgument, what);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    schema_error(std::string("field '") + key + "': " + e.what());
  }
}

inline Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) schema_error(std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) schema_error(std::string(what) + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Scalar broadcast to n entries, or an array of exactly n entries.
inline Vector per_agent(const json& j, std::size_t n, const char* what) {
  const auto size = static_cast<Eigen::Index>(n);
  if (j.is_number()) return Vector::Constant(size, j.get<double>());
  Vector v = vector_from_json(j, what);
  if (v.size() != size) schema_error(std::string(what) + " needs one entry per agent");
  return v;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Nested rows [[...], ...]. A flat array is accepted when `rows` is known
/// and read row-major.
inline Matrix matrix_from_json(const json& j, const char* what,
                               std::optional<Eigen::Index> rows = std::nullopt) {
  if (!j.is_array() || j.empty()) schema_error(std::string(what) + " must be a non-empty array");
  if (j.front().is_array()) {
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = static_cast<Eigen::Index>(j.front().size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      const json& row = j[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
        schema_error(std::string(what) + " rows must have equal length");
      for (Eigen::Index k = 0; k < c; ++k) {
        if (!row[static_cast<std::size_t>(k)].is_number())
          schema_error(std::string(what) + " must contain numbers");
        m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
      }
    }
    return m;
  }
  const Vector flat = vector_from_json(j, what);
  Eigen::Index r = rows.value_or(0);
  if (r == 0) {
    const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
    if (side * side != flat.size()) schema_error(std::string(what) + " flat form must be square");
    r = side;
  }
  if (flat.size() % r != 0) schema_error(std::string(what) + " flat length does not match rows");
  Matrix m(r, flat.size() / r);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = flat(i * m.cols() + k);
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "malformed JSON in '" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Graph JSON: {"n": N, "edges": [[i, j] | [i, j, w], ...], "leader_links": [i, ...]}
// or {"adjacency": [[...]]}. "leader_weights" may replace "leader_links".

inline Topology graph_from_json(const json& j) {
  Graph g;
  if (j.contains("adjacency")) {
    g = Graph(detail::matrix_from_json(j.at("adjacency"), "graph.adjacency"));
  } else {
    if (!j.contains("n") || !j.contains("edges")) detail::schema_error("graph needs 'n' and 'edges'");
    const auto n = j.at("n").get<std::size_t>();
    if (n == 0) detail::schema_error("graph.n must be positive");
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() < 2 || e.size() > 3) detail::schema_error("edge must be [i, j] or [i, j, w]");
      const auto u = e[0].get<std::size_t>();
      const auto v = e[1].get<std::size_t>();
      if (u >= n || v >= n || u == v) detail::schema_error("edge endpoint out of range or self loop");
      const double w = e.size() == 3 ? e[2].get<double>() : 1.0;
      a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = w;
      a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = w;
    }
    g = Graph(std::move(a));
  }
  if (j.contains("leader_weights")) {
    return LeaderFollowerGraph(g, detail::vector_from_json(j.at("leader_weights"), "leader_weights"));
  }
  if (j.contains("leader_links")) {
    Vector links = Vector::Zero(static_cast<Eigen::Index>(g.n_nodes()));
    for (const auto& i : j.at("leader_links")) {
      const auto k = i.get<std::size_t>();
      if (k >= g.n_nodes()) detail::schema_error("leader link out of range");
      links(static_cast<Eigen::Index>(k)) = 1.0;
    }
    return LeaderFollowerGraph(g, links);
  }
  return g;
}

inline json graph_to_json(const Topology& topo) {
  const Graph& g = std::holds_alternative<Graph>(topo) ? std::get<Graph>(topo)
                                                       : std::get<LeaderFollowerGraph>(topo).followers();
  const Matrix& a = g.adjacency();
  json out;
  out["n"] = g.n_nodes();
  json edges = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = i + 1; k < a.cols(); ++k) {
      if (a(i, k) == 0.0) continue;
      if (a(i, k) == 1.0) edges.push_back({i, k});
      else edges.push_back({i, k, a(i, k)});
    }
  out["edges"] = std::move(edges);
  if (const auto* lf = std::get_if<LeaderFollowerGraph>(&topo)) {
    const Vector& w = lf->leader_links();
    const bool binary = ((w.array() == 0.0) || (w.array() == 1.0)).all();
    if (binary) {
      json links = json::array();
      for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w(i) != 0.0) links.push_back(i);
      out["leader_links"] = std::move(links);
    } else {
      out["leader_weights"] = detail::vector_to_json(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gains

inline json gains_to_json(const GainSet& g) {
  json out;
  out[g.epsilon ? "Q" : "P"] = detail::matrix_to_json(g.P);
  out["K"] = detail::matrix_to_json(g.K);
  out["Gamma"] = detail::matrix_to_json(g.Gamma);
  out["alpha"] = g.alpha;
  out["lmi_margin"] = g.lmi_margin;
  if (g.epsilon) out["epsilon"] = *g.epsilon;
  if (g.coupling.leader_follower) {
    out["coupling"] = {{"c1", g.coupling.c1}, {"c2", g.coupling.c2}};
  } else {
    out["coupling"] = {{"c", g.coupling.c}};
  }
  return out;
}

inline GainSet gains_from_json(const json& j) {
  GainSet g;
  if (j.contains("P")) g.P = detail::matrix_from_json(j.at("P"), "gains.P");
  else if (j.contains("Q")) g.P = detail::matrix_from_json(j.at("Q"), "gains.Q");
  else detail::schema_error("gains need 'P' (or 'Q')");
  if (!j.contains("K")) detail::schema_error("gains need 'K'");
  g.K = detail::matrix_from_json(j.at("K"), "gains.K", Eigen::Index{1});
  g.Gamma = j.contains("Gamma") ? detail::matrix_from_json(j.at("Gamma"), "gains.Gamma")
                                : gamma_from_gain(g.K);
  g.alpha = detail::get_or(j, "alpha", 0.0);
  g.lmi_margin = detail::get_or(j, "lmi_margin", 0.0);
  if (j.contains("epsilon")) g.epsilon = j.at("epsilon").get<double>();
  const json c = j.value("coupling", json::object());
  if (c.contains("c1") || c.contains("c2")) {
    g.coupling.leader_follower = true;
    g.coupling.c1 = detail::get_or(c, "c1", 0.0);
    g.coupling.c2 = detail::get_or(c, "c2", 0.0);
  } else {
    g.coupling.c = detail::get_or(c, "c", 0.0);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Scenario description. A ScenarioSpec is the declarative, serialisable form;
// resolve() draws every seeded quantity and fills in gains, and build() turns
// a resolved spec into a runnable Scenario.

struct UncertaintySpec {
  /// none | mass_spring | chua | constant
  std::string generator = "none";
  std::vector<double> spring_constants;  // mass_spring
  double k_max = 5.0;
  double chua_a = 9.0;                   // chua
  double chua_m0_1 = -0.75;
  std::vector<double> m1;
  std::vector<double> m2;
  std::vector<double> magnitudes;        // constant: ||f_i|| = d_i
  std::optional<LinearBound> declared;   // overrides the generator's bound
};

struct LeaderInputSpec {
  /// none | sinusoid | chua
  std::string kind = "none";
  std::optional<double> gamma;
  double chua_a = 9.0;
  double chua_m0_1 = -0.75;
  double chua_m0_2 = -4.0 / 3.0;
};

struct ScenarioSpec {
  Topology graph;
  AgentDynamics dynamics;
  UncertaintySpec uncertainty;
  std::vector<double> upsilon;  // empty: no non-matching disturbance
  LeaderInputSpec leader_input;
  ProtocolConfig protocol;
  double coupling_multiplier = 1.0;
  std::optional<double> synthesis_epsilon;
  std::optional<GainSet> gains;
  double t_final = 20.0;
  double h = 1e-3;
  std::uint64_t seed = 1;
  int record_stride = 1;
  std::vector<Vector> x0;  // drawn from x0_range when empty
  std::pair<double, double> x0_range{-1.0, 1.0};
  std::optional<Vector> leader_x0;
  std::optional<AdaptiveState> adaptive0;

  std::size_t n_agents() const {
    if (const auto* g = std::get_if<Graph>(&graph)) return g->n_nodes();
    return std::get<LeaderFollowerGraph>(graph).n_followers();
  }
  bool has_leader() const { return std::holds_alternative<LeaderFollowerGraph>(graph); }
};

inline ScenarioSpec scenario_from_json(const json& j) {
  using detail::get_or;
  if (!j.is_object()) detail::schema_error("scenario must be a JSON object");
  for (const char* key : {"graph", "dynamics", "protocol"})
    if (!j.contains(key)) detail::schema_error(std::string("scenario is missing '") + key + "'");
  ScenarioSpec s;
  try {
    s.graph = graph_from_json(j.at("graph"));
    const json& dj = j.at("dynamics");
    if (!dj.contains("A") || !dj.contains("B")) detail::schema_error("dynamics needs 'A' and 'B'");
    const Matrix a = detail::matrix_from_json(dj.at("A"), "dynamics.A");
    s.dynamics = {a, detail::matrix_from_json(dj.at("B"), "dynamics.B", a.rows())};
    const std::size_t n_agents = s.n_agents();

    if (j.contains("uncertainty")) {
      const json& u = j.at("uncertainty");
      auto& us = s.uncertainty;
      us.generator = get_or<std::string>(u, "generator", "none");
      us.spring_constants = get_or<std::vector<double>>(u, "spring_constants", {});
      us.k_max = get_or(u, "k_max", us.k_max);
      us.chua_a = get_or(u, "a", us.chua_a);
      us.chua_m0_1 = get_or(u, "m0_1", us.chua_m0_1);
      us.m1 = get_or<std::vector<double>>(u, "m1", {});
      us.m2 = get_or<std::vector<double>>(u, "m2", {});
      if (u.contains("magnitudes")) {
        const Vector m = detail::per_agent(u.at("magnitudes"), n_agents, "uncertainty.magnitudes");
        us.magnitudes.assign(m.data(), m.data() + m.size());
      }
      if (u.contains("bound")) {
        const json& b = u.at("bound");
        us.declared = LinearBound{get_or(b, "d", 0.0), get_or(b, "e", 0.0)};
      }
    }
    if (j.contains("non_matching") && !j.at("non_matching").is_null()) {
      const json& nm = j.at("non_matching");
      const Vector ups = detail::per_agent(nm.at("upsilon"), n_agents, "non_matching.upsilon");
      s.upsilon.assign(ups.data(), ups.data() + ups.size());
    }
    if (j.contains("leader_input") && !j.at("leader_input").is_null()) {
      const json& li = j.at("leader_input");
      auto& ls = s.leader_input;
      ls.kind = get_or<std::string>(li, "kind", "sinusoid");
      if (li.contains("gamma")) ls.gamma = li.at("gamma").get<double>();
      ls.chua_a = get_or(li, "a", ls.chua_a);
      ls.chua_m0_1 = get_or(li, "m0_1", ls.chua_m0_1);
      ls.chua_m0_2 = get_or(li, "m0_2", ls.chua_m0_2);
    }

    const json& pj = j.at("protocol");
    if (!pj.contains("kind")) detail::schema_error("protocol needs 'kind'");
    auto& pc = s.protocol;
    pc.kind = protocol_kind_from_string(pj.at("kind").get<std::string>());
    pc.kappa = get_or(pj, "kappa", 0.5);
    pc.tau = detail::per_agent(pj.value("tau", json(10.0)), n_agents, "protocol.tau");
    pc.eps_rates = detail::per_agent(pj.value("eps_rates", json(10.0)), n_agents, "protocol.eps_rates");
    pc.phi = detail::per_agent(pj.value("phi", json(0.05)), n_agents, "protocol.phi");
    pc.psi = detail::per_agent(pj.value("psi", json(0.05)), n_agents, "protocol.psi");
    pc.gamma = get_or(pj, "gamma", 0.0);
    s.coupling_multiplier = get_or(pj, "coupling_multiplier", 1.0);

    if (j.contains("synthesis") && j.at("synthesis").contains("epsilon"))
      s.synthesis_epsilon = j.at("synthesis").at("epsilon").get<double>();
    if (j.contains("gains") && !j.at("gains").is_null()) s.gains = gains_from_json(j.at("gains"));

    if (j.contains("sim")) {
      const json& sj = j.at("sim");
      s.t_final = get_or(sj, "t_final", s.t_final);
      s.h = get_or(sj, "h", s.h);
      s.seed = get_or<std::uint64_t>(sj, "seed", s.seed);
      s.record_stride = get_or(sj, "record_stride", s.record_stride);
    }
    if (j.contains("x0")) {
      const json& xj = j.at("x0");
      if (xj.is_object()) {
        const auto range = get_or<std::vector<double>>(xj, "uniform", {-1.0, 1.0});
        if (range.size() != 2 || !(range[0] < range[1])) detail::schema_error("x0.uniform must be [lo, hi]");
        s.x0_range = {range[0], range[1]};
      } else {
        for (const auto& xi : xj) s.x0.push_back(detail::vector_from_json(xi, "x0 entry"));
      }
    }
    if (j.contains("leader_x0")) s.leader_x0 = detail::vector_from_json(j.at("leader_x0"), "leader_x0");
    if (j.contains("adaptive0")) {
      const json& aj = j.at("adaptive0");
      s.adaptive0 = AdaptiveState{detail::per_agent(aj.at("d_bar"), n_agents, "adaptive0.d_bar"),
                                  detail::per_agent(aj.at("e_bar"), n_agents, "adaptive0.e_bar")};
    }
  } catch (const json::exception& e) {
    detail::schema_error(std::string("scenario schema: ") + e.what());
  }
  return s;
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json j;
  j["graph"] = graph_to_json(s.graph);
  j["dynamics"] = {{"A", detail::matrix_to_json(s.dynamics.A)},
                   {"B", detail::matrix_to_json(s.dynamics.B)}};
  const auto& us = s.uncertainty;
  json u = {{"generator", us.generator}};
  if (us.generator == "mass_spring") {
    if (us.spring_constants.empty()) u["k_max"] = us.k_max;
    else u["spring_constants"] = us.spring_constants;
  } else if (us.generator == "chua") {
    u["a"] = us.chua_a;
    u["m0_1"] = us.chua_m0_1;
    if (!us.m1.empty()) u["m1"] = us.m1;
    if (!us.m2.empty()) u["m2"] = us.m2;
  } else if (us.generator == "constant") {
    u["magnitudes"] = us.magnitudes;
  }
  if (us.declared) u["bound"] = {{"d", us.declared->d}, {"e", us.declared->e}};
  j["uncertainty"] = std::move(u);
  if (!s.upsilon.empty()) j["non_matching"] = {{"upsilon", s.upsilon}};
  if (s.leader_input.kind != "none") {
    const auto& ls = s.leader_input;
    json li = {{"kind", ls.kind}};
    if (ls.gamma) li["gamma"] = *ls.gamma;
    if (ls.kind == "chua") {
      li["a"] = ls.chua_a;
      li["m0_1"] = ls.chua_m0_1;
      li["m0_2"] = ls.chua_m0_2;
    }
    j["leader_input"] = std::move(li);
  }
  const auto& pc = s.protocol;
  j["protocol"] = {{"kind", std::string(to_string(pc.kind))},
                   {"kappa", pc.kappa},
                   {"tau", detail::vector_to_json(pc.tau)},
                   {"eps_rates", detail::vector_to_json(pc.eps_rates)},
                   {"phi", detail::vector_to_json(pc.phi)},
                   {"psi", detail::vector_to_json(pc.psi)},
                   {"gamma", pc.gamma},
                   {"coupling_multiplier", s.coupling_multiplier}};
  if (s.synthesis_epsilon) j["synthesis"] = {{"epsilon", *s.synthesis_epsilon}};
  if (s.gains) j["gains"] = gains_to_json(*s.gains);
  j["sim"] = {{"t_final", s.t_final}, {"h", s.h}, {"seed", s.seed}, {"record_stride", s.record_stride}};
  if (s.x0.empty()) {
    j["x0"] = {{"uniform", {s.x0_range.first, s.x0_range.second}}};
  } else {
    json xs = json::array();
    for (const auto& xi : s.x0) xs.push_back(detail::vector_to_json(xi));
    j["x0"] = std::move(xs);
  }
  if (s.leader_x0) j["leader_x0"] = detail::vector_to_json(*s.leader_x0);
  if (s.adaptive0)
    j["adaptive0"] = {{"d_bar", detail::vector_to_json(s.adaptive0->d_bar)},
                      {"e_bar", detail::vector_to_json(s.adaptive0->e_bar)}};
  return j;
}

/// Leader bound used for gains and the runtime monitor.
inline double leader_gamma(const ScenarioSpec& s) {
  const auto& ls = s.leader_input;
  if (ls.gamma) return *ls.gamma;
  if (ls.kind == "chua") return chua_leader_bound(ls.chua_a, ls.chua_m0_1, ls.chua_m0_2);
  return s.protocol.gamma;
}

/// Draws every seeded quantity (generator parameters, then leader x0, then
/// follower x0, matching the scenario builders) and synthesises gains when
/// they are absent and `auto_synthesize` is set.
inline ScenarioSpec resolve(ScenarioSpec s, bool auto_synthesize) {
  ScenarioRng rng(s.seed);
  const std::size_t n_agents = s.n_agents();
  const Eigen::Index n = s.dynamics.n();
  auto& us = s.uncertainty;
  if (us.generator == "mass_spring" && us.spring_constants.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i) us.spring_constants.push_back(rng.uniform(0.0, us.k_max));
  } else if (us.generator == "chua" && us.m1.empty() && us.m2.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      us.m1.push_back(rng.uniform(-6.0, 0.0));
      us.m2.push_back(rng.uniform(-6.0, 0.0));
    }
  }
  if (s.has_leader() && !s.leader_x0) s.leader_x0 = rng.uniform_vector(n, s.x0_range.first, s.x0_range.second);
  if (s.x0.empty()) {
    for (std::size_t i = 0; i < n_agents; ++i)
      s.x0.push_back(rng.uniform_vector(n, s.x0_range.first, s.x0_range.second));
  }
  if (!s.adaptive0) {
    const auto na = static_cast<Eigen::Index>(n_agents);
    s.adaptive0 = AdaptiveState{Vector::Zero(na), Vector::Zero(na)};
  }
  if (s.has_leader()) {
    const double gamma = leader_gamma(s);
    if (s.leader_input.kind != "none") s.leader_input.gamma = gamma;
    if (s.protocol.gamma == 0.0) s.protocol.gamma = gamma;
  }
  if (!s.gains) {
    if (!auto_synthesize)
      throw Error(ErrorKind::InvalidArgument, "scenario has no gains; pass --auto-synthesize");
    if (const auto* g = std::get_if<Graph>(&s.graph)) {
      s.gains = leaderless_gains(s.dynamics, *g, s.synthesis_epsilon, s.coupling_multiplier);
    } else {
      s.gains = leader_follower_gains(s.dynamics, std::get<LeaderFollowerGraph>(s.graph),
                                      s.protocol.gamma, s.coupling_multiplier);
    }
  }
  return s;
}

/// Runnable scenario from a resolved spec.
inline Scenario build(const ScenarioSpec& spec) {
  if (!spec.gains) throw Error(ErrorKind::InvalidArgument, "scenario is not resolved (no gains)");
  Scenario s;
  s.graph = spec.graph;
  s.dynamics = spec.dynamics;
  const std::size_t n_agents = spec.n_agents();
  const Eigen::Index p = s.dynamics.p();
  const auto& us = spec.uncertainty;
  for (std::size_t i = 0; i < n_agents; ++i) {
    UncertaintyModel unc;
    if (us.generator == "none") {
      unc.bound = ConstantBound{0.0};
    } else if (us.generator == "mass_spring") {
      if (us.spring_constants.size() != n_agents)
        throw Error(ErrorKind::InvalidArgument, "need one spring constant per agent");
      if (p != 1 || s.dynamics.n() < 1)
        throw Error(ErrorKind::InvalidArgument, "mass_spring generator needs a single input");
      const double k = us.spring_constants[i];
      unc.f = [k](const Vector& x, double) { return Vector::Constant(1, -k * x(0)); };
      unc.bound = LinearBound{0.0, k};
    } else if (us.generator == "chua") {
      if (us.m1.size() != n_agents || us.m2.size() != n_agents)
        throw Error(ErrorKind::InvalidArgument, "need m1 and m2 for every follower");
      if (p != 1) throw Error(ErrorKind::InvalidArgument, "chua generator needs a single input");
      const double a = us.chua_a;
      const double m01 = us.chua_m0_1;
      const double mi1 = us.m1[i];
      const double mi2 = us.m2[i];
      unc.f = [a, m01, mi1, mi2](const Vector& x, double) {
        return Vector::Constant(1, a * (m01 - mi1) * x(0) + 0.5 * a * (mi1 - mi2) * chua_saturation(x(0)));
      };
      unc.bound = LinearBound{6.0 * a, a * std::max(6.0 + m01, -m01)};
    } else if (us.generator == "constant") {
      if (us.magnitudes.size() != n_agents)
        throw Error(ErrorKind::InvalidArgument, "need one magnitude per agent");
      const double d = us.magnitudes[i];
      unc.f = [d, p](const Vector&, double) {
        return Vector::Constant(p, d / std::sqrt(static_cast<double>(p)));
      };
      unc.bound = ConstantBound{d};
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown uncertainty generator '" + us.generator + "'");
    }
    if (us.declared) unc.bound = *us.declared;
    s.uncertainties.push_back(std::move(unc));
  }
  if (!spec.upsilon.empty()) {
    const Eigen::Index n = s.dynamics.n();
    for (double ups : spec.upsilon) {
      s.non_matching.push_back({[ups, n](double t) {
                                  Vector w(n);
                                  for (Eigen::Index k = 0; k < n; ++k) w(k) = k % 2 == 0 ? std::sin(t) : std::cos(t);
                                  return Vector(w * (ups / std::sqrt(static_cast<double>(n))));
                                },
                                ups});
    }
  }
  const auto& ls = spec.leader_input;
  if (spec.has_leader() && ls.kind != "none") {
    const double gamma = leader_gamma(spec);
    if (ls.kind == "sinusoid") {
      s.leader_input = LeaderInput{[gamma, p](double t, const Vector&) {
                                     return Vector::Constant(p, gamma * std::sin(t) / std::sqrt(static_cast<double>(p)));
                                   },
                                   gamma};
    } else if (ls.kind == "chua") {
      if (p != 1) throw Error(ErrorKind::InvalidArgument, "chua leader input needs a single input");
      const double a = ls.chua_a;
      const double dm = ls.chua_m0_1 - ls.chua_m0_2;
      s.leader_input = LeaderInput{[a, dm](double, const Vector& x0) {
                                     return Vector::Constant(1, 0.5 * a * dm * chua_saturation(x0(0)));
                                   },
                                   gamma};
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown leader input kind '" + ls.kind + "'");
    }
  }
  s.protocol = spec.protocol;
  s.gains = *spec.gains;
  s.x0 = spec.x0;
  if (spec.leader_x0) s.leader_x0 = *spec.leader_x0;
  if (spec.adaptive0) s.adaptive0 = *spec.adaptive0;
  s.t_final = spec.t_final;
  s.h = spec.h;
  s.seed = spec.seed;
  s.record_stride = spec.record_stride;
  validate_scenario(s);
  return s;
}

// ---------------------------------------------------------------------------
// Paper example specs (the declarative twins of build_mass_spring_scenario
// and build_chua_scenario).

inline ScenarioSpec mass_spring_spec(ProtocolKind kind = ProtocolKind::AdaptiveLeaderless) {
  ScenarioSpec s;
  s.graph = example_leaderless_graph();
  s.dynamics = mass_spring_dynamics(2.5);
  s.uncertainty.generator = "mass_spring";
  s.protocol = ProtocolConfig::uniform(kind, 6, 0.5, 10.0, 10.0, 0.05, 0.05);
  s.t_final = 20.0;
  s.h = 1e-3;
  s.seed = 1;
  return s;
}

inline ScenarioSpec chua_spec() {
  ScenarioSpec s;
  s.graph = example_leader_follower_graph();
  s.dynamics = chua_dynamics(9.0, 18.0, -0.75);
  s.uncertainty.generator = "chua";
  s.leader_input.kind = "chua";
  s.protocol = ProtocolConfig::uniform(ProtocolKind::AdaptiveLeaderFollower, 6, 0.5, 5.0, 5.0, 0.05, 0.05);
  s.t_final = 30.0;
  s.h = 5e-4;
  s.seed = 1;
  return s;
}

// ---------------------------------------------------------------------------
// Trajectory CSV: t, x[i][k], x0[k] (leader-follower only), u[i][k], dbar[i],
// ebar[i], xi_norm. Controls are sampled at the pre-step state; xi_norm holds
// ||zeta|| for leader-follower runs. Doubles are written with 17 significant
// digits.

inline std::vector<std::string> csv_header(std::size_t n_agents, Eigen::Index n, Eigen::Index p,
                                           bool leader) {
  std::vector<std::string> cols{"t"};
  for (std::size_t i = 0; i < n_agents; ++i)
    for (Eigen::Index k = 0; k < n; ++k)
      cols.push_back("x[" + std::to_string(i) + "][" + std::to_string(k) + "]");
  if (leader)
    for (Eigen::Index k = 0; k < n; ++k) cols.push_back("x0[" + std::to_string(k) + "]");
  for (std::size_t i = 0; i < n_agents; ++i)
    for (Eigen::Index k = 0; k < p; ++k)
      cols.push_back("u[" + std::to_string(i) + "][" + std::to_string(k) + "]");
  for (std::size_t i = 0; i < n_agents; ++i) cols.push_back("dbar[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < n_agents; ++i) cols.push_back("ebar[" + std::to_string(i) + "]");
  cols.push_back("xi_norm");
  return cols;
}

namespace detail {

inline void put_double(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace detail

inline std::string trajectory_to_csv(const Trajectory& traj, std::size_t n_agents, Eigen::Index n,
                                     Eigen::Index p) {
  const bool leader = !traj.leader_states.empty();
  std::string out;
  const auto cols = csv_header(n_agents, n, p, leader);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    detail::put_double(out, traj.times[k]);
    auto emit = [&out](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        out += ',';
        detail::put_double(out, v(i));
      }
    };
    emit(traj.states[k]);
    if (leader) emit(traj.leader_states[k]);
    emit(traj.controls[k]);
    emit(traj.d_bar[k]);
    emit(traj.e_bar[k]);
    out += ',';
    detail::put_double(out, traj.error_norm[k]);
    out += '\n';
  }
  return out;
}

/// Parses a trajectory CSV and checks its header against the scenario
/// dimensions (SchemaMismatch otherwise).
inline Trajectory trajectory_from_csv(std::istream& in, std::size_t n_agents, Eigen::Index n,
                                      Eigen::Index p, bool leader) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, "empty trajectory CSV");
  const auto expected = csv_header(n_agents, n, p, leader);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header != expected)
    throw Error(ErrorKind::SchemaMismatch,
                "CSV header does not match the scenario (expected " + std::to_string(expected.size()) +
                    " columns, found " + std::to_string(header.size()) + ")");
  const auto na = static_cast<Eigen::Index>(n_agents);
  Trajectory traj;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> vals;
    vals.reserve(expected.size());
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::SchemaMismatch, "bad number on CSV row " + std::to_string(row));
      }
    }
    if (vals.size() != expected.size())
      throw Error(ErrorKind::SchemaMismatch, "wrong column count on CSV row " + std::to_string(row));
    std::size_t c = 0;
    auto take = [&](Eigen::Index len) {
      Vector v(len);
      for (Eigen::Index i = 0; i < len; ++i) v(i) = vals[c++];
      return v;
    };
    traj.times.push_back(vals[c++]);
    traj.states.push_back(take(na * n));
    if (leader) traj.leader_states.push_back(take(n));
    traj.controls.push_back(take(na * p));
    traj.d_bar.push_back(take(na));
    traj.e_bar.push_back(take(na));
    traj.error_norm.push_back(vals[c++]);
  }
  if (traj.times.empty()) throw Error(ErrorKind::SchemaMismatch, "trajectory CSV has no rows");
  return traj;
}

// ---------------------------------------------------------------------------
// Reports and manifests

inline json monitors_to_json(const std::vector<MonitorReport>& monitors) {
  json out = json::array();
  for (const auto& m : monitors) {
    json mj = {{"name", m.name},
               {"checks", m.checks},
               {"violations", m.violations},
               {"worst_ratio", m.worst_ratio}};
    if (m.violations > 0) {
      mj["first_violation_t"] = m.first_violation_t;
      mj["first_violation_agent"] = m.first_violation_agent;
    }
    out.push_back(std::move(mj));
  }
  return out;
}

inline json report_to_json(const ResidualReport& r, const std::vector<MonitorReport>& monitors) {
  json out;
  out["bound_id"] = std::string(to_string(r.bound_id));
  out["bound_value"] = r.bound_value;
  out["metric"] = r.metric;
  out["entry_time"] = r.entry_time ? json(*r.entry_time) : json(nullptr);
  out["envelope_ok"] = r.envelope_ok;
  out["max_violation"] = r.max_violation;
  out["pass"] = r.pass;
  out["tolerances"] = {{"bound_rel", kBoundTolRel},
                       {"envelope_rel", kEnvelopeTolRel},
                       {"envelope_abs", kEnvelopeTolAbs},
                       {"settle_fraction", kSettleFraction},
                       {"comparison", "metric <= bound * (1 + bound_rel)"}};
  out["assumption_monitors"] = monitors_to_json(monitors);
  return out;
}

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string scenario_path;
  std::string output_dir;
  std::string command;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  std::uint64_t resolved_seed = 0;
  std::optional<double> h;
  bool auto_synthesize = false;
  std::optional<double> coupling_multiplier;
};

inline json manifest_to_json(const RunManifest& m) {
  json out = {{"scenario_path", m.scenario_path},
              {"output_dir", m.output_dir},
              {"command", m.command},
              {"tool_version", m.tool_version},
              {"timestamp", m.timestamp},
              {"resolved_seed", m.resolved_seed},
              {"auto_synthesize", m.auto_synthesize}};
  out["h"] = m.h ? json(*m.h) : json(nullptr);
  out["coupling_multiplier"] = m.coupling_multiplier ? json(*m.coupling_multiplier) : json(nullptr);
  return out;
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.scenario_path = j.at("scenario_path").get<std::string>();
    m.output_dir = j.value("output_dir", std::string());
    m.command = j.value("command", std::string("simulate"));
    m.tool_version = j.value("tool_version", std::string(kToolVersion));
    m.timestamp = j.value("timestamp", std::string());
    m.resolved_seed = j.at("resolved_seed").get<std::uint64_t>();
    m.auto_synthesize = j.value("auto_synthesize", false);
    if (j.contains("h") && !j.at("h").is_null()) m.h = j.at("h").get<double>();
    if (j.contains("coupling_multiplier") && !j.at("coupling_multiplier").is_null())
      m.coupling_multiplier = j.at("coupling_multiplier").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("manifest schema: ") + e.what());
  }
  return m;
}

}  // namespace consensus::io
