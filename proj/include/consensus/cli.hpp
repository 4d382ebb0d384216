#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/io.hpp"
#include "consensus/metrics.hpp"
#include "consensus/simulation.hpp"
#include "consensus/synthesis.hpp"

namespace consensus::cli {

/// Process exit codes; a stable contract for scripts.
enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kInfeasible = 2,
  kDivergence = 3,
  kVerificationFailed = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotStabilizable:
    case ErrorKind::NotControllable:
    case ErrorKind::FeasibilityCheckFailed:
    case ErrorKind::InfeasibleP:
    case ErrorKind::SingularP:
    case ErrorKind::NumericalFailure:
      return kInfeasible;
    case ErrorKind::NonFiniteState:
      return kDivergence;
    default:
      return kInputError;
  }
}

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

/// Runs `body`, mapping library errors onto exit codes with a one-line
/// diagnostic on `err`.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const io::json::exception& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synthesize

struct SynthesizeOptions {
  std::string input;
  std::optional<double> epsilon;
  double coupling_multiplier = 1.0;
};

/// Accepts a bare {"A", "B"} object, {"dynamics": {...}} or a full scenario.
/// When a graph is present the coupling gains are included.
inline int cmd_synthesize(const SynthesizeOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    const io::json j = io::read_json_file(opt.input);
    const io::json& dj = j.contains("dynamics") ? j.at("dynamics") : j;
    if (!dj.contains("A") || !dj.contains("B"))
      throw Error(ErrorKind::InvalidArgument, "input needs dynamics 'A' and 'B'");
    const Matrix a = io::detail::matrix_from_json(dj.at("A"), "A");
    const AgentDynamics dyn{a, io::detail::matrix_from_json(dj.at("B"), "B", a.rows())};
    std::optional<double> eps = opt.epsilon;
    if (!eps && j.contains("synthesis") && j.at("synthesis").contains("epsilon"))
      eps = j.at("synthesis").at("epsilon").get<double>();

    GainSet gains;
    if (j.contains("graph") && j.contains("protocol")) {
      io::ScenarioSpec spec = io::scenario_from_json(j);
      spec.gains.reset();
      spec.synthesis_epsilon = eps;
      spec.coupling_multiplier = opt.coupling_multiplier;
      gains = *io::resolve(spec, true).gains;
    } else {
      gains = synthesize_gains(dyn, eps);
    }
    io::json report = io::gains_to_json(gains);
    if (!j.contains("graph")) report.erase("coupling");
    report["feasible"] = gains.lmi_margin < 0.0;
    out << report.dump(2) << '\n';
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string scenario;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> h;
  bool auto_synthesize = false;
  std::optional<double> coupling_multiplier;
  std::string manifest;  // re-run from a previous manifest when set
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kResolvedScenarioFile = "scenario.resolved.json";
inline constexpr const char* kTrajectoryFile = "trajectory.csv";

/// Writes manifest.json (first), scenario.resolved.json and trajectory.csv
/// into the output directory. A partial trajectory is still written when
/// the run diverges (exit 3) or a declared bound is exceeded (exit 1).
inline int cmd_simulate(SimulateOptions opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    if (!opt.manifest.empty()) {
      const io::RunManifest m = io::manifest_from_json(io::read_json_file(opt.manifest));
      opt.scenario = m.scenario_path;
      opt.seed = m.resolved_seed;
      opt.h = m.h;
      opt.auto_synthesize = m.auto_synthesize;
      opt.coupling_multiplier = m.coupling_multiplier;
    }
    io::ScenarioSpec spec = io::scenario_from_json(io::read_json_file(opt.scenario));
    if (opt.seed) spec.seed = *opt.seed;
    if (opt.h) spec.h = *opt.h;
    if (opt.coupling_multiplier) spec.coupling_multiplier = *opt.coupling_multiplier;

    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    io::RunManifest manifest;
    manifest.scenario_path = std::filesystem::absolute(opt.scenario).string();
    manifest.output_dir = std::filesystem::absolute(dir).string();
    manifest.command = "simulate";
    manifest.timestamp = detail::utc_timestamp();
    manifest.resolved_seed = spec.seed;
    manifest.h = opt.h;
    manifest.auto_synthesize = opt.auto_synthesize;
    manifest.coupling_multiplier = opt.coupling_multiplier;
    io::write_text_file((dir / kManifestFile).string(), io::manifest_to_json(manifest).dump(2) + "\n");

    const io::ScenarioSpec resolved = io::resolve(spec, opt.auto_synthesize);
    io::write_text_file((dir / kResolvedScenarioFile).string(),
                        io::scenario_to_json(resolved).dump(2) + "\n");
    const Scenario scenario = io::build(resolved);
    const Trajectory traj = simulate(scenario);
    io::write_text_file((dir / kTrajectoryFile).string(),
                        io::trajectory_to_csv(traj, scenario.n_agents(), scenario.dynamics.n(),
                                              scenario.dynamics.p()));

    io::json summary = {{"status", std::string(to_string(traj.status))},
                        {"samples", traj.times.size()},
                        {"t_end", traj.times.empty() ? 0.0 : traj.times.back()},
                        {"final_error_norm", traj.error_norm.empty() ? 0.0 : traj.error_norm.back()},
                        {"trajectory", (dir / kTrajectoryFile).string()},
                        {"assumption_monitors", io::monitors_to_json(traj.monitors)}};
    if (!traj.diagnostic.empty()) summary["diagnostic"] = traj.diagnostic;
    out << summary.dump(2) << '\n';
    switch (traj.status) {
      case RunStatus::Completed: return kOk;
      case RunStatus::Diverged:
        err << "error: divergence: " << traj.diagnostic << '\n';
        return kDivergence;
      case RunStatus::AssumptionViolated:
        err << "error: declared bound exceeded: " << traj.diagnostic << '\n';
        return kInputError;
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::string trajectory;
  std::string scenario;
  std::string bound = "D1";
  std::string report;  // also written here when set
  double settle_fraction = kSettleFraction;
};

/// Verdict for a stored trajectory against one residual set. The scenario
/// is resolved the same way simulate resolves it, so either the original
/// file or the scenario.resolved.json written next to the CSV may be given.
inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    const BoundId id = bound_id_from_string(opt.bound);
    const io::ScenarioSpec spec =
        io::resolve(io::scenario_from_json(io::read_json_file(opt.scenario)), true);
    const Scenario scenario = io::build(spec);
    std::ifstream in(opt.trajectory);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + opt.trajectory + "'");
    Trajectory traj = io::trajectory_from_csv(in, scenario.n_agents(), scenario.dynamics.n(),
                                              scenario.dynamics.p(), scenario.has_leader());
    const bool complete = traj.times.back() >= scenario.t_final - 0.5 * scenario.h;
    if (!complete) traj.status = RunStatus::Diverged;
    const auto monitors = evaluate_monitors(scenario, traj);
    ResidualReport report;
    try {
      report = verify_trajectory(scenario, traj, id, opt.settle_fraction);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::PreconditionViolated || e.kind() == ErrorKind::SchemaMismatch)
        throw Error(ErrorKind::SchemaMismatch, e.message());
      throw;
    }
    bool monitors_ok = true;
    for (const auto& m : monitors) monitors_ok = monitors_ok && m.violations == 0;
    io::json j = io::report_to_json(report, monitors);
    j["trajectory_complete"] = complete;
    j["pass"] = report.pass && monitors_ok && complete;
    const std::string text = j.dump(2) + "\n";
    out << text;
    if (!opt.report.empty()) io::write_text_file(opt.report, text);
    return j["pass"].get<bool>() ? kOk : kVerificationFailed;
  });
}

// ---------------------------------------------------------------------------
// demo

struct DemoRow {
  std::string scenario;
  std::string protocol;
  BoundId bound;
  ResidualReport report;
  RunStatus status;
  double final_error = 0.0;
};

/// The two paper examples end to end, plus the static and non-matching
/// mass-spring variants, printed as a table.
inline std::vector<DemoRow> run_demo() {
  struct Case {
    std::string name;
    io::ScenarioSpec spec;
    BoundId bound;
  };
  std::vector<Case> cases;
  {
    io::ScenarioSpec s = io::mass_spring_spec(ProtocolKind::StaticLeaderless);
    cases.push_back({"mass-spring", s, BoundId::D1});
  }
  {
    io::ScenarioSpec s = io::mass_spring_spec(ProtocolKind::AdaptiveLeaderless);
    s.t_final = 30.0;
    cases.push_back({"mass-spring", s, BoundId::D2});
  }
  {
    io::ScenarioSpec s = io::mass_spring_spec(ProtocolKind::StaticLeaderless);
    s.upsilon.assign(6, 0.5);
    s.synthesis_epsilon = 2.0;
    cases.push_back({"mass-spring + omega", s, BoundId::D7});
  }
  cases.push_back({"chua", io::chua_spec(), BoundId::D5});

  std::vector<DemoRow> rows;
  for (const auto& c : cases) {
    const Scenario s = io::build(io::resolve(c.spec, true));
    const Trajectory t = simulate(s);
    DemoRow row{c.name, std::string(to_string(s.protocol.kind)), c.bound, {}, t.status,
                t.error_norm.empty() ? 0.0 : t.error_norm.back()};
    row.report = verify_trajectory(s, t, c.bound);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline int cmd_demo(std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    const auto rows = run_demo();
    out << std::left << std::setw(22) << "scenario" << std::setw(26) << "protocol" << std::setw(6)
        << "set" << std::setw(14) << "bound" << std::setw(14) << "final |err|" << std::setw(10)
        << "envelope" << "verdict\n";
    bool all = true;
    for (const auto& r : rows) {
      all = all && r.report.pass;
      std::ostringstream bound;
      bound << std::setprecision(6) << r.report.bound_value;
      std::ostringstream fin;
      fin << std::setprecision(6) << r.final_error;
      out << std::left << std::setw(22) << r.scenario << std::setw(26) << r.protocol << std::setw(6)
          << to_string(r.bound) << std::setw(14) << bound.str() << std::setw(14) << fin.str()
          << std::setw(10) << (r.report.envelope_ok ? "ok" : "violated")
          << (r.report.pass ? "pass" : "FAIL") << '\n';
    }
    return all ? kOk : kVerificationFailed;
  });
}

}  // namespace consensus::cli
