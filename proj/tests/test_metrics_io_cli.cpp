#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "consensus/cli.hpp"
#include "consensus/io.hpp"
#include "consensus/metrics.hpp"

using namespace consensus;
namespace fs = std::filesystem;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::string scenario_path(const std::string& name) {
  return std::string(CONSENSUS_SCENARIO_DIR) + "/" + name;
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() /
                       ("consensus_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliRun {
  int code = -1;
  std::string out;
};

/// Runs the CLI binary with stdout captured to a file.
CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = std::string(CONSENSUS_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t csv_columns(const fs::path& p) {
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  return static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
}

BoundInputs d1_inputs() {
  BoundInputs in;
  in.n_agents = 2;
  in.kappa = 0.5;
  in.lambda_max_p = std::sqrt(2.0);
  in.alpha = std::sqrt(2.0);
  in.graph_eig = 2.0;
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// consensus errors and Lyapunov functionals

TEST(ConsensusError, Examples) {
  EXPECT_LT((consensus_error(vec({1, 3}), 1) - vec({-1, 1})).norm(), 1e-15);
  EXPECT_LT((consensus_error(vec({0, 0, 3}), 1) - vec({-1, -1, 2})).norm(), 1e-15);
  EXPECT_LT(consensus_error(vec({2, 5, 2, 5, 2, 5}), 2).norm(), 1e-14);
  EXPECT_THROW(consensus_error(vec({1, 2, 3}), 2), Error);
}

TEST(ConsensusError, TwoWaysAgree) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n_agents = 2 + trial % 7, n = 1 + trial % 3;
    Vector x(n_agents * n);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
    Vector mean = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n_agents; ++i) mean += x.segment(i * n, n);
    mean /= static_cast<double>(n_agents);
    Vector direct(x.size());
    for (Eigen::Index i = 0; i < n_agents; ++i) direct.segment(i * n, n) = x.segment(i * n, n) - mean;
    const Vector xi = consensus_error(x, n);
    EXPECT_LT((xi - direct).norm(), 1e-12 * (1.0 + x.norm()));
    Vector sum = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n_agents; ++i) sum += xi.segment(i * n, n);
    EXPECT_LT(sum.norm(), 1e-12 * (1.0 + x.norm()));
  }
}

TEST(LeaderFollowerError, Examples) {
  EXPECT_EQ(lf_consensus_error(vec({1, 2, 1, 2}), vec({1, 2})).norm(), 0.0);
  const Vector zeta = lf_consensus_error(vec({1, 0, 3, 4}), vec({0, 0}));
  EXPECT_EQ(zeta.head(2), vec({1, 0}));
  EXPECT_EQ(zeta.tail(2), vec({3, 4}));
  const Vector x = vec({0.3, -1.2, 4.0}), x0 = vec({0.5}), c = vec({2.0, 2.0, 2.0});
  EXPECT_LT((lf_consensus_error(x + c, x0 + vec({2.0})) - lf_consensus_error(x, x0)).norm(), 1e-15);
}

TEST(LyapunovV1, Examples) {
  const Matrix l = laplacian(Graph::path(2));
  const Matrix p = Matrix::Identity(1, 1);
  EXPECT_EQ(lyapunov_v1(vec({0, 0}), l, p), 0.0);
  EXPECT_DOUBLE_EQ(lyapunov_v1(vec({-1, 1}), l, p), 2.0);
  // lower bound lambda2/(2 lmax(P)) ||xi||^2 with lambda2 = 2 holds with equality
  EXPECT_DOUBLE_EQ(2.0 / 2.0 * 2.0, lyapunov_v1(vec({-1, 1}), l, p));
}

TEST(LyapunovV1, LowerBoundOnCenteredVectors) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Graph g = example_leaderless_graph();
  const Matrix l = laplacian(g);
  const double lambda2 = spectrum(g).lambda2;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix r(2, 2);
    r << u(rng), u(rng), u(rng), u(rng);
    const Matrix p = r * r.transpose() + 0.1 * Matrix::Identity(2, 2);
    const double lmax = linalg::sym_eigenvalues(p).maxCoeff();
    Vector x(12);
    for (Eigen::Index i = 0; i < 12; ++i) x(i) = 3.0 * u(rng);
    const Vector xi = consensus_error(x, 2);
    EXPECT_GE(lyapunov_v1(xi, l, p), lambda2 / (2.0 * lmax) * xi.squaredNorm() * (1.0 - 1e-12));
  }
}

TEST(LyapunovV2, Examples) {
  const Matrix l = laplacian(Graph::path(2));
  const Matrix p = Matrix::Identity(1, 1);
  const Vector tau = vec({10, 10}), eps = vec({10, 10}), e = vec({0.3, 0.4});
  EXPECT_EQ(lyapunov_v2(vec({0, 0}), l, p, {vec({2, 2}), e}, 2.0, e, tau, eps), 0.0);
  const AdaptiveState one{vec({1.0}), vec({0.0})};
  EXPECT_NEAR(adaptive_energy(one, 2.0, vec({0.0}), vec({10.0}), vec({10.0})), 0.05, 1e-15);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector xi = vec({u(rng) - 1.5, 0.0});
    const AdaptiveState st{vec({u(rng), u(rng)}), vec({u(rng), u(rng)})};
    EXPECT_GE(lyapunov_v2(xi, l, p, st, u(rng), e, tau, eps), lyapunov_v1(xi, l, p));
  }
}

// ---------------------------------------------------------------------------
// residual bounds

TEST(ResidualBound, D1Example) {
  EXPECT_NEAR(residual_bound(BoundId::D1, d1_inputs()), 1.0, 1e-14);
}

TEST(ResidualBound, D7Example) {
  BoundInputs in;
  in.n_agents = 1;
  in.kappa = 0.5;
  in.epsilon = 2.0;
  in.lambda_max_p = in.lambda_min_p = 1.0;
  in.graph_eig = in.lambda_max_l = 2.0;
  in.upsilon = vec({1.0});
  EXPECT_NEAR(residual_bound(BoundId::D7, in), 1.5, 1e-14);
}

TEST(ResidualBound, VanishingNoiseGivesZero) {
  BoundInputs in;
  in.n_agents = 4;
  in.kappa = 0.0;
  in.lambda_max_p = 2.0;
  in.lambda_min_p = 0.5;
  in.alpha = 0.7;
  in.graph_eig = 1.0;
  in.lambda_max_l = 4.0;
  in.beta = 3.0;
  in.delta = 0.5;
  in.varrho = 0.5;
  in.sigma = 0.5;
  in.epsilon = 2.0;
  in.phi = in.psi = in.e = in.upsilon = Vector::Zero(4);
  for (BoundId id : {BoundId::D1, BoundId::D2, BoundId::D4, BoundId::D5, BoundId::D7, BoundId::D8,
                     BoundId::D9})
    EXPECT_EQ(residual_bound(id, in), 0.0) << to_string(id);
}

TEST(ResidualBound, Preconditions) {
  BoundInputs in = d1_inputs();
  in.varrho = 2.0;  // >= alpha
  in.phi = in.psi = in.e = Vector::Zero(2);
  try {
    residual_bound(BoundId::D3, in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PreconditionViolated);
  }
  in.epsilon = 2.0;
  in.lambda_min_p = 1.0;
  EXPECT_THROW(residual_bound(BoundId::D9, in), Error);  // varrho >= eps - 1
  in.epsilon = 1.0;
  EXPECT_THROW(residual_bound(BoundId::D7, in), Error);
}

TEST(ResidualBound, D1Monotonicity) {
  const double step = 1e-3;
  for (double kappa : {0.1, 0.5, 2.0})
    for (std::size_t n_agents : {2u, 6u, 20u})
      for (double alpha : {0.05, 0.5, 3.0})
        for (double lambda2 : {0.2, 1.0, 4.0}) {
          BoundInputs in = d1_inputs();
          in.kappa = kappa;
          in.n_agents = n_agents;
          in.alpha = alpha;
          in.graph_eig = lambda2;
          const double base = residual_bound(BoundId::D1, in);
          BoundInputs k = in, n = in, a = in, l = in;
          k.kappa += step;
          n.n_agents += 1;
          a.alpha += step;
          l.graph_eig += step;
          EXPECT_GT(residual_bound(BoundId::D1, k), base);
          EXPECT_GT(residual_bound(BoundId::D1, n), base);
          EXPECT_LT(residual_bound(BoundId::D1, a), base);
          EXPECT_LT(residual_bound(BoundId::D1, l), base);
        }
}

TEST(AnalysisConstants, OrderingAndValues) {
  const auto cfg = ProtocolConfig::uniform(ProtocolKind::AdaptiveLeaderless, 3, 0.5, 10, 10, 0.05, 0.05);
  const auto c = analysis_constants(vec({0.0, 0.0, 0.0}), 1.0, 0.0, 0.04, cfg);
  EXPECT_DOUBLE_EQ(c.beta, 1.0);
  EXPECT_DOUBLE_EQ(c.delta, 0.04);
  EXPECT_DOUBLE_EQ(c.varrho, 0.5);
  EXPECT_LE(c.delta, c.alpha);
  EXPECT_LE(c.delta, c.varrho);
  const auto lf = analysis_constants(vec({54, 54, 54}), 0.2, 5.25, 0.04, cfg, 2.0);
  EXPECT_DOUBLE_EQ(lf.beta, 54.0);
  EXPECT_DOUBLE_EQ(lf.beta_hat, 59.25);
  EXPECT_DOUBLE_EQ(lf.sigma, 0.5);
  EXPECT_THROW(analysis_constants(vec({0}), 0.0, 0.0, 1.0, cfg), Error);
}

// ---------------------------------------------------------------------------
// verdicts

TEST(Envelope, Examples) {
  std::vector<double> t, v_const, v_fast, v_stuck;
  for (int k = 0; k <= 1000; ++k) {
    const double tk = 0.01 * k;
    t.push_back(tk);
    v_const.push_back(0.7);
    v_fast.push_back(5.0 * std::exp(-2.0 * tk));
    v_stuck.push_back(5.0);
  }
  EXPECT_TRUE(envelope_check(t, v_const, 0.7, 1.0, 0.7).ok);
  EXPECT_TRUE(envelope_check(t, v_fast, 5.0, 1.0, 0.0).ok);
  const auto stuck = envelope_check(t, v_stuck, 5.0, 1.0, 1.0);
  EXPECT_FALSE(stuck.ok);
  // 5 - [(5 - 1) e^{-10} + 1]
  EXPECT_NEAR(stuck.max_violation, 4.0 * (1.0 - std::exp(-10.0)), 1e-12);
  EXPECT_THROW(envelope_check(t, v_const, 0.7, 0.0, 0.7), Error);
}

TEST(Uub, Examples) {
  std::vector<double> t, zero, decay, osc;
  for (int k = 0; k <= 1000; ++k) {
    const double tk = 0.01 * k;
    t.push_back(tk);
    zero.push_back(0.0);
    decay.push_back(4.0 * std::exp(-tk));
    osc.push_back(1.0 + 0.5 * std::sin(5.0 * tk));
  }
  const auto z = uub_verdict(t, zero, 1.0);
  EXPECT_TRUE(z.pass);
  ASSERT_TRUE(z.entry_time.has_value());
  EXPECT_EQ(*z.entry_time, 0.0);

  // crosses 1.02 at t* = ln(4/1.02)
  const auto d = uub_verdict(t, decay, 1.0);
  EXPECT_TRUE(d.pass);
  ASSERT_TRUE(d.entry_time.has_value());
  EXPECT_NEAR(*d.entry_time, std::log(4.0 / 1.02), 0.01);

  const auto o = uub_verdict(t, osc, 1.0);
  EXPECT_FALSE(o.pass);
  EXPECT_GT(o.max_violation, 0.0);
  EXPECT_THROW(uub_verdict(t, zero, 0.0), Error);
  EXPECT_THROW(uub_verdict(t, zero, 1.0, 1.0), Error);
}

TEST(Verification, ContextRejectsMismatchedBounds) {
  MassSpringParams p;
  p.protocol.kind = ProtocolKind::StaticLeaderless;
  p.t_final = 1.0;
  const Scenario s = build_mass_spring_scenario(p);
  auto kind_of = [&](BoundId id) {
    try {
      verification_context(s, id);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;  // sentinel: no throw
  };
  EXPECT_EQ(kind_of(BoundId::D4), ErrorKind::SchemaMismatch);
  EXPECT_EQ(kind_of(BoundId::D2), ErrorKind::PreconditionViolated);
  EXPECT_EQ(kind_of(BoundId::D7), ErrorKind::PreconditionViolated);  // no epsilon gains
  EXPECT_NO_THROW(verification_context(s, BoundId::D1));
}

TEST(Verification, V1LowerBoundOnRun) {
  MassSpringParams p;
  p.protocol.kind = ProtocolKind::StaticLeaderless;
  p.t_final = 5.0;
  const Scenario s = build_mass_spring_scenario(p);
  const Trajectory traj = simulate(s);
  const Matrix l = laplacian(std::get<Graph>(s.graph));
  const double bound_coef = spectrum(l).lambda2 / (2.0 * linalg::sym_eigenvalues(s.gains.P).maxCoeff());
  for (std::size_t k = 0; k < traj.times.size(); k += 10) {
    const Vector xi = consensus_error(traj.states[k], 2);
    EXPECT_GE(lyapunov_v1(xi, l, s.gains.P), bound_coef * xi.squaredNorm() * (1.0 - 1e-12));
    EXPECT_NEAR(xi.norm(), traj.error_norm[k], 1e-12 * (1.0 + xi.norm()));
  }
}

TEST(Verification, IncompleteRunFails) {
  MassSpringParams p;
  p.protocol.kind = ProtocolKind::StaticLeaderless;
  p.t_final = 1.0;
  const Scenario s = build_mass_spring_scenario(p);
  Trajectory traj = simulate(s);
  traj.status = RunStatus::Diverged;
  EXPECT_FALSE(verify_trajectory(s, traj, BoundId::D1).pass);
}

// ---------------------------------------------------------------------------
// io

TEST(IoGraph, RoundTrip) {
  Matrix a = Graph::path(4).adjacency();
  a(0, 1) = a(1, 0) = 2.5;
  const Graph g(a);
  const Topology back = io::graph_from_json(io::graph_to_json(Topology(g)));
  EXPECT_EQ(std::get<Graph>(back).adjacency(), g.adjacency());
  const LeaderFollowerGraph lf = example_leader_follower_graph();
  const Topology lf_back = io::graph_from_json(io::graph_to_json(Topology(lf)));
  const auto& got = std::get<LeaderFollowerGraph>(lf_back);
  EXPECT_EQ(got.leader_links(), lf.leader_links());
  EXPECT_EQ(got.followers().adjacency(), lf.followers().adjacency());
}

TEST(IoGraph, Errors) {
  EXPECT_THROW(io::graph_from_json(io::json::parse(R"({"n": 2, "edges": [[0, 5]]})")), Error);
  EXPECT_THROW(io::graph_from_json(io::json::parse(R"({"edges": [[0, 1]]})")), Error);
}

TEST(IoGains, RoundTrip) {
  const GainSet g = synthesize_gains(mass_spring_dynamics(2.5));
  const GainSet back = io::gains_from_json(io::json::parse(io::gains_to_json(g).dump()));
  EXPECT_EQ(back.K, g.K);
  EXPECT_EQ(back.P, g.P);
  EXPECT_EQ(back.Gamma, g.Gamma);
  EXPECT_EQ(back.alpha, g.alpha);
}

TEST(IoScenario, FileRoundTripIsStable) {
  for (const char* name : {"mass_spring_static.json", "mass_spring_adaptive.json",
                           "mass_spring_non_matching.json", "chua_leader_follower.json",
                           "single_integrator_pair.json"}) {
    const auto spec = io::scenario_from_json(io::read_json_file(scenario_path(name)));
    const io::json once = io::scenario_to_json(spec);
    const io::json twice = io::scenario_to_json(io::scenario_from_json(once));
    EXPECT_EQ(once, twice) << name;
  }
}

TEST(IoScenario, ResolveRequiresGainsOrAutoSynthesis) {
  const auto spec = io::scenario_from_json(io::read_json_file(scenario_path("mass_spring_static.json")));
  EXPECT_THROW(io::resolve(spec, false), Error);
  const auto resolved = io::resolve(spec, true);
  ASSERT_TRUE(resolved.gains.has_value());
  // Resolved specs reload to the same scenario.
  const auto again = io::resolve(io::scenario_from_json(io::scenario_to_json(resolved)), false);
  EXPECT_EQ(io::scenario_to_json(again), io::scenario_to_json(resolved));
}

TEST(IoScenario, MatchesBuilderDraws) {
  const Scenario from_file = io::build(io::resolve(
      io::scenario_from_json(io::read_json_file(scenario_path("mass_spring_static.json"))), true));
  MassSpringParams p;
  p.protocol.kind = ProtocolKind::StaticLeaderless;
  const Scenario built = build_mass_spring_scenario(p);
  ASSERT_EQ(from_file.x0.size(), built.x0.size());
  for (std::size_t i = 0; i < built.x0.size(); ++i) {
    EXPECT_EQ(from_file.x0[i], built.x0[i]);
    const Vector x = vec({1.0, 0.0});
    EXPECT_EQ(from_file.uncertainties[i].f(x, 0.0), built.uncertainties[i].f(x, 0.0));
  }
}

TEST(IoCsv, HeaderCounts) {
  EXPECT_EQ(io::csv_header(6, 2, 1, false).size(), 1u + 12 + 6 + 6 + 6 + 1);
  EXPECT_EQ(io::csv_header(6, 3, 1, true).size(), 1u + 18 + 3 + 6 + 6 + 6 + 1);
}

TEST(IoCsv, RoundTripIsExact) {
  ChuaParams p;
  p.t_final = 0.05;
  const Scenario s = build_chua_scenario(p);
  const Trajectory t = simulate(s);
  const std::string text = io::trajectory_to_csv(t, 6, 3, 1);
  std::istringstream in(text);
  const Trajectory back = io::trajectory_from_csv(in, 6, 3, 1, true);
  ASSERT_EQ(back.times.size(), t.times.size());
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    EXPECT_EQ(back.times[k], t.times[k]);
    EXPECT_EQ(back.states[k], t.states[k]);
    EXPECT_EQ(back.leader_states[k], t.leader_states[k]);
    EXPECT_EQ(back.controls[k], t.controls[k]);
    EXPECT_EQ(back.d_bar[k], t.d_bar[k]);
    EXPECT_EQ(back.error_norm[k], t.error_norm[k]);
  }
  EXPECT_EQ(io::trajectory_to_csv(back, 6, 3, 1), text);
}

TEST(IoCsv, SchemaMismatch) {
  std::istringstream in("t,x[0][0]\n0,1\n");
  try {
    io::trajectory_from_csv(in, 2, 1, 1, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaMismatch);
  }
}

TEST(IoManifest, RoundTrip) {
  io::RunManifest m;
  m.scenario_path = "a.json";
  m.output_dir = "out";
  m.command = "simulate a.json";
  m.timestamp = "2026-01-01T00:00:00Z";
  m.resolved_seed = 17;
  m.h = 0.002;
  m.auto_synthesize = true;
  const auto back = io::manifest_from_json(io::manifest_to_json(m));
  EXPECT_EQ(io::manifest_to_json(back), io::manifest_to_json(m));
  EXPECT_THROW(io::manifest_from_json(io::json::parse("{}")), Error);
}

// ---------------------------------------------------------------------------
// cli (subprocess)

TEST(Cli, SynthesizeScalar) {
  const auto dir = fresh_dir("syn");
  const CliRun r = run_cli("synthesize " + scenario_path("scalar_dynamics.json"), dir);
  ASSERT_EQ(r.code, 0);
  const auto j = io::json::parse(r.out);
  EXPECT_NEAR(j.at("K")[0][0].get<double>(), -1.0 / std::sqrt(2.0), 1e-5);
  EXPECT_NEAR(j.at("alpha").get<double>(), std::sqrt(2.0), 1e-5);
}

TEST(Cli, SynthesizeGammaIdentity) {
  const auto dir = fresh_dir("syn_ms");
  const CliRun r = run_cli("synthesize " + scenario_path("mass_spring_static.json"), dir);
  ASSERT_EQ(r.code, 0);
  const auto j = io::json::parse(r.out);
  const Matrix k = io::detail::matrix_from_json(j.at("K"), "K");
  const Matrix gamma = io::detail::matrix_from_json(j.at("Gamma"), "Gamma");
  EXPECT_LE((gamma - k.transpose() * k).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, ExitCodes) {
  const auto dir = fresh_dir("codes");
  EXPECT_EQ(run_cli("synthesize " + scenario_path("unstabilizable.json"), dir).code, 2);
  EXPECT_EQ(run_cli("synthesize " + (dir / "missing.json").string(), dir).code, 1);
  EXPECT_EQ(run_cli("bogus", dir).code, 1);
  {
    std::ofstream bad(dir / "bad.json");
    bad << "{ not json";
  }
  EXPECT_EQ(run_cli("synthesize " + (dir / "bad.json").string(), dir).code, 1);
  // Without gains and without --auto-synthesize the scenario is incomplete.
  EXPECT_EQ(run_cli("simulate " + scenario_path("mass_spring_static.json") + " --out " +
                        (dir / "nogains").string(),
                    dir)
                .code,
            1);
}

TEST(Cli, DivergenceKeepsPartialOutput) {
  const auto dir = fresh_dir("div");
  {
    std::ofstream f(dir / "diverge.json");
    f << R"({"graph": {"n": 2, "edges": [[0, 1]]},
             "dynamics": {"A": [[5]], "B": [[1]]},
             "uncertainty": {"generator": "none"},
             "protocol": {"kind": "static_leaderless", "kappa": 0.5},
             "gains": {"P": [[1]], "K": [[-1]], "alpha": 1.0, "coupling": {"c": 1.0}},
             "sim": {"t_final": 10.0, "h": 0.01, "seed": 1},
             "x0": [[1e6], [1e6]]})";
  }
  const CliRun r = run_cli("simulate " + (dir / "diverge.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(fs::exists(dir / "o" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "o" / "trajectory.csv"));
}

TEST(Cli, SimulateVerifyRoundTrip) {
  const auto dir = fresh_dir("sv");
  const std::string out = (dir / "run").string();
  const std::string scen = scenario_path("mass_spring_static.json");
  ASSERT_EQ(run_cli("simulate " + scen + " --auto-synthesize --out " + out, dir).code, 0);
  EXPECT_EQ(csv_columns(dir / "run" / "trajectory.csv"), 32u);
  const CliRun v = run_cli("verify " + out + "/trajectory.csv " + scen + " --bound D1 --report " +
                            (dir / "report.json").string(),
                        dir);
  EXPECT_EQ(v.code, 0) << v.out;
  const auto report = io::json::parse(read_file(dir / "report.json"));
  for (const char* key : {"bound_id", "bound_value", "entry_time", "envelope_ok", "max_violation",
                          "assumption_monitors"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_TRUE(report.at("envelope_ok").get<bool>());
  // Wrong scenario for this CSV: schema mismatch.
  EXPECT_EQ(run_cli("verify " + out + "/trajectory.csv " + scenario_path("chua_leader_follower.json") +
                        " --bound D5",
                    dir)
                .code,
            1);
  // Bound family that does not match the protocol.
  EXPECT_EQ(run_cli("verify " + out + "/trajectory.csv " + scen + " --bound D2", dir).code, 1);
}

TEST(Cli, ManifestRerunIsByteIdentical) {
  const auto dir = fresh_dir("manifest");
  const std::string scen = scenario_path("single_integrator_pair.json");
  ASSERT_EQ(run_cli("simulate " + scen + " --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli("simulate --manifest " + (dir / "a" / "manifest.json").string() + " --out " +
                        (dir / "b").string(),
                    dir)
                .code,
            0);
  EXPECT_EQ(read_file(dir / "a" / "trajectory.csv"), read_file(dir / "b" / "trajectory.csv"));
  EXPECT_FALSE(read_file(dir / "a" / "trajectory.csv").empty());
}
