#include <iostream>

#include "CLI11.hpp"

#include "consensus/cli.hpp"

int main(int argc, char** argv) {
  using namespace consensus::cli;

  CLI::App app{"Robust consensus synthesis, simulation and verification"};
  app.require_subcommand(1);

  SynthesizeOptions syn;
  auto* synthesize = app.add_subcommand("synthesize", "Solve the consensus LMI and print gains as JSON");
  synthesize->add_option("input", syn.input, "Dynamics or scenario JSON")->required();
  synthesize->add_option("--epsilon", syn.epsilon, "Use the shifted LMI with this epsilon (> 1)");
  synthesize->add_option("--coupling-multiplier", syn.coupling_multiplier,
                         "Scale the minimal coupling gains");

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Integrate a scenario and write CSV + manifest");
  simulate->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  simulate->add_option("scenario", sim.scenario, "Scenario JSON");
  simulate->add_option("--manifest", sim.manifest, "Re-run from a manifest.json");
  simulate->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Override the scenario seed");
  simulate->add_option("--h", sim.h, "Override the step size");
  simulate->add_flag("--auto-synthesize", sim.auto_synthesize, "Synthesize gains when absent");
  simulate->add_option("--coupling-multiplier", sim.coupling_multiplier,
                       "Scale the synthesized coupling gains");

  VerifyOptions ver;
  auto* verify = app.add_subcommand("verify", "Check a trajectory against a residual set");
  verify->add_option("trajectory", ver.trajectory, "Trajectory CSV")->required();
  verify->add_option("scenario", ver.scenario, "Scenario JSON")->required();
  verify->add_option("--bound", ver.bound, "Residual set D1..D9")->capture_default_str();
  verify->add_option("--report", ver.report, "Also write the report JSON here");
  verify->add_option("--settle-fraction", ver.settle_fraction,
                     "Final fraction of the horizon that must lie in the set")
      ->capture_default_str();

  app.add_subcommand("demo", "Run the paper examples and print a summary table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  if (*synthesize) return cmd_synthesize(syn, std::cout, std::cerr);
  if (*simulate) {
    if (sim.scenario.empty() && sim.manifest.empty()) {
      std::cerr << "error: simulate needs a scenario or --manifest\n";
      return kInputError;
    }
    return cmd_simulate(sim, std::cout, std::cerr);
  }
  if (*verify) return cmd_verify(ver, std::cout, std::cerr);
  return cmd_demo(std::cout, std::cerr);
}
