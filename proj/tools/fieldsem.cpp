#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fieldsem/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sales-lag / lifetime estimation from warranty returns with unknown sales dates"};
  app.require_subcommand(1);

  std::string data, config, scenario, estimate, out_dir = ".", data_out;
  double level = 0.95;

  auto* fit = app.add_subcommand("fit", "Run the stochastic EM fit and write estimate.csv, trace.csv, summary.txt");
  fit->add_option("--data", data, "Field data CSV")->required();
  fit->add_option("--config", config, "Run configuration (key=value)")->required();
  fit->add_option("--out-dir", out_dir, "Output directory");

  auto* se = app.add_subcommand("stderr", "Standard errors and Wald intervals at a fitted estimate");
  se->add_option("--data", data, "Field data CSV")->required();
  se->add_option("--config", config, "Run configuration (key=value)")->required();
  se->add_option("--estimate", estimate, "estimate.csv written by fit")->required();
  se->add_option("--out-dir", out_dir, "Output directory");
  se->add_option("--level", level, "Confidence level")->check(CLI::Range(0.0, 1.0));

  auto* sim = app.add_subcommand("simulate", "Monte Carlo bias/RMSE study from a scenario file");
  sim->add_option("--scenario", scenario, "Scenario file (key=value)")->required();
  sim->add_option("--out-dir", out_dir, "Output directory");

  auto* direct = app.add_subcommand("direct", "Direct maximization of the incomplete-data likelihood");
  direct->add_option("--data", data, "Field data CSV")->required();
  direct->add_option("--config", config, "Run configuration (key=value)")->required();
  direct->add_option("--out-dir", out_dir, "Output directory");

  auto* gen = app.add_subcommand("generate", "Write one simulated batch from a scenario file");
  gen->add_option("--scenario", scenario, "Scenario file (key=value)")->required();
  gen->add_option("--out", data_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const fieldsem::cli::Streams io{std::cout, std::cerr};
  if (*fit) return fieldsem::cli::cmd_fit(data, config, out_dir, io);
  if (*se) return fieldsem::cli::cmd_stderr(data, config, estimate, out_dir, level, io);
  if (*sim) return fieldsem::cli::cmd_simulate(scenario, out_dir, io);
  if (*direct) return fieldsem::cli::cmd_direct(data, config, out_dir, io);
  if (*gen) return fieldsem::cli::cmd_generate(scenario, data_out, io);
  return 1;
}
