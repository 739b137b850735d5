#include "quadcal/errors.hpp"
#include "quadcal/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace quadcal;

int main(int argc, char** argv) {
  CLI::App app{"Adaptive implicit quadrature for Bayesian calibration"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  int repeats = 0;
  int threads = 0;
  std::string out_dir;

  std::vector<std::pair<CLI::App*, Experiment>> commands;
  for (Experiment e : {Experiment::analytic_beta, Experiment::genz2d, Experiment::genz5d, Experiment::genz_dim,
                       Experiment::calibrate}) {
    CLI::App* sub = app.add_subcommand(to_string(e), "run the " + to_string(e) + " experiment");
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--repeats", repeats, "number of repeats (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    commands.emplace_back(sub, e);
  }
  CLI11_PARSE(app, argc, argv);

  Experiment experiment = Experiment::analytic_beta;
  for (const auto& [sub, e] : commands) {
    if (sub->parsed()) experiment = e;
  }
  const CLI::App* sub = app.get_subcommands().front();

  try {
    RunConfig config = config_path.empty() ? default_config(experiment) : load_run_config(config_path, experiment);
    if (sub->count("--seed")) config.seed = seed;
    if (repeats > 0) config.repeats = repeats;
    if (threads > 0) config.threads = threads;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (config.output_dir.empty()) config.output_dir = "results/" + to_string(experiment);

    const ConvergenceReport report = run_experiment(config);
    write_report(config, report, config.output_dir);
    for (const auto& row : aggregate(report.rows)) {
      std::cout << row.experiment << "  iter " << row.iteration << "  N " << row.mean_N << "  err "
                << row.err_adaptive << "  e_N " << row.e_N << '\n';
    }
    std::cout << "results written to " << std::filesystem::absolute(config.output_dir).string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
