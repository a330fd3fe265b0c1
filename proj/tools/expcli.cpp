// Experiment launcher: runs a configured sweep, re-summarizes persisted
// results, and emits plot-ready aggregates.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "icsmdp/expkit.hpp"

namespace {

int cmd_run(const std::string& config_path, bool quiet) {
  const icsmdp::ExperimentConfig cfg = icsmdp::load_config(config_path);
  const icsmdp::ExperimentResult result = icsmdp::run_experiment(cfg);
  icsmdp::persist_result(cfg.output_dir, result);
  if (!quiet) {
    std::cout << result.summary.dump(2) << '\n';
    std::cout << "wrote " << cfg.output_dir << "/runs.csv ("
              << result.rows.size() << " rows, hash " << icsmdp::config_hash(cfg)
              << ")\n";
  }
  if (result.flagged) {
    std::cerr << "expcli: flagged rows present\n";
    return 2;
  }
  return 0;
}

int cmd_summarize(const std::string& dir) {
  const auto rows = icsmdp::read_run_csv(dir + "/runs.csv");
  const auto summary = icsmdp::summarize_rows(rows);
  std::ofstream out(dir + "/summary.json");
  if (!out) throw std::runtime_error("cannot write " + dir + "/summary.json");
  out << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_plotdata(const std::string& dir, const std::string& figure) {
  const auto rows = icsmdp::read_run_csv(dir + "/runs.csv");
  const auto series = icsmdp::plot_data(rows, figure);
  const std::string csv = icsmdp::plot_csv(series);
  const std::string path = dir + "/plot_" + figure + ".csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv;
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interface-constrained SMDP experiment runner"};
  app.require_subcommand(1);

  std::string config_path, dir, figure;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "run a sweep config and persist results");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_flag("-q,--quiet", quiet, "suppress the summary dump");

  auto* summ = app.add_subcommand("summarize", "recompute summary.json from runs.csv");
  summ->add_option("dir", dir, "result directory")->required();

  auto* plot = app.add_subcommand("plotdata", "write plot_<figure>.csv from runs.csv");
  plot->add_option("dir", dir, "result directory")->required();
  plot->add_option("figure", figure,
                   "one of: error, accuracy, tmix, t1-scatter")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, quiet);
    if (summ->parsed()) return cmd_summarize(dir);
    return cmd_plotdata(dir, figure);
  } catch (const std::exception& e) {
    std::cerr << "expcli: " << e.what() << '\n';
    return 1;
  }
}
