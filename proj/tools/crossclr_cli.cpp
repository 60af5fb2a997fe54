// crossclr: synthetic data generation, training, evaluation and experiment grids.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crossclr/errors.hpp"
#include "crossclr/experiment.hpp"

namespace {

using crossclr::Error;
using crossclr::ErrorKind;
using nlohmann::json;

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::PathError, "cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigParseError, path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CrossCLR training and evaluation on paired embeddings"};
  std::string command;
  std::string config_path, out_dir = "runs";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss, dataset, checkpoint, split;
  std::optional<double> gamma, kappa, lambda, tau;
  std::optional<std::size_t> queue, epochs, batch, n_seeds;

  app.add_option("command", command, "gen | train | eval | gradcheck | compare | ablate | sweep")->required();
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "base random seed");
  app.add_option("--out", out_dir, "report directory")->capture_default_str();
  app.add_option("--loss", loss, "crossclr | crossclr_batch | crossclr_multipos | ntxent | clip | max_margin");
  app.add_option("--gamma", gamma, "pruning threshold");
  app.add_option("--kappa", kappa, "weight temperature");
  app.add_option("--lambda", lambda, "intra-modality multiplier");
  app.add_option("--tau", tau, "similarity temperature");
  app.add_option("--queue", queue, "queue capacity");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--batch", batch, "batch size");
  app.add_option("--seeds", n_seeds, "seeds per compare / ablate / sweep cell");
  app.add_option("--dataset", dataset, "dataset manifest (default: generate)");
  app.add_option("--checkpoint", checkpoint, "checkpoint path");
  app.add_option("--split", split, "evaluation split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : crossclr::kExitConfigError;
  }

  try {
    crossclr::ExperimentConfig config;
    if (!config_path.empty()) config = crossclr::apply_config_json(read_config_file(config_path), config);

    json overrides = json::object();
    if (seed) overrides["seed"] = *seed;
    if (loss) overrides["loss"] = *loss;
    if (gamma) overrides["gamma"] = *gamma;
    if (kappa) overrides["kappa"] = *kappa;
    if (lambda) overrides["lambda"] = *lambda;
    if (tau) overrides["tau"] = *tau;
    if (queue) overrides["queue_capacity"] = *queue;
    if (epochs) overrides["epochs"] = *epochs;
    if (batch) overrides["batch_size"] = *batch;
    if (n_seeds) overrides["n_seeds"] = *n_seeds;
    if (dataset) overrides["dataset"] = *dataset;
    if (checkpoint) overrides["checkpoint"] = *checkpoint;
    if (split) overrides["split"] = *split;
    config = crossclr::apply_config_json(overrides, config);

    const crossclr::CommandOutcome outcome = crossclr::run_command(command, config, out_dir);
    if (command == "compare" || command == "ablate") {
      std::cout << crossclr::format_table(outcome.report.at("results"));
    }
    std::cout << outcome.report_path.string() << '\n';
    return outcome.exit_code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return crossclr::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return crossclr::kExitRuntimeError;
  }
}
