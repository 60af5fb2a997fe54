#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossclr/dataset.hpp"
#include "crossclr/errors.hpp"
#include "crossclr/retrieval.hpp"
#include "crossclr/trainer.hpp"

namespace crossclr {

/// Fully resolved parameters for every CLI command.
///
/// Resolution order: built-in defaults, then the loss profile, then keys from
/// the JSON config file, then command-line overrides. Unknown keys are
/// rejected with ConfigParseError.
struct ExperimentConfig {
  std::optional<std::uint64_t> seed;

  // Data: a manifest path, or synthetic generation parameters.
  std::string dataset;
  std::size_t n_train = 2048;
  std::size_t n_val = 512;
  std::size_t n_test = 0;
  std::size_t n_clusters = 32;
  std::size_t d_x = 64;
  std::size_t d_y = 48;
  std::size_t d_latent = 16;
  double noise_sigma = 0.3;
  double overlap = 0.4;
  std::optional<std::uint64_t> data_seed;  // defaults to seed

  std::string profile = "youcook2";
  TrainConfig train;

  std::size_t n_seeds = 5;
  std::vector<LossKind> losses = {LossKind::crossclr, LossKind::ntxent, LossKind::clip,
                                  LossKind::max_margin};
  std::vector<double> gammas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> kappas = {0.1, 0.01, 0.009, 0.007, 0.005, 0.003, 0.001};

  std::size_t gradcheck_configs = 100;
  double gradcheck_h = 1e-5;
  double gradcheck_tolerance = 1e-4;

  std::string checkpoint = "train.ckpt";
  std::string split = "val";
  std::size_t bins = 40;
  std::vector<std::size_t> ks = {1, 5, 10};

  std::uint64_t require_seed() const;
  std::uint64_t resolved_data_seed() const { return data_seed.value_or(require_seed()); }
};

/// Applies the keys of `j` on top of `base`. Throws ConfigParseError on
/// unknown keys or ill-typed values.
ExperimentConfig apply_config_json(const nlohmann::json& j, ExperimentConfig base = {});

nlohmann::json to_json(const ExperimentConfig& c);

/// Manifest dataset when `dataset` is set, otherwise synthetic data split into
/// train / val / test.
PairedEmbeddingDataset load_or_generate(const ExperimentConfig& c);

struct CellResult {
  RetrievalReport a_to_b;
  RetrievalReport b_to_a;
  SimilarityHistogram histogram;
  std::vector<EpochLog> log;
};

/// Trains with `config` and evaluates on `eval_set`.
CellResult train_and_evaluate(const TrainConfig& config, const PairedEmbeddingDataset& train,
                              const PairedEmbeddingDataset& val, const PairedEmbeddingDataset& eval_set,
                              std::size_t bins = 40);

/// mean and sample standard deviation.
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

MeanStd mean_std(const std::vector<double>& values);

/// "19.5±0.49": mean with one decimal, std with two.
std::string format_mean_std(const MeanStd& m);

struct GradCheckRow {
  std::size_t index = 0;
  std::string variant;
  std::size_t n = 0;
  std::size_t dim = 0;
  double max_error = 0.0;
};

/// Finite-difference checks over seeded random configurations covering every
/// loss kind and every CrossCLR feature-flag combination.
std::vector<GradCheckRow> run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed, double h);

// Each command returns the report body (without timestamps).
nlohmann::json run_gen(const ExperimentConfig& c, const std::filesystem::path& out_dir);
nlohmann::json run_train(const ExperimentConfig& c, const std::filesystem::path& out_dir);
nlohmann::json run_eval(const ExperimentConfig& c, const std::filesystem::path& out_dir);
nlohmann::json run_gradcheck(const ExperimentConfig& c);
nlohmann::json run_compare(const ExperimentConfig& c);
nlohmann::json run_ablate(const ExperimentConfig& c);
nlohmann::json run_sweep(const ExperimentConfig& c);

/// Aligned text rendering of a compare / ablate report.
std::string format_table(const nlohmann::json& report);

/// Exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUnknownCommand = 2,
  kExitConfigError = 3,
  kExitPathError = 4,
  kExitRuntimeError = 5,
};

int exit_code_for(ErrorKind kind);

struct CommandOutcome {
  int exit_code = kExitOk;
  std::filesystem::path report_path;
  nlohmann::json report;
};

/// Runs one command and writes `{command}.{timestamp}.json` into `out_dir`,
/// plus `latest.json` mapping each command to its newest report file.
CommandOutcome run_command(const std::string& command, const ExperimentConfig& c,
                           const std::filesystem::path& out_dir);

}  // namespace crossclr
