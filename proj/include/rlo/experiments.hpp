#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rlo/data.hpp"
#include "rlo/gan_toy.hpp"

namespace rlo {

inline constexpr std::string_view kVersion = "0.3.0";

enum class Command { Regress, TrainMlp, Diagnose, GanToy, SpiralGen };
std::string_view to_string(Command c);
Command parse_command(std::string_view name);

/// Everything a run depends on. Unset optionals take command-specific
/// defaults in resolved(); a resolved config is what manifests record.
struct ExperimentConfig {
  Command command = Command::Regress;

  // data source: a file path, or one of the builtins "spiral",
  // "spectf-like", "madelon-like"
  std::string data = "spiral";
  int label_column = -1;
  /// "auto" (skip the first line when it does not parse), "yes" or "no".
  std::string header = "auto";
  std::optional<bool> standardize;
  bool bias = true;
  bool regularize_bias = true;
  bool one_vs_all = false;

  std::vector<std::string> losses;
  std::vector<double> k_grid;
  std::optional<double> m;
  double gamma = 2.0;
  std::vector<double> lambdas;

  double learning_rate = 0.01;
  std::optional<std::size_t> iterations;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t record_every = 1;
  double threshold = 0.1;

  std::size_t folds = 5;
  std::vector<std::uint64_t> seeds{1};
  std::size_t threads = 0;  // 0 = hardware concurrency

  // networks and spiral data
  std::vector<std::size_t> depths{2};
  std::size_t hidden = 100;
  std::size_t samples = 1500;
  double noise = 0.05;
  double train_fraction = 0.7;
  std::size_t grid_resolution = 100;

  // diagnose
  std::string weights;  // empty = zero vector

  // gan-toy
  std::size_t rounds = 2000;
  double eta_g = 0.05;
  double eta_d = 0.05;
  std::size_t gan_batch = 64;
  std::vector<double> target_mean{3.0};
  double target_std = 1.0;
  std::vector<double> mixture_mean;  // non-empty = two-component target
  double mixture_std = 1.0;
  double mixture_weight = 0.5;
  std::vector<std::size_t> disc_hidden{8};

  std::string out = "results";

  /// Fills command-specific defaults (k grid, losses, λ grid, iteration
  /// budgets, standardization) and validates. Throws std::invalid_argument.
  ExperimentConfig resolved() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Default k grid: the integers 3..20.
std::vector<double> default_k_grid();
/// Iteration budget of a depth-d network when none is configured (2 -> 1000, 3 -> 100, 4 -> 50).
std::size_t mlp_iteration_budget(std::size_t depth);
/// 1000 for SPECTF-style tables (name contains "spectf" or "heart"), 200 otherwise.
std::size_t regress_iteration_budget(const std::string& dataset_name);

/// Loads the configured data source (builtins use seed `seed`).
Dataset load_source(const ExperimentConfig& cfg, std::uint64_t seed);

using Cell = std::variant<std::int64_t, double, std::string>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
  std::size_t column(std::string_view name) const;
  const Cell& at(std::size_t row, std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
  void write_csv(std::ostream& out) const;
  /// Array of row objects keyed by column.
  nlohmann::json to_json() const;
};

struct OutputFile {
  std::string name;
  std::string content;
};

struct ExperimentOutput {
  ExperimentConfig config;  // resolved
  ResultTable results;
  ResultTable summary;
  ResultTable timings;            // id, seconds
  std::vector<OutputFile> files;  // traces, grids, reports
  bool diverged = false;
};

/// Cross-validated k-grid sweep of linear models. One row per (seed, loss,
/// k, λ, fold); multiclass data is split one-vs-all with accuracy averaged
/// over the binary tasks and the trace objective summed over them.
ExperimentOutput run_regress(const ExperimentConfig& cfg);
/// Network comparison per (depth, loss, k, seed) on a train/test split;
/// writes a decision grid for every 2-D model.
ExperimentOutput run_train_mlp(const ExperimentConfig& cfg);
/// Conditioning reports and Hessian condition numbers per (task, family, k, λ).
ExperimentOutput run_diagnose(const ExperimentConfig& cfg);
/// Rooted-value GAN runs per (k, seed).
ExperimentOutput run_gan_toy(const ExperimentConfig& cfg);
/// Writes spiral.csv for every seed.
ExperimentOutput run_spiral_gen(const ExperimentConfig& cfg);

ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// Writes results.csv, results.json, summary.csv, timings.csv, the extra files
/// and manifest.json (config, argv, version; start time in its own field).
/// Throws std::runtime_error when the directory cannot be written.
void emit_results(const ExperimentOutput& output, const std::filesystem::path& dir,
                  const std::vector<std::string>& argv = {});

/// Reads the config recorded in a manifest.
ExperimentConfig config_from_manifest(const std::filesystem::path& manifest);

}  // namespace rlo
