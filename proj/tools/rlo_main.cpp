// rlo: benchmark harness for rooted logistic objectives.
//
//   rlo regress    --data data/wine.csv --k 3 --k 4 --folds 5 --out runs/wine
//   rlo train-mlp  --data spiral --depth 2 --depth 3 --seed 1 --seed 2
//   rlo diagnose   --data data/ionosphere.csv --k 2 --k 3
//   rlo gan-toy    --k 4 --rounds 2000
//   rlo spiral-gen --samples 1500 --noise 0.05
//   rlo replay     --manifest runs/wine/manifest.json --out runs/wine-again
//
// Exit codes: 0 success, 2 configuration error, 3 divergence in some cell
// (results are still written), 1 anything else.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rlo/data.hpp"
#include "rlo/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct Flags {
  rlo::ExperimentConfig cfg;
  std::string standardize = "default";
  std::size_t iterations = 0;
  double m = 0.0;
  bool no_bias = false;
  bool no_bias_penalty = false;
};

void add_common(CLI::App* sub, Flags& f) {
  auto& c = f.cfg;
  sub->add_option("--data", c.data, "CSV path, or a builtin: spiral, spectf-like, madelon-like")
      ->capture_default_str();
  sub->add_option("--label-column", c.label_column, "label column; negative counts from the end")
      ->capture_default_str();
  sub->add_option("--header", c.header, "first line is a header: auto, yes, no")
      ->check(CLI::IsMember({"auto", "yes", "no"}))
      ->capture_default_str();
  sub->add_option("--standardize", f.standardize, "z-score features on the training split: yes, no, default")
      ->check(CLI::IsMember({"yes", "no", "default"}));
  sub->add_option("--loss", c.losses, "loss families (repeatable)");
  sub->add_option("--k", c.k_grid, "root parameters (repeatable; default grid depends on the command)");
  sub->add_option("--m", f.m, "multiplier for rooted losses (default m = k)");
  sub->add_option("--gamma", c.gamma, "focal gamma")->capture_default_str();
  sub->add_option("--lambda", c.lambdas, "L2 strengths (repeatable)");
  sub->add_option("--lr", c.learning_rate, "learning rate")->capture_default_str();
  sub->add_option("--iters", f.iterations, "iterations (default depends on command and dataset)");
  sub->add_option("--batch", c.batch_size, "mini-batch size; 0 = full batch")->capture_default_str();
  sub->add_option("--record-every", c.record_every, "trace stride")->capture_default_str();
  sub->add_option("--threshold", c.threshold, "normalized-loss threshold for convergence speed")
      ->capture_default_str();
  sub->add_option("--folds", c.folds, "cross-validation folds")->capture_default_str();
  sub->add_option("--seed", c.seeds, "seeds (repeatable)");
  sub->add_option("--threads", c.threads, "worker threads; 0 = all cores")->capture_default_str();
  sub->add_flag("--no-bias", f.no_bias, "do not append a constant-1 feature");
  sub->add_flag("--no-bias-penalty", f.no_bias_penalty, "exclude the bias weight from L2");
  sub->add_flag("--one-vs-all", c.one_vs_all, "diagnose multiclass data class by class");
  sub->add_option("--depth", c.depths, "network depths in affine layers (repeatable)");
  sub->add_option("--hidden", c.hidden, "hidden width")->capture_default_str();
  sub->add_option("--samples", c.samples, "spiral sample count")->capture_default_str();
  sub->add_option("--noise", c.noise, "spiral noise")->capture_default_str();
  sub->add_option("--train-fraction", c.train_fraction, "train share of a train/test split")
      ->capture_default_str();
  sub->add_option("--grid-resolution", c.grid_resolution, "decision grid lattice size")
      ->capture_default_str();
  sub->add_option("--weights", c.weights, "parameter file for diagnose (default: zero vector)");
  sub->add_option("--rounds", c.rounds, "GAN rounds")->capture_default_str();
  sub->add_option("--eta-g", c.eta_g, "generator step size")->capture_default_str();
  sub->add_option("--eta-d", c.eta_d, "discriminator step size")->capture_default_str();
  sub->add_option("--gan-batch", c.gan_batch, "GAN batch size")->capture_default_str();
  sub->add_option("--target-mean", c.target_mean, "GAN target mean (1 or 2 values)");
  sub->add_option("--target-std", c.target_std, "GAN target stddev")->capture_default_str();
  sub->add_option("--mixture-mean", c.mixture_mean, "second mixture component mean");
  sub->add_option("--mixture-std", c.mixture_std, "second mixture component stddev")->capture_default_str();
  sub->add_option("--mixture-weight", c.mixture_weight, "first component weight")->capture_default_str();
  sub->add_option("--disc-hidden", c.disc_hidden, "discriminator hidden widths");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

void finish_flags(CLI::App* sub, Flags& f) {
  auto& c = f.cfg;
  if (f.standardize == "yes") c.standardize = true;
  if (f.standardize == "no") c.standardize = false;
  if (sub->count("--iters")) c.iterations = f.iterations;
  if (sub->count("--m")) c.m = f.m;
  if (f.no_bias) c.bias = false;
  if (f.no_bias_penalty) c.regularize_bias = false;
}

int run(const rlo::ExperimentConfig& cfg, const std::vector<std::string>& argv) {
  rlo::ExperimentOutput output;
  try {
    output = rlo::run_experiment(cfg);
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const rlo::DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitConfig;
  }
  rlo::emit_results(output, output.config.out, argv);
  fmt::print("{}: {} result rows written to {}\n", rlo::to_string(output.config.command),
             output.results.rows.size(), output.config.out);
  if (output.diverged) {
    fmt::print(stderr, "warning: at least one cell diverged; see the status column\n");
    return kExitDiverged;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rooted logistic objective benchmarks"};
  app.set_version_flag("--version", std::string(rlo::kVersion));
  app.set_config("--config", "", "INI/TOML file of key = value settings; [command] sections apply to subcommands");
  app.require_subcommand(1);

  const std::vector<std::pair<rlo::Command, const char*>> commands{
      {rlo::Command::Regress, "k-grid sweep of logistic vs rooted logistic regression with k-fold CV"},
      {rlo::Command::TrainMlp, "fully-connected networks with CE vs rooted-CE heads"},
      {rlo::Command::Diagnose, "per-sample conditioning ratios and Hessian condition numbers"},
      {rlo::Command::GanToy, "toy generator/discriminator trained on the rooted minimax value"},
      {rlo::Command::SpiralGen, "write the two-spiral dataset"},
  };
  std::vector<Flags> flags(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    flags[i].cfg.command = commands[i].first;
    auto* sub = app.add_subcommand(std::string(rlo::to_string(commands[i].first)), commands[i].second);
    add_common(sub, flags[i]);
    subs.push_back(sub);
  }
  std::string manifest;
  std::string replay_out;
  std::size_t replay_threads = 0;
  auto* replay = app.add_subcommand("replay", "re-run the configuration recorded in a manifest.json");
  replay->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", replay_out, "output directory (default: the recorded one)");
  replay->add_option("--threads", replay_threads, "worker threads (results do not depend on it)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (replay->parsed()) {
      rlo::ExperimentConfig cfg = rlo::config_from_manifest(manifest);
      if (!replay_out.empty()) cfg.out = replay_out;
      if (replay->count("--threads")) cfg.threads = replay_threads;
      return run(cfg, args);
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      finish_flags(subs[i], flags[i]);
      return run(flags[i].cfg, args);
    }
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return kExitConfig;
}
