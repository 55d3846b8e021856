#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rlo/types.hpp"

namespace rlo {

/// Differentiable objective over a flat parameter vector, written as a mean
/// over samples so optimizers can evaluate it on mini-batches.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Index dimension() const = 0;
  virtual std::size_t sample_count() const = 0;

  /// Mean loss over `batch` (every sample when `batch` is empty). Writes the
  /// gradient into `grad` when it is non-null.
  virtual double evaluate(const Vector& params, std::span<const std::size_t> batch,
                          Vector* grad) const = 0;

  /// 1 for coordinates the L2 penalty applies to, 0 otherwise.
  virtual Vector l2_mask() const { return Vector::Ones(dimension()); }

  double value(const Vector& params) const { return evaluate(params, {}, nullptr); }
  double value_and_gradient(const Vector& params, Vector& grad) const {
    return evaluate(params, {}, &grad);
  }
};

/// Objective from a closure (value, optional gradient); no sample structure.
class FunctionObjective final : public Objective {
 public:
  using Fn = std::function<double(const Vector&, Vector*)>;
  FunctionObjective(Index dimension, Fn fn) : dimension_(dimension), fn_(std::move(fn)) {}

  Index dimension() const override { return dimension_; }
  std::size_t sample_count() const override { return 1; }
  double evaluate(const Vector& params, std::span<const std::size_t>, Vector* grad) const override {
    return fn_(params, grad);
  }

 private:
  Index dimension_;
  Fn fn_;
};

inline constexpr double kDefaultL2Lambda = 1e-3;

struct OptimizerConfig {
  double learning_rate = 0.01;
  std::size_t iterations = 200;
  /// Mini-batch size; empty means full batch.
  std::optional<std::size_t> batch_size;
  double l2_lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;

  /// Throws std::invalid_argument; `samples` bounds a finite batch size.
  void validate(std::size_t samples) const;
};

struct TraceRecord {
  std::size_t iteration = 0;
  double objective = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<TraceRecord> records;

  bool empty() const { return records.empty(); }
  /// Columns iter,loss,train_acc,test_acc,grad_norm,seconds.
  void write_csv(std::ostream& out) const;
  /// Array of {"iter", "loss", "train_acc", "test_acc", "grad_norm", "seconds"} records.
  nlohmann::json to_json() const;
};

enum class RunStatus { Completed, Diverged };
std::string_view to_string(RunStatus status);

struct RunResult {
  Vector params;
  TrainTrace trace;
  RunStatus status = RunStatus::Completed;
};

/// Returns (train accuracy, test accuracy) for the current parameters. Called
/// only at recorded iterations; must be reentrant.
using EvalHook = std::function<std::pair<double, double>(const Vector&)>;

/// Full-batch gradient descent: w <- w - η (∇f(w) + λ mask∘w), exactly
/// cfg.iterations steps. Iteration 0 (the start point), every record_every-th
/// iterate and the final iterate are recorded; the recorded objective includes
/// the (λ/2)‖mask∘w‖² term. A non-finite objective or gradient stops the run
/// with RunStatus::Diverged and the last finite parameters.
RunResult gd_run(const Objective& objective, Vector w0, const OptimizerConfig& cfg,
                 const EvalHook& eval_hook = {});

/// Mini-batch SGD with the gd_run update rule. Each epoch visits a fresh
/// permutation of the samples (Rng seeded from cfg.seed, Fisher-Yates) in
/// consecutive batches; the last batch of an epoch may be short. One
/// iteration is one batch step. Recorded objectives are full-data values.
RunResult sgd_run(const Objective& objective, Vector w0, const OptimizerConfig& cfg,
                  const EvalHook& eval_hook = {});

/// Rescales the objective column to (v - v_min) / (v_0 - v_min). A constant
/// trace becomes 1 followed by zeros.
TrainTrace normalized_trace(const TrainTrace& trace);

/// First recorded iteration whose objective is <= threshold (use on a normalized trace).
std::optional<std::size_t> iterations_to_threshold(const TrainTrace& trace, double threshold = 0.1);

struct ConvergenceComparison {
  std::optional<std::size_t> first;
  std::optional<std::size_t> second;
  /// first reaches the threshold no later than second.
  bool first_not_slower() const;
};

/// Normalizes both traces and reports their threshold-crossing iterations.
ConvergenceComparison compare_convergence(const TrainTrace& first, const TrainTrace& second,
                                          double threshold = 0.1);

}  // namespace rlo
