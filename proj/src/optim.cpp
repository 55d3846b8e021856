#include "rlo/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <limits>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "rlo/rng.hpp"

namespace rlo {

void OptimizerConfig::validate(std::size_t samples) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (!(l2_lambda >= 0.0)) throw std::invalid_argument("l2 lambda must be nonnegative");
  if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  if (batch_size && (*batch_size < 1 || *batch_size > samples)) {
    throw std::invalid_argument(
        fmt::format("batch size {} must lie in [1, {}]", *batch_size, samples));
  }
}

std::string_view to_string(RunStatus status) {
  return status == RunStatus::Completed ? "completed" : "diverged";
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "iter,loss,train_acc,test_acc,grad_norm,seconds\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{}\n", r.iteration, r.objective, r.train_acc, r.test_acc,
                       r.grad_norm, r.seconds);
  }
}

nlohmann::json TrainTrace::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"iter", r.iteration},
                   {"loss", r.objective},
                   {"train_acc", r.train_acc},
                   {"test_acc", r.test_acc},
                   {"grad_norm", r.grad_norm},
                   {"seconds", r.seconds}});
  }
  return arr;
}

namespace {

using Clock = std::chrono::steady_clock;

class Recorder {
 public:
  Recorder(const OptimizerConfig& cfg, const EvalHook& hook)
      : cfg_(cfg), hook_(hook), start_(Clock::now()) {}

  bool due(std::size_t t) const {
    return t == 0 || t % cfg_.record_every == 0 || t == cfg_.iterations;
  }

  void record(TrainTrace& trace, std::size_t t, double objective, double grad_norm,
              const Vector& w) const {
    TraceRecord r;
    r.iteration = t;
    r.objective = objective;
    r.grad_norm = grad_norm;
    if (hook_) {
      std::tie(r.train_acc, r.test_acc) = hook_(w);
    } else {
      r.train_acc = std::numeric_limits<double>::quiet_NaN();
      r.test_acc = std::numeric_limits<double>::quiet_NaN();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    trace.records.push_back(r);
  }

 private:
  const OptimizerConfig& cfg_;
  const EvalHook& hook_;
  Clock::time_point start_;
};

struct Regularized {
  double value;
  Vector grad;
};

Regularized regularize(double value, Vector grad, const Vector& w, const Vector& mask,
                       double lambda) {
  if (lambda > 0.0) {
    const Vector masked = mask.cwiseProduct(w);
    value += 0.5 * lambda * masked.squaredNorm();
    grad += lambda * masked;
  }
  return {value, std::move(grad)};
}

bool finite(double v, const Vector& g) { return std::isfinite(v) && g.allFinite(); }

void check_start(const Objective& objective, const Vector& w0) {
  if (w0.size() != objective.dimension()) {
    throw std::invalid_argument(fmt::format("start point has dimension {} but objective needs {}",
                                            w0.size(), objective.dimension()));
  }
}

}  // namespace

RunResult gd_run(const Objective& objective, Vector w0, const OptimizerConfig& cfg,
                 const EvalHook& eval_hook) {
  cfg.validate(objective.sample_count());
  if (cfg.batch_size) throw std::invalid_argument("gd_run is full batch; use sgd_run for mini-batches");
  check_start(objective, w0);
  const Vector mask = objective.l2_mask();
  Recorder recorder(cfg, eval_hook);
  RunResult result;
  Vector w = std::move(w0);
  Vector grad(w.size());
  for (std::size_t t = 0;; ++t) {
    const double raw = objective.evaluate(w, {}, &grad);
    auto [value, g] = regularize(raw, grad, w, mask, cfg.l2_lambda);
    if (!finite(value, g)) {
      result.status = RunStatus::Diverged;
      break;
    }
    if (recorder.due(t)) recorder.record(result.trace, t, value, g.norm(), w);
    if (t == cfg.iterations) break;
    Vector next = w - cfg.learning_rate * g;
    if (!next.allFinite()) {
      result.status = RunStatus::Diverged;
      break;
    }
    w = std::move(next);
  }
  result.params = std::move(w);
  return result;
}

RunResult sgd_run(const Objective& objective, Vector w0, const OptimizerConfig& cfg,
                  const EvalHook& eval_hook) {
  cfg.validate(objective.sample_count());
  if (!cfg.batch_size) throw std::invalid_argument("sgd_run needs a finite batch size");
  check_start(objective, w0);
  const Vector mask = objective.l2_mask();
  const std::size_t n = objective.sample_count();
  const std::size_t batch = *cfg.batch_size;
  Recorder recorder(cfg, eval_hook);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n;  // forces a shuffle before the first step

  RunResult result;
  Vector w = std::move(w0);
  Vector grad(w.size());
  for (std::size_t t = 0;; ++t) {
    if (recorder.due(t)) {
      const double raw = objective.evaluate(w, {}, &grad);
      auto [value, g] = regularize(raw, grad, w, mask, cfg.l2_lambda);
      if (!finite(value, g)) {
        result.status = RunStatus::Diverged;
        break;
      }
      recorder.record(result.trace, t, value, g.norm(), w);
    }
    if (t == cfg.iterations) break;
    if (cursor >= n) {
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::size_t len = std::min(batch, n - cursor);
    const std::span<const std::size_t> idx(order.data() + cursor, len);
    cursor += len;
    const double raw = objective.evaluate(w, idx, &grad);
    auto [value, g] = regularize(raw, grad, w, mask, cfg.l2_lambda);
    if (!finite(value, g)) {
      result.status = RunStatus::Diverged;
      break;
    }
    Vector next = w - cfg.learning_rate * g;
    if (!next.allFinite()) {
      result.status = RunStatus::Diverged;
      break;
    }
    w = std::move(next);
  }
  result.params = std::move(w);
  return result;
}

TrainTrace normalized_trace(const TrainTrace& trace) {
  if (trace.empty()) throw std::invalid_argument("cannot normalize an empty trace");
  TrainTrace out = trace;
  double lo = trace.records.front().objective;
  for (const auto& r : trace.records) lo = std::min(lo, r.objective);
  const double span = trace.records.front().objective - lo;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    auto& r = out.records[i];
    if (span > 0.0) {
      r.objective = (r.objective - lo) / span;
    } else {
      r.objective = i == 0 ? 1.0 : 0.0;
    }
  }
  return out;
}

std::optional<std::size_t> iterations_to_threshold(const TrainTrace& trace, double threshold) {
  for (const auto& r : trace.records) {
    if (r.objective <= threshold) return r.iteration;
  }
  return std::nullopt;
}

bool ConvergenceComparison::first_not_slower() const {
  if (!first) return !second.has_value() ? true : false;
  if (!second) return true;
  return *first <= *second;
}

ConvergenceComparison compare_convergence(const TrainTrace& first, const TrainTrace& second,
                                          double threshold) {
  return {iterations_to_threshold(normalized_trace(first), threshold),
          iterations_to_threshold(normalized_trace(second), threshold)};
}

}  // namespace rlo
