#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "rlo/data.hpp"
#include "rlo/types.hpp"

namespace rlo {

enum class LossFamily { Logistic, RLO, CrossEntropy, RootedCE, Focal };

std::string_view to_string(LossFamily family);
/// Accepts the canonical names ("logistic", "rlo", "ce", "rooted_ce", "focal")
/// and a few aliases ("lr", "cross_entropy", "rooted-ce", ...).
LossFamily parse_loss_family(std::string_view name);

/// Loss family plus its parameters. k and m only matter for the rooted
/// families, gamma only for focal.
struct LossSpec {
  LossFamily family = LossFamily::Logistic;
  double k = 2.0;
  double m = 2.0;
  double gamma = 2.0;

  static LossSpec logistic();
  /// m defaults to k, the multiplier of the plain rooted objective.
  static LossSpec rlo(double k, std::optional<double> m = std::nullopt);
  static LossSpec cross_entropy();
  static LossSpec rooted_ce(double k, std::optional<double> m = std::nullopt);
  static LossSpec focal(double gamma = 2.0);

  bool is_binary() const { return family == LossFamily::Logistic || family == LossFamily::RLO; }
  bool is_rooted() const { return family == LossFamily::RLO || family == LossFamily::RootedCE; }

  /// Throws std::invalid_argument unless k > 1, m > 0 (rooted) and gamma >= 0 (focal).
  void validate() const;

  /// Short label such as "rlo(k=3,m=3)".
  std::string describe() const;
};

/// log(1 + e^t) without overflow; t + log1p(e^-t) for t > 0.
double softplus(double t);
double sigmoid(double z);
/// log σ(z) = -softplus(-z).
double log_sigmoid(double z);

/// Per-sample losses on the margin z = y wᵀx.
double logistic_point(double margin);
/// m (1 + e^{-z})^{1/k}, evaluated as m exp(softplus(-z) / k).
double rlo_point(double margin, double k, double m);
double binary_point_loss(double margin, const LossSpec& spec);

/// Margins y_i wᵀx_i; throws on dimension mismatch or non-binary labels.
Vector margins(const Vector& w, const Dataset& data);

double logistic_loss(const Vector& w, const Dataset& data);
double rlo_loss(const Vector& w, const Dataset& data, double k, double m);
/// Mean per-sample loss of a Logistic or RLO spec.
double binary_loss(const Vector& w, const Dataset& data, const LossSpec& spec);

Vector log_softmax(const Vector& logits);
Vector softmax(const Vector& logits);

/// Value and logit-space gradient of a multiclass head at one sample.
struct HeadEval {
  double value = 0.0;
  Vector logit_grad;
};

/// CrossEntropy, RootedCE or Focal on one logit vector; label is a class index.
double head_value(const Vector& logits, int label, const LossSpec& spec);
HeadEval head_value_and_grad(const Vector& logits, int label, const LossSpec& spec);

/// Multiclass losses for a c×d weight matrix (logits = W x), averaged over n.
double ce_loss(const Matrix& weights, const Dataset& data);
double rooted_ce_loss(const Matrix& weights, const Dataset& data, double k, double m);
double focal_loss(const Matrix& weights, const Dataset& data, double gamma);
double multiclass_loss(const Matrix& weights, const Dataset& data, const LossSpec& spec);

/// Classes seen by a multiclass model of `data` (2 for binary data).
int class_count(const Dataset& data);

}  // namespace rlo
