#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "rlo/data.hpp"
#include "rlo/losses.hpp"
#include "rlo/types.hpp"

namespace rlo {

// Gradients of the averaged losses.

/// (1/n) Σ -y_i (1 - σ(z_i)) x_i.
Vector logistic_grad(const Vector& w, const Dataset& data);
/// (1/n) Σ -(m/k) y_i e^{-z_i} (1 + e^{-z_i})^{1/k - 1} x_i, in log space.
Vector rlo_grad(const Vector& w, const Dataset& data, double k, double m);
Vector binary_grad(const Vector& w, const Dataset& data, const LossSpec& spec);

/// Gradient of the per-sample binary loss with respect to the margin.
double binary_margin_derivative(double margin, const LossSpec& spec);

Matrix ce_grad(const Matrix& weights, const Dataset& data);
Matrix rooted_ce_grad(const Matrix& weights, const Dataset& data, double k, double m);
Matrix focal_grad(const Matrix& weights, const Dataset& data, double gamma);
Matrix multiclass_grad(const Matrix& weights, const Dataset& data, const LossSpec& spec);

// Per-sample Hessian coefficients, i.e. the scalar c(z) in c(z) x xᵀ.

/// σ(z)(1 - σ(z)) ∈ (0, 1/4].
double lr_hessian_coeff(double z);
/// Coefficient for the objective k (1 + e^{-z})^{1/k}:
/// e^{-z} (1 + e^{-z})^{1/k - 1} [1/k + (1 - 1/k) / (1 + e^{-z})]. Throws for k <= 1.
double rlo_hessian_coeff(double z, double k);
/// The first bracket term only: (1/k) e^{-z} (1 + e^{-z})^{1/k - 1}.
double rlo_hessian_under_coeff(double z, double k);
/// r = rlo_hessian_under_coeff / lr_hessian_coeff = (1 + e^{-z})^{1 + 1/k} / k.
double conditioning_ratio(double z, double k);
/// k <= 1 + e^{-z}: sufficient for r > 1.
bool ratio_sufficient_condition(double z, double k);
/// k <= exp((1 + e^{-z})^{1/k}): the same condition stated through the
/// per-sample rooted loss value. Not equivalent to ratio_sufficient_condition.
bool ratio_condition_from_loss(double z, double k);

/// Legacy closed forms g(w, x) = σ(z) l and h(w, x) = l σ(z) [1 - σ(z)(1 - 1/k)]
/// with l = (1 + e^{-z})^{1/k}. They disagree with finite differences for z != 0
/// and are kept only for comparison; nothing in the library optimizes with them.
double legacy_rlo_grad_coeff(double z, double k);
double legacy_rlo_hessian_coeff(double z, double k);

struct ConditioningRecord {
  std::size_t index = 0;
  double z = 0.0;
  double coeff_lr = 0.0;
  double coeff_rlo = 0.0;
  double coeff_rlo_under = 0.0;
  double ratio = 0.0;
  bool sufficient_holds = false;
  bool loss_condition_holds = false;
};

struct ConditioningReport {
  double k = 2.0;
  std::vector<ConditioningRecord> records;

  double fraction_ratio_above_one() const;
  /// CSV with columns index,z,coeff_lr,coeff_rlo,coeff_rlo_under,ratio,sufficient.
  void write_csv(std::ostream& out) const;
};

/// Per-sample conditioning diagnostics at the caller-supplied w.
ConditioningReport conditioning_report(const Vector& w, const Dataset& data, double k);

struct HessianMatrix {
  Matrix values;
  LossFamily family = LossFamily::Logistic;
  double k = 0.0;
  double m = 0.0;
  double lambda = 0.0;
};

/// (1/n) Σ c(z_i) x_i x_iᵀ + λ I for a Logistic or RLO spec (RLO scaled by m/k).
HessianMatrix assemble_hessian(const Vector& w, const Dataset& data, const LossSpec& spec,
                               double lambda = 0.0);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Throws std::invalid_argument for non-square or non-symmetric input.
Vector symmetric_eigenvalues(const Matrix& a, double tolerance = 1e-14, int max_sweeps = 100);

/// λ_max / λ_min; +∞ when λ_min <= 1e-12 λ_max.
double condition_number(const Matrix& h);
double condition_number(const HessianMatrix& h);

using ScalarObjective = std::function<double(const Vector&)>;
using VectorFunction = std::function<Vector(const Vector&)>;

/// Central differences (f(w + h e_j) - f(w - h e_j)) / 2h.
Vector finite_diff_grad(const ScalarObjective& f, const Vector& w, double h = 1e-6);
/// Column j holds the central difference of g along e_j.
Matrix finite_diff_jacobian(const VectorFunction& g, const Vector& w, double h = 1e-6);

}  // namespace rlo
