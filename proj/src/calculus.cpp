#include "rlo/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace rlo {

namespace {

void require_root(double k) {
  if (!(k > 1.0) || !std::isfinite(k)) {
    throw std::invalid_argument(fmt::format("root parameter k must be finite and > 1, got {}", k));
  }
}

// log[e^{-z} (1 + e^{-z})^{1/k - 1}] = softplus(-z)/k - softplus(z)
double log_rooted_slope(double z, double k) { return softplus(-z) / k - softplus(z); }

}  // namespace

double binary_margin_derivative(double margin, const LossSpec& spec) {
  switch (spec.family) {
    case LossFamily::Logistic: return -std::exp(-softplus(margin));
    case LossFamily::RLO: return -(spec.m / spec.k) * std::exp(log_rooted_slope(margin, spec.k));
    default: throw std::invalid_argument(fmt::format("{} is not a binary loss", spec.describe()));
  }
}

Vector binary_grad(const Vector& w, const Dataset& data, const LossSpec& spec) {
  spec.validate();
  if (!spec.is_binary()) throw std::invalid_argument(fmt::format("{} is not a binary loss", spec.describe()));
  const Vector z = margins(w, data);
  Vector coeff(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    coeff(i) = binary_margin_derivative(z(i), spec) * data.labels[static_cast<std::size_t>(i)];
  }
  return data.features.transpose() * coeff / static_cast<double>(data.size());
}

Vector logistic_grad(const Vector& w, const Dataset& data) {
  return binary_grad(w, data, LossSpec::logistic());
}

Vector rlo_grad(const Vector& w, const Dataset& data, double k, double m) {
  return binary_grad(w, data, LossSpec::rlo(k, m));
}

Matrix multiclass_grad(const Matrix& weights, const Dataset& data, const LossSpec& spec) {
  spec.validate();
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  if (weights.cols() != data.dim() || weights.rows() != class_count(data)) {
    throw std::invalid_argument(fmt::format("weights are {}x{} but data needs {}x{}", weights.rows(),
                                            weights.cols(), class_count(data), data.dim()));
  }
  const Matrix logits = data.features * weights.transpose();
  Matrix logit_grads(data.size(), weights.rows());
  for (Index i = 0; i < data.size(); ++i) {
    logit_grads.row(i) =
        head_value_and_grad(logits.row(i).transpose(), data.class_index(i), spec).logit_grad.transpose();
  }
  return logit_grads.transpose() * data.features / static_cast<double>(data.size());
}

Matrix ce_grad(const Matrix& weights, const Dataset& data) {
  return multiclass_grad(weights, data, LossSpec::cross_entropy());
}

Matrix rooted_ce_grad(const Matrix& weights, const Dataset& data, double k, double m) {
  return multiclass_grad(weights, data, LossSpec::rooted_ce(k, m));
}

Matrix focal_grad(const Matrix& weights, const Dataset& data, double gamma) {
  return multiclass_grad(weights, data, LossSpec::focal(gamma));
}

double lr_hessian_coeff(double z) { return std::exp(-softplus(z) - softplus(-z)); }

double rlo_hessian_coeff(double z, double k) {
  require_root(k);
  const double inv_k = 1.0 / k;
  return std::exp(log_rooted_slope(z, k)) * (inv_k + (1.0 - inv_k) * sigmoid(z));
}

double rlo_hessian_under_coeff(double z, double k) {
  require_root(k);
  return std::exp(log_rooted_slope(z, k)) / k;
}

double conditioning_ratio(double z, double k) {
  require_root(k);
  // pow is exact at the z = 0 witnesses; log space only once e^{-z} overflows
  if (z > -700.0) return std::pow(1.0 + std::exp(-z), 1.0 + 1.0 / k) / k;
  return std::exp((1.0 + 1.0 / k) * softplus(-z)) / k;
}

bool ratio_sufficient_condition(double z, double k) {
  require_root(k);
  return std::log(k) <= softplus(-z);
}

bool ratio_condition_from_loss(double z, double k) {
  require_root(k);
  return std::log(k) <= std::exp(softplus(-z) / k);
}

double legacy_rlo_grad_coeff(double z, double k) {
  require_root(k);
  return sigmoid(z) * std::exp(softplus(-z) / k);
}

double legacy_rlo_hessian_coeff(double z, double k) {
  require_root(k);
  const double s = sigmoid(z);
  return std::exp(softplus(-z) / k) * s * (1.0 - s * (1.0 - 1.0 / k));
}

double ConditioningReport::fraction_ratio_above_one() const {
  if (records.empty()) return 0.0;
  const auto above = std::count_if(records.begin(), records.end(),
                                   [](const ConditioningRecord& r) { return r.ratio > 1.0; });
  return static_cast<double>(above) / static_cast<double>(records.size());
}

void ConditioningReport::write_csv(std::ostream& out) const {
  out << "index,z,coeff_lr,coeff_rlo,coeff_rlo_under,ratio,sufficient\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.index, r.z, r.coeff_lr, r.coeff_rlo,
                       r.coeff_rlo_under, r.ratio, r.sufficient_holds ? 1 : 0);
  }
}

ConditioningReport conditioning_report(const Vector& w, const Dataset& data, double k) {
  require_root(k);
  const Vector z = margins(w, data);
  ConditioningReport report;
  report.k = k;
  report.records.reserve(static_cast<std::size_t>(z.size()));
  for (Index i = 0; i < z.size(); ++i) {
    ConditioningRecord r;
    r.index = static_cast<std::size_t>(i);
    r.z = z(i) + 0.0;  // no "-0" in reports
    r.coeff_lr = lr_hessian_coeff(r.z);
    r.coeff_rlo = rlo_hessian_coeff(r.z, k);
    r.coeff_rlo_under = rlo_hessian_under_coeff(r.z, k);
    r.ratio = conditioning_ratio(r.z, k);
    r.sufficient_holds = ratio_sufficient_condition(r.z, k);
    r.loss_condition_holds = ratio_condition_from_loss(r.z, k);
    report.records.push_back(r);
  }
  return report;
}

HessianMatrix assemble_hessian(const Vector& w, const Dataset& data, const LossSpec& spec,
                               double lambda) {
  spec.validate();
  if (!spec.is_binary()) {
    throw std::invalid_argument("assemble_hessian supports the logistic and rlo families only");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  const Vector z = margins(w, data);
  Vector coeff(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    coeff(i) = spec.family == LossFamily::Logistic
                   ? lr_hessian_coeff(z(i))
                   : (spec.m / spec.k) * rlo_hessian_coeff(z(i), spec.k);
  }
  HessianMatrix h;
  h.values = data.features.transpose() * coeff.asDiagonal() * data.features;
  h.values /= static_cast<double>(data.size());
  h.values.diagonal().array() += lambda;
  // Exact symmetry; the triple product can differ in the last bit.
  h.values = (0.5 * (h.values + h.values.transpose())).eval();
  h.family = spec.family;
  h.k = spec.family == LossFamily::RLO ? spec.k : 0.0;
  h.m = spec.family == LossFamily::RLO ? spec.m : 0.0;
  h.lambda = lambda;
  return h;
}

Vector symmetric_eigenvalues(const Matrix& a, double tolerance, int max_sweeps) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eigenvalues need a square matrix");
  const Index n = a.rows();
  if (n == 0) return Vector();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("matrix is not symmetric");
  }
  Matrix m = a;
  const double norm = m.norm();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const double off = std::sqrt(std::max(0.0, m.squaredNorm() - m.diagonal().squaredNorm()));
    if (off <= tolerance * norm) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // m <- Jᵀ m J, columns first then rows.
        for (Index r = 0; r < n; ++r) {
          const double mrp = m(r, p);
          const double mrq = m(r, q);
          m(r, p) = c * mrp - s * mrq;
          m(r, q) = s * mrp + c * mrq;
        }
        for (Index r = 0; r < n; ++r) {
          const double mpr = m(p, r);
          const double mqr = m(q, r);
          m(p, r) = c * mpr - s * mqr;
          m(q, r) = s * mpr + c * mqr;
        }
        m(p, q) = 0.0;
        m(q, p) = 0.0;
      }
    }
  }
  Vector ev = m.diagonal();
  std::sort(ev.data(), ev.data() + ev.size());
  return ev;
}

double condition_number(const Matrix& h) {
  const Vector ev = symmetric_eigenvalues(h);
  if (ev.size() == 0) throw std::invalid_argument("empty matrix");
  const double hi = ev(ev.size() - 1);
  const double lo = ev(0);
  if (!(hi > 0.0) || lo <= 1e-12 * hi) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double condition_number(const HessianMatrix& h) { return condition_number(h.values); }

Vector finite_diff_grad(const ScalarObjective& f, const Vector& w, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Vector g(w.size());
  Vector probe = w;
  for (Index j = 0; j < w.size(); ++j) {
    probe(j) = w(j) + h;
    const double up = f(probe);
    probe(j) = w(j) - h;
    const double down = f(probe);
    probe(j) = w(j);
    g(j) = (up - down) / (2.0 * h);
  }
  return g;
}

Matrix finite_diff_jacobian(const VectorFunction& g, const Vector& w, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Vector probe = w;
  Matrix jac;
  for (Index j = 0; j < w.size(); ++j) {
    probe(j) = w(j) + h;
    const Vector up = g(probe);
    probe(j) = w(j) - h;
    const Vector down = g(probe);
    probe(j) = w(j);
    if (j == 0) jac.resize(up.size(), w.size());
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

}  // namespace rlo
