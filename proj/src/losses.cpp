#include "rlo/losses.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace rlo {

std::string_view to_string(LossFamily family) {
  switch (family) {
    case LossFamily::Logistic: return "logistic";
    case LossFamily::RLO: return "rlo";
    case LossFamily::CrossEntropy: return "ce";
    case LossFamily::RootedCE: return "rooted_ce";
    case LossFamily::Focal: return "focal";
  }
  return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
  if (name == "logistic" || name == "lr" || name == "lo") return LossFamily::Logistic;
  if (name == "rlo" || name == "rooted" || name == "rooted_logistic") return LossFamily::RLO;
  if (name == "ce" || name == "cross_entropy" || name == "cross-entropy") {
    return LossFamily::CrossEntropy;
  }
  if (name == "rooted_ce" || name == "rooted-ce" || name == "rce") return LossFamily::RootedCE;
  if (name == "focal") return LossFamily::Focal;
  throw std::invalid_argument(fmt::format("unknown loss family '{}'", name));
}

LossSpec LossSpec::logistic() { return LossSpec{LossFamily::Logistic, 2.0, 2.0, 2.0}; }

LossSpec LossSpec::rlo(double k, std::optional<double> m) {
  LossSpec s{LossFamily::RLO, k, m.value_or(k), 2.0};
  s.validate();
  return s;
}

LossSpec LossSpec::cross_entropy() { return LossSpec{LossFamily::CrossEntropy, 2.0, 2.0, 2.0}; }

LossSpec LossSpec::rooted_ce(double k, std::optional<double> m) {
  LossSpec s{LossFamily::RootedCE, k, m.value_or(k), 2.0};
  s.validate();
  return s;
}

LossSpec LossSpec::focal(double gamma) {
  LossSpec s{LossFamily::Focal, 2.0, 2.0, gamma};
  s.validate();
  return s;
}

void LossSpec::validate() const {
  if (is_rooted()) {
    if (!(k > 1.0) || !std::isfinite(k)) {
      throw std::invalid_argument(fmt::format("root parameter k must be finite and > 1, got {}", k));
    }
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw std::invalid_argument(fmt::format("multiplier m must be finite and > 0, got {}", m));
    }
  }
  if (family == LossFamily::Focal && (!(gamma >= 0.0) || !std::isfinite(gamma))) {
    throw std::invalid_argument(fmt::format("focal gamma must be >= 0, got {}", gamma));
  }
}

std::string LossSpec::describe() const {
  switch (family) {
    case LossFamily::RLO:
    case LossFamily::RootedCE: return fmt::format("{}(k={},m={})", to_string(family), k, m);
    case LossFamily::Focal: return fmt::format("focal(gamma={})", gamma);
    default: return std::string(to_string(family));
  }
}

double softplus(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) { return -softplus(-z); }

double logistic_point(double margin) { return softplus(-margin); }

double rlo_point(double margin, double k, double m) {
  return m * std::exp(softplus(-margin) / k);
}

double binary_point_loss(double margin, const LossSpec& spec) {
  switch (spec.family) {
    case LossFamily::Logistic: return logistic_point(margin);
    case LossFamily::RLO: return rlo_point(margin, spec.k, spec.m);
    default: throw std::invalid_argument(fmt::format("{} is not a binary loss", spec.describe()));
  }
}

Vector margins(const Vector& w, const Dataset& data) {
  if (!data.is_binary()) throw std::invalid_argument("binary loss needs ±1 labels");
  if (w.size() != data.dim()) {
    throw std::invalid_argument(
        fmt::format("weight dimension {} does not match data dimension {}", w.size(), data.dim()));
  }
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  Vector z = data.features * w;
  for (Index i = 0; i < z.size(); ++i) z(i) *= data.labels[static_cast<std::size_t>(i)];
  return z;
}

double logistic_loss(const Vector& w, const Dataset& data) {
  return binary_loss(w, data, LossSpec::logistic());
}

double rlo_loss(const Vector& w, const Dataset& data, double k, double m) {
  return binary_loss(w, data, LossSpec::rlo(k, m));
}

double binary_loss(const Vector& w, const Dataset& data, const LossSpec& spec) {
  spec.validate();
  if (!spec.is_binary()) throw std::invalid_argument(fmt::format("{} is not a binary loss", spec.describe()));
  const Vector z = margins(w, data);
  Vector per(z.size());
  for (Index i = 0; i < z.size(); ++i) per(i) = binary_point_loss(z(i), spec);
  return per.mean();
}

Vector log_softmax(const Vector& logits) {
  Index top = 0;
  const double mx = logits.maxCoeff(&top);
  // log1p of the non-max mass keeps -log p accurate when p is near 1
  double rest = 0.0;
  for (Index j = 0; j < logits.size(); ++j) {
    if (j != top) rest += std::exp(logits(j) - mx);
  }
  Vector out = logits.array() - mx - std::log1p(rest);
  out(top) = -std::log1p(rest);
  return out;
}

Vector softmax(const Vector& logits) { return log_softmax(logits).array().exp(); }

namespace {

void check_head(const Vector& logits, int label, const LossSpec& spec) {
  if (spec.is_binary()) {
    throw std::invalid_argument(fmt::format("{} is not a multiclass head", spec.describe()));
  }
  if (label < 0 || label >= logits.size()) {
    throw std::invalid_argument(
        fmt::format("class index {} out of range for {} logits", label, logits.size()));
  }
}

// d/dp [-(1-p)^γ log p] multiplied by p, written so p -> 1 and γ < 1 stay finite.
double focal_scaled_derivative(double log_p, double gamma) {
  const double one_minus_p = -std::expm1(log_p);
  const double p = std::exp(log_p);
  const double pow_gamma = gamma == 0.0 ? 1.0 : std::pow(one_minus_p, gamma);
  double first = 0.0;
  if (gamma != 0.0) {
    const double ratio = one_minus_p > 1e-300 ? log_p / one_minus_p : -1.0;
    first = gamma * p * pow_gamma * ratio;
  }
  return first - pow_gamma;
}

}  // namespace

double head_value(const Vector& logits, int label, const LossSpec& spec) {
  check_head(logits, label, spec);
  const double log_p = log_softmax(logits)(label);
  switch (spec.family) {
    case LossFamily::CrossEntropy: return -log_p;
    case LossFamily::RootedCE: return spec.m * std::exp(-log_p / spec.k);
    case LossFamily::Focal: {
      const double one_minus_p = -std::expm1(log_p);
      const double w = spec.gamma == 0.0 ? 1.0 : std::pow(one_minus_p, spec.gamma);
      return -w * log_p;
    }
    default: break;
  }
  throw std::invalid_argument("unsupported head");
}

HeadEval head_value_and_grad(const Vector& logits, int label, const LossSpec& spec) {
  check_head(logits, label, spec);
  const Vector logp = log_softmax(logits);
  const double log_p = logp(label);
  Vector s = logp.array().exp();
  Vector residual = s;  // softmax - onehot
  residual(label) -= 1.0;
  HeadEval out;
  switch (spec.family) {
    case LossFamily::CrossEntropy:
      out.value = -log_p;
      out.logit_grad = std::move(residual);
      break;
    case LossFamily::RootedCE: {
      out.value = spec.m * std::exp(-log_p / spec.k);
      out.logit_grad = (out.value / spec.k) * residual;
      break;
    }
    case LossFamily::Focal: {
      const double one_minus_p = -std::expm1(log_p);
      const double w = spec.gamma == 0.0 ? 1.0 : std::pow(one_minus_p, spec.gamma);
      out.value = -w * log_p;
      // dL/dz_j = (dL/dp · p)(δ_jy - s_j) = -(dL/dp · p) · residual_j
      out.logit_grad = -focal_scaled_derivative(log_p, spec.gamma) * residual;
      break;
    }
    default: throw std::invalid_argument("unsupported head");
  }
  return out;
}

int class_count(const Dataset& data) { return data.is_binary() ? 2 : data.num_classes; }

double multiclass_loss(const Matrix& weights, const Dataset& data, const LossSpec& spec) {
  spec.validate();
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  if (weights.cols() != data.dim() || weights.rows() != class_count(data)) {
    throw std::invalid_argument(fmt::format("weights are {}x{} but data needs {}x{}", weights.rows(),
                                            weights.cols(), class_count(data), data.dim()));
  }
  const Matrix logits = data.features * weights.transpose();
  Vector per(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    per(i) = head_value(logits.row(i).transpose(), data.class_index(i), spec);
  }
  return per.mean();
}

double ce_loss(const Matrix& weights, const Dataset& data) {
  return multiclass_loss(weights, data, LossSpec::cross_entropy());
}

double rooted_ce_loss(const Matrix& weights, const Dataset& data, double k, double m) {
  return multiclass_loss(weights, data, LossSpec::rooted_ce(k, m));
}

double focal_loss(const Matrix& weights, const Dataset& data, double gamma) {
  return multiclass_loss(weights, data, LossSpec::focal(gamma));
}

}  // namespace rlo
