#include "rlo/models.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "rlo/calculus.hpp"
#include "rlo/rng.hpp"

namespace rlo {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows of `data` named by `batch` (all rows when empty) and their count.
Matrix gather_rows(const Dataset& data, std::span<const std::size_t> batch) {
  std::vector<Index> idx(batch.begin(), batch.end());
  for (Index i : idx) {
    if (i < 0 || i >= data.size()) {
      throw std::invalid_argument(fmt::format("batch index {} out of range for {} samples", i, data.size()));
    }
  }
  return data.features(idx, Eigen::all);
}

Index sample_index(std::span<const std::size_t> batch, Index i) {
  return batch.empty() ? i : static_cast<Index>(batch[static_cast<std::size_t>(i)]);
}

}  // namespace

Matrix unflatten_weights(const Vector& params, Index classes, Index dim) {
  if (params.size() != classes * dim) {
    throw std::invalid_argument(
        fmt::format("{} parameters cannot form a {}x{} matrix", params.size(), classes, dim));
  }
  return Eigen::Map<const RowMajorMatrix>(params.data(), classes, dim);
}

Vector flatten_weights(const Matrix& weights) {
  const RowMajorMatrix rm = weights;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

LinearObjective::LinearObjective(const Dataset& data, LossSpec spec, double lambda)
    : data_(&data), spec_(spec), lambda_(lambda) {
  spec_.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  if (spec_.is_binary() && !data.is_binary()) {
    throw std::invalid_argument(
        fmt::format("{} needs binary labels but '{}' has {} classes", spec_.describe(), data.name,
                    data.num_classes));
  }
  classes_ = spec_.is_binary() ? 1 : class_count(data);
}

void LinearObjective::exclude_from_l2(Index column) {
  if (column < 0 || column >= data_->dim()) throw std::invalid_argument("column out of range");
  unpenalized_.push_back(column);
}

Index LinearObjective::dimension() const { return classes_ * data_->dim(); }

Vector LinearObjective::l2_mask() const {
  Vector mask = Vector::Ones(dimension());
  const Index d = data_->dim();
  for (Index c = 0; c < classes_; ++c) {
    for (Index j : unpenalized_) mask(c * d + j) = 0.0;
  }
  return mask;
}

double LinearObjective::evaluate(const Vector& params, std::span<const std::size_t> batch,
                                 Vector* grad) const {
  if (params.size() != dimension()) {
    throw std::invalid_argument(
        fmt::format("expected {} parameters, got {}", dimension(), params.size()));
  }
  const Dataset& data = *data_;
  Matrix gathered;
  if (!batch.empty()) gathered = gather_rows(data, batch);
  const Matrix& x = batch.empty() ? data.features : gathered;
  const Index n = x.rows();
  double value = 0.0;

  if (spec_.is_binary()) {
    const Vector raw = x * params;
    Vector coeff(n);
    for (Index i = 0; i < n; ++i) {
      const double y = data.labels[static_cast<std::size_t>(sample_index(batch, i))];
      const double z = y * raw(i);
      value += binary_point_loss(z, spec_);
      coeff(i) = y * binary_margin_derivative(z, spec_);
    }
    value /= static_cast<double>(n);
    if (grad) *grad = x.transpose() * coeff / static_cast<double>(n);
  } else {
    const Matrix w = unflatten_weights(params, classes_, data.dim());
    const Matrix logits = x * w.transpose();
    Matrix g(n, classes_);
    for (Index i = 0; i < n; ++i) {
      const HeadEval h =
          head_value_and_grad(logits.row(i).transpose(), data.class_index(sample_index(batch, i)), spec_);
      value += h.value;
      g.row(i) = h.logit_grad.transpose();
    }
    value /= static_cast<double>(n);
    if (grad) *grad = flatten_weights(g.transpose() * x / static_cast<double>(n));
  }

  if (lambda_ > 0.0) {
    const Vector masked = l2_mask().cwiseProduct(params);
    value += 0.5 * lambda_ * masked.squaredNorm();
    if (grad) *grad += lambda_ * masked;
  }
  return value;
}

LinearObjective linear_objective(const Dataset& data, const LossSpec& spec, double lambda) {
  return LinearObjective(data, spec, lambda);
}

// ---- networks --------------------------------------------------------------

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

namespace {

Matrix activate(const Matrix& a, Activation act) {
  switch (act) {
    case Activation::ReLU: return a.cwiseMax(0.0);
    case Activation::Tanh: return a.array().tanh().matrix();
    case Activation::Identity: return a;
  }
  return a;
}

Matrix activation_slope(const Matrix& a, Activation act) {
  switch (act) {
    case Activation::ReLU: return (a.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh: return (1.0 - a.array().tanh().square()).matrix();
    case Activation::Identity: return Matrix::Ones(a.rows(), a.cols());
  }
  return Matrix::Ones(a.rows(), a.cols());
}

void check_sizes(const std::vector<Index>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("a network needs at least input and output widths");
  for (Index s : sizes) {
    if (s < 1) throw std::invalid_argument("layer widths must be positive");
  }
}

}  // namespace

Index MlpParams::input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
Index MlpParams::output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

std::vector<Index> MlpParams::sizes() const {
  std::vector<Index> s;
  if (layers.empty()) return s;
  s.push_back(input_dim());
  for (const auto& l : layers) s.push_back(l.weight.rows());
  return s;
}

Index MlpParams::parameter_count() const {
  Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  return total;
}

void MlpParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows()) {
      throw std::invalid_argument(fmt::format("layer {}: bias has {} entries for {} outputs", i,
                                              l.bias.size(), l.weight.rows()));
    }
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
      throw std::invalid_argument(fmt::format("layer {} expects {} inputs but layer {} emits {}", i,
                                              l.weight.cols(), i - 1, layers[i - 1].weight.rows()));
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw std::invalid_argument(fmt::format("layer {} has non-finite entries", i));
    }
  }
}

Vector MlpParams::flatten() const {
  Vector flat(parameter_count());
  Index at = 0;
  for (const auto& l : layers) {
    flat.segment(at, l.weight.size()) = flatten_weights(l.weight);
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

MlpParams MlpParams::unflatten(const Vector& flat, const std::vector<Index>& sizes,
                               Activation hidden) {
  check_sizes(sizes);
  MlpParams p;
  p.hidden = hidden;
  Index at = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const Index in = sizes[i];
    const Index out = sizes[i + 1];
    if (at + out * in + out > flat.size()) break;
    DenseLayer l;
    l.weight = unflatten_weights(flat.segment(at, out * in), out, in);
    at += out * in;
    l.bias = flat.segment(at, out);
    at += out;
    p.layers.push_back(std::move(l));
  }
  if (p.layers.size() + 1 != sizes.size() || at != flat.size()) {
    throw std::invalid_argument(
        fmt::format("{} parameters do not match the layer widths", flat.size()));
  }
  return p;
}

MlpParams init_params(const std::vector<Index>& sizes, InitScheme scheme, std::uint64_t seed,
                      Activation hidden) {
  check_sizes(sizes);
  MlpParams p;
  p.hidden = hidden;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const Index in = sizes[i];
    const Index out = sizes[i + 1];
    DenseLayer l{Matrix::Zero(out, in), Vector::Zero(out)};
    if (scheme == InitScheme::UniformScaled) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      for (Index r = 0; r < out; ++r) {
        for (Index c = 0; c < in; ++c) l.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    p.layers.push_back(std::move(l));
  }
  return p;
}

ForwardCache mlp_forward_cached(const MlpParams& params, const Matrix& inputs) {
  params.validate();
  if (inputs.cols() != params.input_dim()) {
    throw std::invalid_argument(fmt::format("network expects {} inputs, got {}", params.input_dim(),
                                            inputs.cols()));
  }
  ForwardCache cache;
  Matrix h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix a = h * layer.weight.transpose();
    a.rowwise() += layer.bias.transpose();
    cache.activations.push_back(std::move(h));
    if (l + 1 < params.layers.size()) {
      h = activate(a, params.hidden);
    } else {
      cache.logits = a;
    }
    cache.preactivations.push_back(std::move(a));
  }
  return cache;
}

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs) {
  return mlp_forward_cached(params, inputs).logits;
}

Vector mlp_forward(const MlpParams& params, const Vector& x) {
  return mlp_forward_batch(params, x.transpose()).row(0).transpose();
}

BackpropResult mlp_backprop(const MlpParams& params, const ForwardCache& cache,
                            const Matrix& logit_grads) {
  const std::size_t depth = params.layers.size();
  if (cache.activations.size() != depth || logit_grads.rows() != cache.logits.rows() ||
      logit_grads.cols() != cache.logits.cols()) {
    throw std::invalid_argument("logit gradients do not match the forward cache");
  }
  BackpropResult out;
  out.grads.hidden = params.hidden;
  out.grads.layers.resize(depth);
  Matrix g = logit_grads;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = params.layers[l];
    out.grads.layers[l].weight = g.transpose() * cache.activations[l];
    out.grads.layers[l].bias = g.colwise().sum().transpose();
    Matrix upstream = g * layer.weight;
    if (l > 0) {
      g = upstream.cwiseProduct(activation_slope(cache.preactivations[l - 1], params.hidden));
    } else {
      out.input_grad = std::move(upstream);
    }
  }
  return out;
}

MlpLossGrad mlp_backward(const MlpParams& params, const Dataset& data,
                         std::span<const std::size_t> batch, const LossSpec& spec) {
  spec.validate();
  if (spec.is_binary()) {
    throw std::invalid_argument(fmt::format("{} is not a network head; use ce, rooted_ce or focal",
                                            spec.describe()));
  }
  if (params.output_dim() != class_count(data)) {
    throw std::invalid_argument(fmt::format("network emits {} logits but data has {} classes",
                                            params.output_dim(), class_count(data)));
  }
  Matrix gathered;
  if (!batch.empty()) gathered = gather_rows(data, batch);
  const Matrix& x = batch.empty() ? data.features : gathered;
  const Index n = x.rows();
  if (n < 1) throw std::invalid_argument("empty batch");
  const ForwardCache cache = mlp_forward_cached(params, x);
  Matrix g(n, cache.logits.cols());
  double value = 0.0;
  for (Index i = 0; i < n; ++i) {
    const HeadEval h = head_value_and_grad(cache.logits.row(i).transpose(),
                                           data.class_index(sample_index(batch, i)), spec);
    value += h.value;
    g.row(i) = h.logit_grad.transpose() / static_cast<double>(n);
  }
  MlpLossGrad out;
  out.value = value / static_cast<double>(n);
  out.grads = mlp_backprop(params, cache, g).grads;
  return out;
}

MlpObjective::MlpObjective(const Dataset& data, std::vector<Index> sizes, LossSpec spec,
                           Activation hidden)
    : data_(&data), sizes_(std::move(sizes)), spec_(spec), hidden_(hidden), dimension_(0) {
  check_sizes(sizes_);
  spec_.validate();
  if (spec_.is_binary()) throw std::invalid_argument("network objectives need a multiclass head");
  if (sizes_.front() != data.dim() || sizes_.back() != class_count(data)) {
    throw std::invalid_argument(fmt::format("widths {}..{} do not fit data with {} features and {} classes",
                                            sizes_.front(), sizes_.back(), data.dim(), class_count(data)));
  }
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) dimension_ += sizes_[i + 1] * (sizes_[i] + 1);
}

double MlpObjective::evaluate(const Vector& params, std::span<const std::size_t> batch,
                              Vector* grad) const {
  const MlpLossGrad r = mlp_backward(unflatten(params), *data_, batch, spec_);
  if (grad) *grad = r.grads.flatten();
  return r.value;
}

Vector MlpObjective::l2_mask() const {
  Vector mask(dimension_);
  Index at = 0;
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    const Index w = sizes_[i + 1] * sizes_[i];
    mask.segment(at, w).setOnes();
    at += w;
    mask.segment(at, sizes_[i + 1]).setZero();
    at += sizes_[i + 1];
  }
  return mask;
}

// ---- evaluation ------------------------------------------------------------

int argmax_lowest(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

double evaluate_linear(const Vector& params, const Dataset& data) {
  if (data.size() < 1) throw std::invalid_argument("cannot evaluate on empty data");
  const Index d = data.dim();
  std::size_t correct = 0;
  if (data.is_binary() && params.size() == d) {
    const Vector s = data.features * params;
    for (Index i = 0; i < s.size(); ++i) {
      const int pred = s(i) >= 0.0 ? 1 : -1;
      correct += pred == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
  } else {
    const Index c = class_count(data);
    const Matrix logits = data.features * unflatten_weights(params, c, d).transpose();
    for (Index i = 0; i < logits.rows(); ++i) {
      correct += argmax_lowest(logits.row(i).transpose()) == data.class_index(i) ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_mlp(const MlpParams& params, const Dataset& data) {
  if (data.size() < 1) throw std::invalid_argument("cannot evaluate on empty data");
  const Matrix logits = mlp_forward_batch(params, data.features);
  std::size_t correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    correct += argmax_lowest(logits.row(i).transpose()) == data.class_index(i) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---- decision grid ---------------------------------------------------------

void DecisionGrid::write_csv(std::ostream& out) const {
  out << fmt::format("# bounds x_min={} x_max={} y_min={} y_max={}\n", bounds.x_min, bounds.x_max,
                     bounds.y_min, bounds.y_max);
  out << fmt::format("# resolution={} order=row-major(y outer) hidden={} p_pos=softmax[0]\n",
                     resolution, to_string(hidden));
  out << "x,y,p_pos\n";
  for (const auto& pt : points) out << fmt::format("{},{},{}\n", pt.x, pt.y, pt.p);
}

DecisionGrid decision_grid(const MlpParams& params, const GridBounds& bounds,
                           std::size_t resolution) {
  params.validate();
  if (params.input_dim() != 2) {
    throw std::invalid_argument(
        fmt::format("decision grids need a 2-input network, got {} inputs", params.input_dim()));
  }
  if (resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
    throw std::invalid_argument("grid bounds must be increasing");
  }
  const auto r = static_cast<Index>(resolution);
  const double dx = (bounds.x_max - bounds.x_min) / static_cast<double>(r - 1);
  const double dy = (bounds.y_max - bounds.y_min) / static_cast<double>(r - 1);
  Matrix lattice(r * r, 2);
  for (Index iy = 0; iy < r; ++iy) {
    for (Index ix = 0; ix < r; ++ix) {
      lattice(iy * r + ix, 0) = bounds.x_min + dx * static_cast<double>(ix);
      lattice(iy * r + ix, 1) = bounds.y_min + dy * static_cast<double>(iy);
    }
  }
  const Matrix logits = mlp_forward_batch(params, lattice);
  DecisionGrid grid;
  grid.bounds = bounds;
  grid.resolution = resolution;
  grid.hidden = params.hidden;
  grid.points.reserve(static_cast<std::size_t>(r * r));
  for (Index i = 0; i < lattice.rows(); ++i) {
    grid.points.push_back({lattice(i, 0), lattice(i, 1), softmax(logits.row(i).transpose())(0)});
  }
  return grid;
}

GridBounds bounds_of(const Dataset& data, double margin) {
  if (data.size() < 1 || data.dim() < 2) throw std::invalid_argument("need 2-D data for bounds");
  const auto col0 = data.features.col(0);
  const auto col1 = data.features.col(1);
  return {col0.minCoeff() - margin, col0.maxCoeff() + margin, col1.minCoeff() - margin,
          col1.maxCoeff() + margin};
}

}  // namespace rlo
