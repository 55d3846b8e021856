#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rlo/data.hpp"
#include "rlo/losses.hpp"
#include "rlo/optim.hpp"
#include "rlo/types.hpp"

namespace rlo {

// ---- linear models ---------------------------------------------------------

/// Linear classifier objective. Binary families (Logistic, RLO) use a
/// d-vector; multiclass heads use a c×d matrix flattened row-major, i.e.
/// parameter c_idx * d + j is W(c_idx, j). Bias is an ordinary feature column
/// (see with_bias_column).
class LinearObjective final : public Objective {
 public:
  /// `lambda` adds (λ/2)‖mask∘w‖² to the value. Most callers leave it at 0 and
  /// let the optimizer apply OptimizerConfig::l2_lambda instead.
  LinearObjective(const Dataset& data, LossSpec spec, double lambda = 0.0);

  /// Exclude column j (e.g. the bias column) from the L2 mask.
  void exclude_from_l2(Index column);

  Index dimension() const override;
  std::size_t sample_count() const override { return static_cast<std::size_t>(data_->size()); }
  double evaluate(const Vector& params, std::span<const std::size_t> batch,
                  Vector* grad) const override;
  Vector l2_mask() const override;

  const LossSpec& spec() const { return spec_; }
  Index classes() const { return classes_; }

 private:
  const Dataset* data_;
  LossSpec spec_;
  double lambda_;
  Index classes_;
  std::vector<Index> unpenalized_;
};

/// The data must outlive the returned objective.
LinearObjective linear_objective(const Dataset& data, const LossSpec& spec, double lambda = 0.0);

/// View of flattened multiclass parameters as a c×d matrix.
Matrix unflatten_weights(const Vector& params, Index classes, Index dim);
Vector flatten_weights(const Matrix& weights);

// ---- fully-connected networks ----------------------------------------------

enum class Activation { ReLU, Tanh, Identity };
std::string_view to_string(Activation a);

struct DenseLayer {
  Matrix weight;  // out × in
  Vector bias;    // out
};

/// Affine layers with `hidden` applied between them; the last layer emits logits.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation hidden = Activation::ReLU;

  Index input_dim() const;
  Index output_dim() const;
  /// Layer widths {in, h1, ..., out}.
  std::vector<Index> sizes() const;
  Index parameter_count() const;
  /// Throws std::invalid_argument unless widths chain and entries are finite.
  void validate() const;

  /// Per layer: weight row-major, then bias.
  Vector flatten() const;
  static MlpParams unflatten(const Vector& flat, const std::vector<Index>& sizes,
                             Activation hidden = Activation::ReLU);
};

enum class InitScheme { Zeros, UniformScaled };

/// `sizes` = {in, h1, ..., out} gives sizes.size() - 1 affine layers. UniformScaled
/// draws weights from U(±√(6 / (fan_in + fan_out))) with Rng(seed); biases are zero.
MlpParams init_params(const std::vector<Index>& sizes, InitScheme scheme, std::uint64_t seed,
                      Activation hidden = Activation::ReLU);

/// Logits for one input.
Vector mlp_forward(const MlpParams& params, const Vector& x);
/// Logits for every row of `inputs` (n × c).
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs);

/// Pre-activations and activations kept for backpropagation.
struct ForwardCache {
  std::vector<Matrix> activations;      // input to layer l (n × in_l)
  std::vector<Matrix> preactivations;   // output of layer l before activation
  Matrix logits;
};
ForwardCache mlp_forward_cached(const MlpParams& params, const Matrix& inputs);

struct BackpropResult {
  MlpParams grads;   // same shapes as the network
  Matrix input_grad; // n × in
};

/// Pulls dL/dlogits (n × c, already scaled by any 1/n) back through the network.
BackpropResult mlp_backprop(const MlpParams& params, const ForwardCache& cache,
                            const Matrix& logit_grads);

struct MlpLossGrad {
  double value = 0.0;
  MlpParams grads;
};

/// Batch-mean loss of a CrossEntropy, RootedCE or Focal head and its gradients.
/// An empty batch means every sample. Binary data uses class_index (+1 -> 0).
MlpLossGrad mlp_backward(const MlpParams& params, const Dataset& data,
                         std::span<const std::size_t> batch, const LossSpec& spec);

/// Objective over flattened network parameters. The data must outlive it.
class MlpObjective final : public Objective {
 public:
  MlpObjective(const Dataset& data, std::vector<Index> sizes, LossSpec spec,
               Activation hidden = Activation::ReLU);

  Index dimension() const override { return dimension_; }
  std::size_t sample_count() const override { return static_cast<std::size_t>(data_->size()); }
  double evaluate(const Vector& params, std::span<const std::size_t> batch,
                  Vector* grad) const override;
  /// Biases are not penalized.
  Vector l2_mask() const override;

  MlpParams unflatten(const Vector& flat) const {
    return MlpParams::unflatten(flat, sizes_, hidden_);
  }

 private:
  const Dataset* data_;
  std::vector<Index> sizes_;
  LossSpec spec_;
  Activation hidden_;
  Index dimension_;
};

// ---- evaluation ------------------------------------------------------------

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Vector& v);

/// Accuracy of a linear model. For binary data with a d-vector the prediction is
/// +1 when wᵀx >= 0 (sign(0) -> +1); otherwise `params` is a flattened c×d
/// matrix and the prediction is the argmax class. Throws on empty data.
double evaluate_linear(const Vector& params, const Dataset& data);
/// Argmax accuracy of a network (binary labels compared through class_index).
double evaluate_mlp(const MlpParams& params, const Dataset& data);

// ---- decision grid ---------------------------------------------------------

struct GridBounds {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
};

struct GridPoint {
  double x = 0.0;
  double y = 0.0;
  double p = 0.0;
};

struct DecisionGrid {
  GridBounds bounds;
  std::size_t resolution = 0;
  Activation hidden = Activation::ReLU;
  /// Row-major: y varies slowest, x fastest.
  std::vector<GridPoint> points;

  /// Two '#' lines (bounds, then resolution and the probability convention),
  /// then x,y,p_pos and resolution² rows.
  void write_csv(std::ostream& out) const;
};

/// Softmax probability of class index 0 (the +1 label of binary data) on a
/// resolution × resolution lattice that includes the bounds. Needs a network
/// with 2 inputs and resolution >= 2.
DecisionGrid decision_grid(const MlpParams& params, const GridBounds& bounds,
                           std::size_t resolution);

/// Bounds of the first two feature columns, padded by `margin` on each side.
GridBounds bounds_of(const Dataset& data, double margin = 0.1);

}  // namespace rlo
