#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rlo/models.hpp"
#include "rlo/optim.hpp"
#include "rlo/rng.hpp"
#include "rlo/types.hpp"

namespace rlo {

/// Synthetic target in 1 or 2 dimensions: an isotropic Gaussian, or a
/// two-component isotropic mixture (component 0 drawn with probability `weight`).
struct GanTarget {
  enum class Kind { Gaussian, Mixture };
  Kind kind = Kind::Gaussian;
  Vector mean0 = Vector::Constant(1, 3.0);
  double stddev0 = 1.0;
  Vector mean1 = Vector::Constant(1, -3.0);
  double stddev1 = 1.0;
  double weight = 0.5;

  static GanTarget gaussian(Vector mean, double stddev);
  static GanTarget mixture(Vector mean0, double stddev0, Vector mean1, double stddev1,
                           double weight = 0.5);

  Index dim() const { return mean0.size(); }
  void validate() const;
  /// n × dim samples.
  Matrix sample(Rng& rng, std::size_t n) const;
  Vector moment_mean() const;
  Matrix moment_cov() const;
};

struct GanConfig {
  double k = 4.0;
  Index latent_dim = 1;
  /// Hidden widths; an empty generator list gives the affine map f(z) = A z + b.
  std::vector<Index> gen_hidden;
  std::vector<Index> disc_hidden{8};
  Activation gen_activation = Activation::ReLU;
  Activation disc_activation = Activation::Tanh;
  double eta_g = 0.05;
  double eta_d = 0.05;
  std::size_t disc_steps = 1;
  std::size_t gen_steps = 1;
  std::size_t rounds = 2000;
  std::size_t batch = 64;
  std::uint64_t seed = 11;
  GanTarget target;
  /// Held-out real and fake samples used for every trace record.
  std::size_t eval_samples = 2000;
  std::size_t record_every = 10;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Clamp applied to discriminator outputs before any power or logarithm.
inline constexpr double kGanClamp = 1e-7;

/// V_k = mean_real k g(x)^{1/k} + mean_fake k (1 - g(f(z)))^{1/k}, where g is
/// the sigmoid of the discriminator's single logit clamped to [ε, 1 - ε].
/// Powers are taken as exp(log(.)/k). Throws on empty batches.
double rooted_value(const MlpParams& disc, const MlpParams& gen, const Matrix& real,
                    const Matrix& latent, double k);
/// mean log g(x) + mean log(1 - g(f(z))) with the same clamp; the k -> ∞
/// limit of rooted_value - 2k.
double log_value(const MlpParams& disc, const MlpParams& gen, const Matrix& real,
                 const Matrix& latent);

struct GanGradients {
  double value = 0.0;
  MlpParams disc;
  MlpParams gen;
};

/// rooted_value and its gradients with respect to both networks. Where the
/// clamp is active the value is flat and the gradient is zero.
GanGradients rooted_value_gradients(const MlpParams& disc, const MlpParams& gen,
                                    const Matrix& real, const Matrix& latent, double k);

struct GanRecord {
  std::size_t round = 0;
  double value = 0.0;
  double disc_acc_real = 0.0;
  double disc_acc_fake = 0.0;
  Vector fake_mean;
  Matrix fake_cov;
};

struct GanTrace {
  std::vector<GanRecord> records;
  /// round,value,disc_acc_real,disc_acc_fake,fake_mean_0..,fake_cov_00,fake_cov_01,..
  void write_csv(std::ostream& out) const;
};

struct GanResult {
  MlpParams disc;
  MlpParams gen;
  GanTrace trace;
  RunStatus status = RunStatus::Completed;
};

/// Initial networks: the discriminator is UniformScaled, the generator is the
/// identity-like affine map (A = I on the leading coordinates, b = 0) when it
/// has no hidden layers, UniformScaled otherwise.
MlpParams gan_initial_generator(const GanConfig& cfg);
MlpParams gan_initial_discriminator(const GanConfig& cfg);

/// Per round: disc_steps ascent steps on V_k for the discriminator, then
/// gen_steps descent steps for the generator, each on a fresh batch. A
/// non-finite V_k stops the run with RunStatus::Diverged.
GanResult alternate_train(const GanConfig& cfg);
/// alternate_train from given networks (the generator is frozen when gen_steps = 0).
GanResult alternate_train(const GanConfig& cfg, MlpParams disc, MlpParams gen);

struct GanReport {
  std::size_t window = 0;
  double value = 0.0;
  double disc_acc_real = 0.0;
  double disc_acc_fake = 0.0;
  /// (real + fake) / 2.
  double disc_acc = 0.0;
  Vector fake_mean;
  Matrix fake_cov;
  Vector target_mean;
  Matrix target_cov;
  /// ‖fake_mean - target_mean‖₂ and ‖fake_cov - target_cov‖_F.
  double mean_gap = 0.0;
  double cov_gap = 0.0;
};

/// Means over the last `window` records (all records when fewer).
GanReport gan_diagnostics(const GanTrace& trace, const GanTarget& target, std::size_t window = 10);

}  // namespace rlo
