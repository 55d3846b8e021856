#include "rlo/gan_toy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "rlo/losses.hpp"

namespace rlo {

GanTarget GanTarget::gaussian(Vector mean, double stddev) {
  GanTarget t;
  t.kind = Kind::Gaussian;
  t.mean0 = std::move(mean);
  t.stddev0 = stddev;
  t.mean1 = t.mean0;
  t.stddev1 = stddev;
  t.weight = 1.0;
  t.validate();
  return t;
}

GanTarget GanTarget::mixture(Vector mean0, double stddev0, Vector mean1, double stddev1,
                             double weight) {
  GanTarget t;
  t.kind = Kind::Mixture;
  t.mean0 = std::move(mean0);
  t.stddev0 = stddev0;
  t.mean1 = std::move(mean1);
  t.stddev1 = stddev1;
  t.weight = weight;
  t.validate();
  return t;
}

void GanTarget::validate() const {
  if (dim() < 1 || dim() > 2) throw std::invalid_argument("GAN targets live in 1 or 2 dimensions");
  if (!(stddev0 > 0.0)) throw std::invalid_argument("target stddev must be positive");
  if (kind == Kind::Mixture) {
    if (mean1.size() != dim()) throw std::invalid_argument("mixture means differ in dimension");
    if (!(stddev1 > 0.0)) throw std::invalid_argument("target stddev must be positive");
    if (!(weight > 0.0 && weight < 1.0)) throw std::invalid_argument("mixture weight must lie in (0, 1)");
  }
}

Matrix GanTarget::sample(Rng& rng, std::size_t n) const {
  Matrix out(static_cast<Index>(n), dim());
  for (Index i = 0; i < out.rows(); ++i) {
    const bool first = kind == Kind::Gaussian || rng.uniform() < weight;
    const Vector& mu = first ? mean0 : mean1;
    const double sd = first ? stddev0 : stddev1;
    for (Index j = 0; j < dim(); ++j) out(i, j) = rng.normal(mu(j), sd);
  }
  return out;
}

Vector GanTarget::moment_mean() const {
  if (kind == Kind::Gaussian) return mean0;
  return weight * mean0 + (1.0 - weight) * mean1;
}

Matrix GanTarget::moment_cov() const {
  const Index d = dim();
  if (kind == Kind::Gaussian) return stddev0 * stddev0 * Matrix::Identity(d, d);
  const Vector mu = moment_mean();
  const Matrix second = weight * (stddev0 * stddev0 * Matrix::Identity(d, d) + mean0 * mean0.transpose()) +
                        (1.0 - weight) * (stddev1 * stddev1 * Matrix::Identity(d, d) + mean1 * mean1.transpose());
  return second - mu * mu.transpose();
}

void GanConfig::validate() const {
  if (!(k > 1.0) || !std::isfinite(k)) throw std::invalid_argument("GAN root parameter k must be > 1");
  if (latent_dim < 1) throw std::invalid_argument("latent dimension must be positive");
  if (!(eta_g > 0.0) || !(eta_d > 0.0)) throw std::invalid_argument("GAN step sizes must be positive");
  if (batch < 2) throw std::invalid_argument("GAN batch must hold at least 2 samples");
  if (eval_samples < 2) throw std::invalid_argument("GAN evaluation needs at least 2 samples");
  if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  target.validate();
}

namespace {

const double kLogLow = std::log(kGanClamp);
const double kLogHigh = std::log1p(-kGanClamp);

// Clamped log g and log (1 - g) for one logit; `active` is false on the flat part.
struct ClampedLog {
  double log_g;
  double log_1mg;
  bool active;
};

ClampedLog clamped_log(double u) {
  double lg = log_sigmoid(u);
  double l1 = log_sigmoid(-u);
  const bool active = lg >= kLogLow && lg <= kLogHigh;
  lg = std::clamp(lg, kLogLow, kLogHigh);
  l1 = std::clamp(l1, kLogLow, kLogHigh);
  return {lg, l1, active};
}

void check_batches(const MlpParams& disc, const MlpParams& gen, const Matrix& real,
                   const Matrix& latent) {
  if (real.rows() < 1 || latent.rows() < 1) throw std::invalid_argument("empty GAN batch");
  if (disc.output_dim() != 1) throw std::invalid_argument("discriminator must emit one logit");
  if (gen.output_dim() != disc.input_dim() || real.cols() != disc.input_dim()) {
    throw std::invalid_argument("generator, discriminator and data dimensions disagree");
  }
}

double mean_power(const Vector& logits, double k, bool real) {
  double sum = 0.0;
  for (Index i = 0; i < logits.size(); ++i) {
    const ClampedLog c = clamped_log(logits(i));
    sum += k * std::exp((real ? c.log_g : c.log_1mg) / k);
  }
  return sum / static_cast<double>(logits.size());
}

}  // namespace

double rooted_value(const MlpParams& disc, const MlpParams& gen, const Matrix& real,
                    const Matrix& latent, double k) {
  check_batches(disc, gen, real, latent);
  if (!(k > 1.0)) throw std::invalid_argument("GAN root parameter k must be > 1");
  const Vector ur = mlp_forward_batch(disc, real).col(0);
  const Vector uf = mlp_forward_batch(disc, mlp_forward_batch(gen, latent)).col(0);
  return mean_power(ur, k, true) + mean_power(uf, k, false);
}

double log_value(const MlpParams& disc, const MlpParams& gen, const Matrix& real,
                 const Matrix& latent) {
  check_batches(disc, gen, real, latent);
  const Vector ur = mlp_forward_batch(disc, real).col(0);
  const Vector uf = mlp_forward_batch(disc, mlp_forward_batch(gen, latent)).col(0);
  double a = 0.0;
  double b = 0.0;
  for (Index i = 0; i < ur.size(); ++i) a += clamped_log(ur(i)).log_g;
  for (Index i = 0; i < uf.size(); ++i) b += clamped_log(uf(i)).log_1mg;
  return a / static_cast<double>(ur.size()) + b / static_cast<double>(uf.size());
}

GanGradients rooted_value_gradients(const MlpParams& disc, const MlpParams& gen,
                                    const Matrix& real, const Matrix& latent, double k) {
  check_batches(disc, gen, real, latent);
  if (!(k > 1.0)) throw std::invalid_argument("GAN root parameter k must be > 1");
  const ForwardCache gen_cache = mlp_forward_cached(gen, latent);
  const ForwardCache real_cache = mlp_forward_cached(disc, real);
  const ForwardCache fake_cache = mlp_forward_cached(disc, gen_cache.logits);
  const auto nr = static_cast<double>(real.rows());
  const auto nf = static_cast<double>(latent.rows());

  // d(k g^{1/k})/du = g^{1/k} (1 - g); d(k (1 - g)^{1/k})/du = -(1 - g)^{1/k} g.
  GanGradients out;
  Matrix gr(real.rows(), 1);
  for (Index i = 0; i < real.rows(); ++i) {
    const ClampedLog c = clamped_log(real_cache.logits(i, 0));
    out.value += k * std::exp(c.log_g / k) / nr;
    gr(i, 0) = c.active ? std::exp(c.log_g / k + c.log_1mg) / nr : 0.0;
  }
  Matrix gf(latent.rows(), 1);
  for (Index i = 0; i < latent.rows(); ++i) {
    const ClampedLog c = clamped_log(fake_cache.logits(i, 0));
    out.value += k * std::exp(c.log_1mg / k) / nf;
    gf(i, 0) = c.active ? -std::exp(c.log_1mg / k + c.log_g) / nf : 0.0;
  }
  const BackpropResult br = mlp_backprop(disc, real_cache, gr);
  const BackpropResult bf = mlp_backprop(disc, fake_cache, gf);
  const std::vector<Index> disc_sizes = disc.sizes();
  out.disc = MlpParams::unflatten(br.grads.flatten() + bf.grads.flatten(), disc_sizes, disc.hidden);
  out.gen = mlp_backprop(gen, gen_cache, bf.input_grad).grads;
  return out;
}

void GanTrace::write_csv(std::ostream& out) const {
  const Index d = records.empty() ? 0 : records.front().fake_mean.size();
  out << "round,value,disc_acc_real,disc_acc_fake";
  for (Index j = 0; j < d; ++j) out << ",fake_mean_" << j;
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) out << ",fake_cov_" << a << b;
  }
  out << '\n';
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{}", r.round, r.value, r.disc_acc_real, r.disc_acc_fake);
    for (Index j = 0; j < d; ++j) out << fmt::format(",{}", r.fake_mean(j));
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) out << fmt::format(",{}", r.fake_cov(a, b));
    }
    out << '\n';
  }
}

MlpParams gan_initial_generator(const GanConfig& cfg) {
  std::vector<Index> sizes{cfg.latent_dim};
  sizes.insert(sizes.end(), cfg.gen_hidden.begin(), cfg.gen_hidden.end());
  sizes.push_back(cfg.target.dim());
  if (cfg.gen_hidden.empty()) {
    MlpParams p = init_params(sizes, InitScheme::Zeros, 0, cfg.gen_activation);
    const Index diag = std::min(cfg.latent_dim, cfg.target.dim());
    for (Index i = 0; i < diag; ++i) p.layers[0].weight(i, i) = 1.0;
    return p;
  }
  return init_params(sizes, InitScheme::UniformScaled, Rng::derive_seed(cfg.seed, 4),
                     cfg.gen_activation);
}

MlpParams gan_initial_discriminator(const GanConfig& cfg) {
  std::vector<Index> sizes{cfg.target.dim()};
  sizes.insert(sizes.end(), cfg.disc_hidden.begin(), cfg.disc_hidden.end());
  sizes.push_back(1);
  return init_params(sizes, InitScheme::UniformScaled, Rng::derive_seed(cfg.seed, 3),
                     cfg.disc_activation);
}

namespace {

Matrix latent_batch(Rng& rng, std::size_t n, Index dim) {
  Matrix z(static_cast<Index>(n), dim);
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < dim; ++j) z(i, j) = rng.normal();
  }
  return z;
}

GanRecord evaluate_round(std::size_t round, const GanConfig& cfg, const MlpParams& disc,
                         const MlpParams& gen, const Matrix& real, const Matrix& latent) {
  GanRecord r;
  r.round = round;
  r.value = rooted_value(disc, gen, real, latent, cfg.k);
  const Matrix fake = mlp_forward_batch(gen, latent);
  const Vector ur = mlp_forward_batch(disc, real).col(0);
  const Vector uf = mlp_forward_batch(disc, fake).col(0);
  r.disc_acc_real = static_cast<double>((ur.array() >= 0.0).count()) / static_cast<double>(ur.size());
  r.disc_acc_fake = static_cast<double>((uf.array() < 0.0).count()) / static_cast<double>(uf.size());
  r.fake_mean = fake.colwise().mean().transpose();
  const Matrix centered = fake.rowwise() - r.fake_mean.transpose();
  r.fake_cov = centered.transpose() * centered / static_cast<double>(fake.rows());
  return r;
}

}  // namespace

GanResult alternate_train(const GanConfig& cfg) {
  cfg.validate();
  return alternate_train(cfg, gan_initial_discriminator(cfg), gan_initial_generator(cfg));
}

GanResult alternate_train(const GanConfig& cfg, MlpParams disc, MlpParams gen) {
  cfg.validate();
  disc.validate();
  gen.validate();
  if (gen.input_dim() != cfg.latent_dim) throw std::invalid_argument("generator input is not the latent dimension");
  Rng train_rng(Rng::derive_seed(cfg.seed, 0));
  Rng eval_rng(Rng::derive_seed(cfg.seed, 1));
  const Matrix eval_real = cfg.target.sample(eval_rng, cfg.eval_samples);
  const Matrix eval_latent = latent_batch(eval_rng, cfg.eval_samples, cfg.latent_dim);
  const std::vector<Index> disc_sizes = disc.sizes();
  const std::vector<Index> gen_sizes = gen.sizes();

  GanResult result;
  for (std::size_t round = 0;; ++round) {
    if (round == 0 || round % cfg.record_every == 0 || round == cfg.rounds) {
      GanRecord rec = evaluate_round(round, cfg, disc, gen, eval_real, eval_latent);
      if (!std::isfinite(rec.value)) {
        result.status = RunStatus::Diverged;
        break;
      }
      result.trace.records.push_back(std::move(rec));
    }
    if (round == cfg.rounds) break;
    bool finite = true;
    for (std::size_t s = 0; s < cfg.disc_steps && finite; ++s) {
      const Matrix real = cfg.target.sample(train_rng, cfg.batch);
      const Matrix latent = latent_batch(train_rng, cfg.batch, cfg.latent_dim);
      const GanGradients g = rooted_value_gradients(disc, gen, real, latent, cfg.k);
      const Vector next = disc.flatten() + cfg.eta_d * g.disc.flatten();
      finite = std::isfinite(g.value) && next.allFinite();
      if (finite) disc = MlpParams::unflatten(next, disc_sizes, disc.hidden);
    }
    for (std::size_t s = 0; s < cfg.gen_steps && finite; ++s) {
      const Matrix real = cfg.target.sample(train_rng, cfg.batch);
      const Matrix latent = latent_batch(train_rng, cfg.batch, cfg.latent_dim);
      const GanGradients g = rooted_value_gradients(disc, gen, real, latent, cfg.k);
      const Vector next = gen.flatten() - cfg.eta_g * g.gen.flatten();
      finite = std::isfinite(g.value) && next.allFinite();
      if (finite) gen = MlpParams::unflatten(next, gen_sizes, gen.hidden);
    }
    if (!finite) {
      result.status = RunStatus::Diverged;
      break;
    }
  }
  result.disc = std::move(disc);
  result.gen = std::move(gen);
  return result;
}

GanReport gan_diagnostics(const GanTrace& trace, const GanTarget& target, std::size_t window) {
  if (trace.records.empty()) throw std::invalid_argument("cannot diagnose an empty GAN trace");
  GanReport rep;
  rep.window = std::clamp<std::size_t>(window, 1, trace.records.size());
  const auto first = trace.records.end() - static_cast<std::ptrdiff_t>(rep.window);
  const Index d = first->fake_mean.size();
  rep.fake_mean = Vector::Zero(d);
  rep.fake_cov = Matrix::Zero(d, d);
  for (auto it = first; it != trace.records.end(); ++it) {
    rep.value += it->value;
    rep.disc_acc_real += it->disc_acc_real;
    rep.disc_acc_fake += it->disc_acc_fake;
    rep.fake_mean += it->fake_mean;
    rep.fake_cov += it->fake_cov;
  }
  const auto w = static_cast<double>(rep.window);
  rep.value /= w;
  rep.disc_acc_real /= w;
  rep.disc_acc_fake /= w;
  rep.fake_mean /= w;
  rep.fake_cov /= w;
  rep.disc_acc = 0.5 * (rep.disc_acc_real + rep.disc_acc_fake);
  rep.target_mean = target.moment_mean();
  rep.target_cov = target.moment_cov();
  if (rep.target_mean.size() != d) throw std::invalid_argument("trace and target dimensions differ");
  rep.mean_gap = (rep.fake_mean - rep.target_mean).norm();
  rep.cov_gap = (rep.fake_cov - rep.target_cov).norm();
  return rep;
}

}  // namespace rlo
