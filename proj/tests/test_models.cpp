#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "rlo/calculus.hpp"
#include "rlo/models.hpp"
#include "test_util.hpp"

using namespace rlo;
using rlo::testing::rel_err;

namespace {

MlpParams hand_network() {
  MlpParams p;
  DenseLayer l1{Matrix(3, 2), Vector(3)};
  l1.weight << 0.5, -0.25, 0.1, 0.2, -0.3, 0.4;
  l1.bias << 0.1, -0.2, 0.05;
  DenseLayer l2{Matrix(2, 3), Vector(2)};
  l2.weight << 0.3, -0.6, 0.9, -0.7, 0.2, 0.4;
  l2.bias << 0.05, -0.1;
  p.layers = {l1, l2};
  return p;
}

std::vector<Index> widths(Index in, std::size_t depth, Index hidden, Index out) {
  std::vector<Index> s{in};
  for (std::size_t l = 1; l < depth; ++l) s.push_back(hidden);
  s.push_back(out);
  return s;
}

}  // namespace

TEST_CASE("linear objective values at zero") {
  Rng rng(41);
  const Dataset binary = testing::random_binary(rng, 11, 3);
  CHECK(rel_err(linear_objective(binary, LossSpec::rlo(3.0)).value(Vector::Zero(3)), 3.7797631496846195) < 1e-15);
  CHECK(linear_objective(binary, LossSpec::logistic()).value(Vector::Zero(3)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Dataset multi = testing::random_multiclass(rng, 12, 2, 3);
  const auto f = linear_objective(multi, LossSpec::rooted_ce(3.0));
  CHECK(f.dimension() == 6);
  CHECK(rel_err(f.value(Vector::Zero(6)), 4.3267487109222251) < 1e-14);
}

TEST_CASE("linear objective gradients, batches and penalties") {
  Rng rng(42);
  const Dataset multi = testing::random_multiclass(rng, 20, 4, 3);
  for (const LossSpec& spec : {LossSpec::cross_entropy(), LossSpec::rooted_ce(4.0), LossSpec::focal(1.0)}) {
    const LinearObjective f(multi, spec, 0.3);
    const Vector w = testing::random_vector(rng, 12);
    Vector g;
    f.value_and_gradient(w, g);
    CHECK(rel_err(g, finite_diff_grad([&](const Vector& v) { return f.value(v); }, w)) < 1e-6);
    // row-major flattening: block c holds W(c, ·)
    const Matrix wm = unflatten_weights(w, 3, 4);
    CHECK(wm(1, 2) == w(1 * 4 + 2));
    CHECK(flatten_weights(wm) == w);
    CHECK(rel_err(LinearObjective(multi, spec).value(w), multiclass_loss(wm, multi, spec)) < 1e-14);
  }

  const Dataset binary = with_bias_column(testing::random_binary(rng, 15, 2));
  LinearObjective f(binary, LossSpec::rlo(5.0), 2.0);
  f.exclude_from_l2(2);
  const Vector mask = f.l2_mask();
  CHECK(mask(0) == 1.0);
  CHECK(mask(2) == 0.0);
  Vector w(3);
  w << 0.0, 0.0, 4.0;
  CHECK(f.value(w) == doctest::Approx(rlo_loss(w, binary, 5.0, 5.0)).epsilon(1e-15));

  const std::vector<std::size_t> batch{3, 7};
  const Dataset sub = subset(binary, batch);
  const LinearObjective plain(binary, LossSpec::logistic());
  CHECK(rel_err(plain.evaluate(w, batch, nullptr), logistic_loss(w, sub)) < 1e-15);
}

TEST_CASE("hand-unrolled network forward pass") {
  const MlpParams p = hand_network();
  CHECK(p.parameter_count() == 17);
  Vector x(2);
  x << 1.5, 0.5;
  const ForwardCache cache = mlp_forward_cached(p, x.transpose());
  CHECK(rel_err(cache.activations[1](0, 0), 0.725) < 1e-15);
  CHECK(rel_err(cache.activations[1](0, 1), 0.05) < 1e-14);
  CHECK(cache.activations[1](0, 2) == 0.0);
  const Vector logits = mlp_forward(p, x);
  CHECK(rel_err(logits(0), 0.2375) < 1e-14);
  CHECK(rel_err(logits(1), -0.5975) < 1e-14);
}

TEST_CASE("identity and zero networks") {
  MlpParams id = init_params({3, 3, 3}, InitScheme::Zeros, 0, Activation::Identity);
  for (auto& l : id.layers) l.weight.setIdentity();
  Vector x(3);
  x << 1.0, -2.0, 3.0;
  CHECK(mlp_forward(id, x) == x);

  const MlpParams zero = init_params({3, 5, 2}, InitScheme::Zeros, 0);
  CHECK(mlp_forward(zero, x).norm() == 0.0);
}

TEST_CASE("backpropagation matches central differences") {
  Rng rng(43);
  for (std::size_t depth : {2u, 3u, 4u}) {
    for (Activation act : {Activation::Tanh, Activation::ReLU}) {
      const Dataset data = testing::random_multiclass(rng, 9, 3, 3);
      const std::vector<Index> sizes = widths(3, depth, 5, 3);
      for (const LossSpec& spec : {LossSpec::cross_entropy(), LossSpec::rooted_ce(3.0), LossSpec::focal(2.0)}) {
        const MlpObjective f(data, sizes, spec, act);
        const Vector w = init_params(sizes, InitScheme::UniformScaled, rng.next_u64(), act).flatten() +
                         testing::random_vector(rng, f.dimension(), 0.05);
        Vector g;
        f.value_and_gradient(w, g);
        const Vector fd = finite_diff_grad([&](const Vector& v) { return f.value(v); }, w);
        CHECK(rel_err(g, fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("backprop input gradients") {
  Rng rng(44);
  const MlpParams p = init_params({2, 4, 3}, InitScheme::UniformScaled, 5, Activation::Tanh);
  const Vector x = testing::random_vector(rng, 2);
  const Vector up = testing::random_vector(rng, 3);
  const ForwardCache cache = mlp_forward_cached(p, x.transpose());
  const BackpropResult b = mlp_backprop(p, cache, up.transpose());
  const Vector fd = finite_diff_grad([&](const Vector& v) { return up.dot(mlp_forward(p, v)); }, x);
  CHECK(rel_err(Vector(b.input_grad.row(0).transpose()), fd) < 1e-6);
}

TEST_CASE("a single-layer network is a linear model with a bias column") {
  Rng rng(45);
  const Dataset data = testing::random_multiclass(rng, 14, 3, 4);
  const Dataset biased = with_bias_column(data);
  const Matrix w = testing::random_matrix(rng, 4, 3);
  const Vector b = testing::random_vector(rng, 4);
  MlpParams net;
  net.layers = {DenseLayer{w, b}};
  Matrix wb(4, 4);
  wb << w, b;
  for (const LossSpec& spec : {LossSpec::cross_entropy(), LossSpec::rooted_ce(6.0), LossSpec::focal(0.5)}) {
    const MlpLossGrad net_eval = mlp_backward(net, data, {}, spec);
    CHECK(rel_err(net_eval.value, multiclass_loss(wb, biased, spec)) < 1e-13);
    const Matrix lin_grad = multiclass_grad(wb, biased, spec);
    CHECK((net_eval.grads.layers[0].weight - lin_grad.leftCols(3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((net_eval.grads.layers[0].bias - lin_grad.col(3)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("flattening round trip and masks") {
  const MlpParams p = init_params({4, 6, 5, 2}, InitScheme::UniformScaled, 17);
  const Vector flat = p.flatten();
  CHECK(flat.size() == p.parameter_count());
  CHECK(flat(1) == p.layers[0].weight(0, 1));  // row-major weights
  CHECK(flat(24) == p.layers[0].bias(0));
  CHECK(MlpParams::unflatten(flat, p.sizes(), p.hidden).flatten() == flat);

  Rng rng(46);
  const Dataset data = testing::random_multiclass(rng, 5, 4, 2);
  const MlpObjective f(data, {4, 6, 5, 2}, LossSpec::cross_entropy());
  const Vector mask = f.l2_mask();
  CHECK(mask.sum() == 4 * 6 + 6 * 5 + 5 * 2);
  CHECK(mask(24) == 0.0);
  CHECK_THROWS_AS(MlpObjective(data, {4, 6, 3}, LossSpec::cross_entropy()), std::invalid_argument);
  CHECK_THROWS_AS(MlpObjective(data, {4, 2}, LossSpec::logistic()), std::invalid_argument);
}

TEST_CASE("initialization is bounded and seeded") {
  const MlpParams a = init_params({10, 20, 3}, InitScheme::UniformScaled, 7);
  const MlpParams b = init_params({10, 20, 3}, InitScheme::UniformScaled, 7);
  const MlpParams c = init_params({10, 20, 3}, InitScheme::UniformScaled, 8);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != c.flatten());
  CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 30.0));
  CHECK(a.layers[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 23.0));
  CHECK(a.layers[0].bias.norm() == 0.0);
  CHECK(init_params({3, 4}, InitScheme::Zeros, 1).flatten().norm() == 0.0);
}

TEST_CASE("hidden-unit permutations leave the network unchanged") {
  Rng rng(47);
  const MlpParams p = init_params({3, 6, 2}, InitScheme::UniformScaled, 3);
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::span<int> s(perm);
  rng.shuffle(s);
  MlpParams q = p;
  for (int i = 0; i < 6; ++i) {
    q.layers[0].weight.row(i) = p.layers[0].weight.row(perm[static_cast<std::size_t>(i)]);
    q.layers[0].bias(i) = p.layers[0].bias(perm[static_cast<std::size_t>(i)]);
    q.layers[1].weight.col(i) = p.layers[1].weight.col(perm[static_cast<std::size_t>(i)]);
  }
  const Matrix x = testing::random_matrix(rng, 10, 3);
  CHECK((mlp_forward_batch(p, x) - mlp_forward_batch(q, x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("evaluation tie-breaking") {
  Vector v(3);
  v << 1.0, 2.0, 2.0;
  CHECK(argmax_lowest(v) == 1);
  CHECK(argmax_lowest(Vector::Zero(4)) == 0);

  Matrix x(4, 2);
  x << 1, 0, -1, 0, 0, 1, 0, -1;
  const Dataset balanced = make_binary(x, {1, -1, 1, -1});
  // wᵀx = 0 everywhere predicts +1, so half the samples are right
  CHECK(evaluate_linear(Vector::Zero(2), balanced) == 0.5);
  Vector w(2);
  w << 1.0, 0.0;
  CHECK(evaluate_linear(w, balanced) == 0.75);
  CHECK(evaluate_mlp(init_params({2, 3, 2}, InitScheme::Zeros, 0), balanced) == 0.5);
  CHECK_THROWS_AS(evaluate_linear(w, subset(balanced, std::vector<std::size_t>{})), std::invalid_argument);
}

TEST_CASE("decision grids") {
  MlpParams logistic_net = init_params({2, 2}, InitScheme::Zeros, 0);
  logistic_net.layers[0].weight(0, 0) = 1.0;
  const GridBounds bounds{-2.0, 2.0, -1.0, 3.0};
  const DecisionGrid g = decision_grid(logistic_net, bounds, 5);
  REQUIRE(g.points.size() == 25);
  CHECK(g.points.front().x == -2.0);
  CHECK(g.points.front().y == -1.0);
  CHECK(g.points.back().x == 2.0);
  CHECK(g.points.back().y == 3.0);
  CHECK(g.points[1].x == -1.0);  // x varies fastest
  CHECK(g.points[1].y == -1.0);
  for (const auto& pt : g.points) {
    CHECK(rel_err(pt.p, sigmoid(pt.x)) < 1e-15);
    CHECK(pt.p >= 0.0);
    CHECK(pt.p <= 1.0);
  }

  const DecisionGrid flat = decision_grid(init_params({2, 7, 2}, InitScheme::Zeros, 0), bounds, 3);
  for (const auto& pt : flat.points) CHECK(pt.p == 0.5);

  std::ostringstream os;
  flat.write_csv(os);
  std::istringstream in(os.str());
  std::string line;
  std::size_t rows = 0;
  std::size_t comments = 0;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) ++comments;
    else ++rows;
  }
  CHECK(comments == 2);
  CHECK(rows == 1 + 9);

  CHECK_THROWS_AS(decision_grid(logistic_net, bounds, 1), std::invalid_argument);
  CHECK_THROWS_AS(decision_grid(init_params({3, 2}, InitScheme::Zeros, 0), bounds, 4), std::invalid_argument);

  Matrix pts(2, 2);
  pts << 0.0, 1.0, 2.0, -1.0;
  const GridBounds b = bounds_of(make_binary(pts, {1, -1}), 0.5);
  CHECK(b.x_min == -0.5);
  CHECK(b.x_max == 2.5);
  CHECK(b.y_min == -1.5);
  CHECK(b.y_max == 1.5);
}
