#include <doctest.h>

#include <cmath>
#include <limits>

#include "rlo/losses.hpp"
#include "test_util.hpp"

using namespace rlo;
using rlo::testing::rel_err;

TEST_CASE("softplus is stable at both ends") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(rel_err(softplus(1000.0), 1000.0) < 1e-12);
  // 40-digit reference for log1p(exp(-40))
  CHECK(rel_err(softplus(-40.0), 4.248354255291589e-18) < 1e-14);
  CHECK(softplus(-1e4) == 0.0);
  CHECK(std::isfinite(softplus(1e300)));
}

TEST_CASE("sigmoid and log_sigmoid agree") {
  for (double z : {-700.0, -30.0, -1.0, 0.0, 2.0, 35.0, 700.0}) {
    CHECK(std::isfinite(log_sigmoid(z)));
    CHECK(std::exp(log_sigmoid(z)) == doctest::Approx(sigmoid(z)).epsilon(1e-12));
  }
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("logistic loss values") {
  Rng rng(3);
  const Dataset data = testing::random_binary(rng, 12, 4);
  CHECK(logistic_loss(Vector::Zero(4), data) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const Vector w = Vector::Unit(2, 0) * 2.0;
  CHECK(rel_err(logistic_loss(w, testing::single_point(Vector::Unit(2, 0), 1)), 0.12692801104297250) < 1e-14);
  CHECK(rel_err(logistic_loss(w, testing::single_point(Vector::Unit(2, 0), -1)), 2.1269280110429725) < 1e-14);
}

TEST_CASE("rlo loss values") {
  Rng rng(4);
  const Dataset data = testing::random_binary(rng, 10, 3);
  CHECK(rlo_loss(Vector::Zero(3), data, 2, 2) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(rlo_loss(Vector::Zero(3), data, 4, 4) == doctest::Approx(4.7568284600108843).epsilon(1e-15));
  // 3 (1 + e^{-2})^{1/3}, 40-digit reference
  const double v = rlo_loss(Vector::Unit(2, 0) * 2.0, testing::single_point(Vector::Unit(2, 0), 1), 3, 3);
  CHECK(rel_err(v, 3.1296514035515639) < 1e-14);
}

TEST_CASE("rlo loss is bounded below by m") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset data = testing::random_binary(rng, 8, 3, 3.0);
    const Vector w = testing::random_vector(rng, 3, 5.0);
    const double k = 1.0 + 20.0 * rng.uniform() + 1e-3;
    const double m = 0.1 + 5.0 * rng.uniform();
    CHECK(rlo_loss(w, data, k, m) >= m);
  }
}

TEST_CASE("per-point losses decrease strictly in the margin") {
  for (double k : {1.5, 3.0, 20.0}) {
    double prev_l = std::numeric_limits<double>::infinity();
    double prev_r = std::numeric_limits<double>::infinity();
    for (double z = -30.0; z <= 30.0; z += 0.25) {
      const double l = logistic_point(z);
      const double r = rlo_point(z, k, k);
      CHECK(l < prev_l);
      CHECK(r < prev_r);
      prev_l = l;
      prev_r = r;
    }
  }
}

TEST_CASE("losses stay finite or overflow cleanly for |z| up to 1e4") {
  for (double z : {-1e4, -1e3, -700.0, -50.0, 0.0, 50.0, 700.0, 1e3, 1e4}) {
    CHECK(std::isfinite(logistic_point(z)));
    for (double k : {1.01, 2.0, 3.0, 20.0, 1e6}) {
      const double r = rlo_point(z, k, k);
      CHECK_FALSE(std::isnan(r));
      // k exp(softplus(-z)/k) is representable iff the exponent is below ~709.
      if (softplus(-z) / k < 700.0) CHECK(std::isfinite(r));
    }
    Vector logits(3);
    logits << z, 0.0, -z;
    for (int label = 0; label < 3; ++label) {
      CHECK(std::isfinite(head_value(logits, label, LossSpec::cross_entropy())));
      CHECK(std::isfinite(head_value(logits, label, LossSpec::focal(2.0))));
      const double rc = head_value(logits, label, LossSpec::rooted_ce(20.0));
      CHECK_FALSE(std::isnan(rc));
    }
  }
}

TEST_CASE("cross-entropy values") {
  Rng rng(6);
  const Dataset data = testing::random_multiclass(rng, 9, 4, 3);
  CHECK(ce_loss(Matrix::Zero(3, 4), data) == doctest::Approx(std::log(3.0)).epsilon(1e-15));

  Vector logits(2);
  logits << 10.0, 0.0;
  CHECK(rel_err(head_value(logits, 0, LossSpec::cross_entropy()), 4.539889921686465e-5) < 1e-13);
}

TEST_CASE("two-class cross-entropy on (z, 0) is the logistic loss") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset data = testing::random_binary(rng, 15, 3, 2.0);
    const Vector w = testing::random_vector(rng, 3, 2.0);
    Matrix weights = Matrix::Zero(2, 3);
    weights.row(0) = w.transpose();
    CHECK(rel_err(ce_loss(weights, data), logistic_loss(w, data)) < 1e-12);
  }
}

TEST_CASE("rooted cross-entropy values") {
  Rng rng(8);
  const Dataset data = testing::random_multiclass(rng, 9, 2, 3);
  CHECK(rel_err(rooted_ce_loss(Matrix::Zero(3, 2), data, 3, 3), 4.3267487109222251) < 1e-14);

  // p_true = 0.9 from logits (log 9, 0)
  Vector logits(2);
  logits << std::log(9.0), 0.0;
  CHECK(rel_err(head_value(logits, 0, LossSpec::rooted_ce(10, 10)), 10.105917512032913) < 1e-13);
}

TEST_CASE("two-class rooted cross-entropy on (z, 0) is the rlo loss") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset data = testing::random_binary(rng, 12, 4, 2.0);
    const Vector w = testing::random_vector(rng, 4, 3.0);
    const double k = 1.0 + 19.0 * rng.uniform() + 1e-3;
    Matrix weights = Matrix::Zero(2, 4);
    weights.row(0) = w.transpose();
    CHECK(rel_err(rooted_ce_loss(weights, data, k, k), rlo_loss(w, data, k, k)) < 1e-12);
  }
}

TEST_CASE("focal loss values") {
  Rng rng(10);
  const Dataset data = testing::random_multiclass(rng, 12, 3, 4);
  const Matrix w = testing::random_matrix(rng, 4, 3);
  CHECK(rel_err(focal_loss(w, data, 0.0), ce_loss(w, data)) < 1e-14);

  Vector half(2);
  half << 0.0, 0.0;
  CHECK(rel_err(head_value(half, 1, LossSpec::focal(2.0)), 0.25 * std::log(2.0)) < 1e-14);
  Vector p9(2);
  p9 << std::log(9.0), 0.0;
  CHECK(rel_err(head_value(p9, 0, LossSpec::focal(2.0)), 0.0010536051565782630) < 1e-10);
}

TEST_CASE("rlo approaches logistic as k grows") {
  Rng rng(11);
  const Dataset data = testing::random_binary(rng, 30, 5);
  const Vector w = testing::random_vector(rng, 5, 0.7);
  double prev = std::numeric_limits<double>::infinity();
  for (double k : {10.0, 100.0, 1000.0}) {
    const double gap = std::abs((rlo_loss(w, data, k, k) - k) - logistic_loss(w, data));
    CHECK(gap <= prev);
    prev = gap;
  }
  double bound = 0.0;
  const Vector z = margins(w, data);
  for (Index i = 0; i < z.size(); ++i) bound = std::max(bound, std::pow(softplus(-z(i)), 2));
  CHECK(prev <= bound / 1000.0);
}

TEST_CASE("loss spec validation and parsing") {
  CHECK_THROWS_AS(LossSpec::rlo(1.0), std::invalid_argument);
  CHECK_THROWS_AS(LossSpec::rlo(0.5), std::invalid_argument);
  CHECK_THROWS_AS(LossSpec::rlo(3.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(LossSpec::rooted_ce(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(LossSpec::focal(-1.0), std::invalid_argument);
  CHECK(LossSpec::rlo(3.0).m == 3.0);
  CHECK(parse_loss_family("lr") == LossFamily::Logistic);
  CHECK(parse_loss_family("rooted-ce") == LossFamily::RootedCE);
  CHECK_THROWS_AS(parse_loss_family("hinge"), std::invalid_argument);
  CHECK(LossSpec::rlo(3.0).describe() == "rlo(k=3,m=3)");
}

TEST_CASE("binary losses reject mismatched inputs") {
  Rng rng(12);
  const Dataset binary = testing::random_binary(rng, 5, 3);
  const Dataset multi = testing::random_multiclass(rng, 6, 3, 3);
  CHECK_THROWS_AS(logistic_loss(Vector::Zero(4), binary), std::invalid_argument);
  CHECK_THROWS_AS(logistic_loss(Vector::Zero(3), multi), std::invalid_argument);
  CHECK_THROWS_AS(ce_loss(Matrix::Zero(2, 3), multi), std::invalid_argument);
  CHECK_THROWS_AS(binary_loss(Vector::Zero(3), binary, LossSpec::cross_entropy()), std::invalid_argument);
}
