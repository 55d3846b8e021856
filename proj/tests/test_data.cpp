#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

#include "rlo/data.hpp"
#include "test_util.hpp"

using namespace rlo;

namespace {

bool message_has(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
  } catch (const DataError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

Dataset read(const std::string& text, DelimitedSchema schema = {}) {
  std::istringstream in(text);
  return read_delimited(in, schema, "inline");
}

}  // namespace

TEST_CASE("spiral data") {
  const Dataset s = make_spiral(1500, 0.05, 1);
  CHECK(s.size() == 1500);
  CHECK(s.dim() == 2);
  CHECK(std::count(s.labels.begin(), s.labels.end(), 1) == 750);
  CHECK(s.features.cwiseAbs().maxCoeff() < 1.5);
  CHECK(make_spiral(100, 0.05, 1).features == make_spiral(100, 0.05, 1).features);
  CHECK(make_spiral(100, 0.05, 1).features != make_spiral(100, 0.05, 2).features);
  CHECK_THROWS_AS(make_spiral(11, 0.0, 1), std::invalid_argument);

  // noiseless points lie on their arm: radius = t / 3π and angle = t + arm π
  const Dataset clean = make_spiral(200, 0.0, 4);
  for (Index i = 0; i < clean.size(); ++i) {
    const double x = clean.features(i, 0);
    const double y = clean.features(i, 1);
    const double r = std::hypot(x, y);
    const double t = r * 3.0 * std::numbers::pi;
    const double shift = clean.labels[static_cast<std::size_t>(i)] == 1 ? 0.0 : std::numbers::pi;
    CHECK(std::abs(x - r * std::cos(t + shift)) < 1e-12);
    CHECK(std::abs(y - r * std::sin(t + shift)) < 1e-12);
  }
}

TEST_CASE("train/test split partitions the rows") {
  const Dataset s = make_spiral(101 * 2, 0.1, 3);
  auto [train, test] = train_test_split(s, 0.7, 5);
  CHECK(train.size() == 141);
  CHECK(test.size() == 61);
  std::multiset<double> all;
  for (Index i = 0; i < s.size(); ++i) all.insert(s.features(i, 0));
  std::multiset<double> parts;
  for (Index i = 0; i < train.size(); ++i) parts.insert(train.features(i, 0));
  for (Index i = 0; i < test.size(); ++i) parts.insert(test.features(i, 0));
  CHECK(all == parts);
  CHECK(train_test_split(s, 0.7, 5).first.features == train.features);
  CHECK_THROWS_AS(train_test_split(s, 1.0, 5), std::invalid_argument);
}

TEST_CASE("k-fold plans") {
  const FoldPlan plan = kfold(23, 5, 9);
  std::vector<int> seen(23, 0);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto& val = plan.validation[f];
    CHECK((val.size() == 4 || val.size() == 5));
    CHECK(plan.train[f].size() + val.size() == 23);
    for (auto i : val) ++seen[i];
    for (auto i : plan.train[f]) CHECK_FALSE(std::binary_search(val.begin(), val.end(), i));
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(kfold(23, 5, 9).validation == plan.validation);
  CHECK(kfold(23, 5, 10).validation != plan.validation);
  CHECK_THROWS_AS(kfold(3, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(kfold(10, 1, 1), std::invalid_argument);
}

TEST_CASE("one-vs-all relabelling") {
  Rng rng(51);
  const Dataset m = testing::random_multiclass(rng, 12, 2, 3);
  const auto tasks = one_vs_all(m);
  REQUIRE(tasks.size() == 3);
  for (int j = 0; j < 3; ++j) {
    const auto& t = tasks[static_cast<std::size_t>(j)];
    CHECK(t.is_binary());
    CHECK(t.features == m.features);
    for (std::size_t i = 0; i < m.labels.size(); ++i) CHECK((t.labels[i] == 1) == (m.labels[i] == j));
  }
  CHECK_THROWS_AS(one_vs_all(testing::random_binary(rng, 5, 2)), std::invalid_argument);
}

TEST_CASE("delimited reader") {
  const Dataset b = read("1.5,2,yes\n-1,0.25,no\n3,4,yes\n");
  CHECK(b.is_binary());
  CHECK(b.labels == std::vector<int>{1, -1, 1});
  CHECK(b.features(1, 1) == 0.25);
  CHECK(b.provenance.find("yes->+1") != std::string::npos);

  DelimitedSchema first;
  first.label_column = 0;
  first.header = true;
  const Dataset m = read("class,a,b\n2,1,1\n1,2,2\n3,3,3\n2,4,4\n", first);
  CHECK(m.num_classes == 3);
  CHECK(m.labels == std::vector<int>{0, 1, 2, 0});
  CHECK(m.class_names == std::vector<std::string>{"2", "1", "3"});
  CHECK(m.features(3, 0) == 4.0);

  DelimitedSchema semi;
  semi.delimiter = ';';
  CHECK(read("1;2;a\n3;4;b\n", semi).dim() == 2);
}

TEST_CASE("reader errors name the line") {
  CHECK(message_has([] { read("1,2,a\n3,4\n"); }, "line 2"));
  CHECK(message_has([] { read("1,2,a\n\n3,x,b\n"); }, "line 3, column 2"));
  CHECK(message_has([] { read("1,nan,a\n"); }, "line 1"));
  CHECK(message_has([] { read("1,2,a\n3,4,a\n"); }, "single class"));
  CHECK(message_has([] { read(""); }, "no data rows"));
  DelimitedSchema far;
  far.label_column = 7;
  CHECK(message_has([&] { read("1,2,a\n", far); }, "label column 7"));
  CHECK(message_has([] { load_delimited("/nonexistent/file.csv", {}); }, "cannot open"));
}

TEST_CASE("write/read round trip") {
  Rng rng(52);
  const Dataset m = testing::random_multiclass(rng, 10, 3, 4);
  DelimitedSchema schema;
  schema.label_column = 0;
  std::ostringstream out;
  write_delimited(out, m, schema);
  std::istringstream in(out.str());
  const Dataset back = read_delimited(in, schema);
  CHECK(back.features == m.features);
  CHECK(back.labels == m.labels);

  const Dataset s = make_spiral(20, 0.1, 2);
  const auto path = std::filesystem::temp_directory_path() / "rlo_test_spiral.csv";
  save_delimited(path, s, {});
  const Dataset again = load_delimited(path, {});
  CHECK(again.features == s.features);
  CHECK(again.labels == s.labels);
  std::filesystem::remove(path);
}

TEST_CASE("standardization uses training statistics only") {
  Matrix train(4, 2);
  train << 1, 5, 2, 5, 3, 5, 4, 5;
  Matrix test(1, 2);
  test << 5, 7;
  const Dataset tr = make_binary(train, {1, -1, 1, -1});
  const Dataset te = make_binary(test, {1});
  const std::vector<Dataset> others{te};
  const StandardizeResult r = standardize(tr, others);
  CHECK(r.train.features.col(0).mean() == doctest::Approx(0.0));
  CHECK(std::sqrt(r.train.features.col(0).array().square().mean()) == doctest::Approx(1.0));
  CHECK(r.stats.constant_count() == 1);
  CHECK(r.train.features(0, 1) == 5.0);  // constant column passes through
  CHECK(r.others[0].features(0, 0) == doctest::Approx((5.0 - 2.5) / std::sqrt(1.25)));
  CHECK(r.others[0].features(0, 1) == 7.0);
}

TEST_CASE("dataset invariants") {
  Matrix x(2, 1);
  x << 1, 2;
  CHECK_THROWS_AS(make_binary(x, {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(make_binary(x, {1}), std::invalid_argument);
  CHECK_THROWS_AS(make_multiclass(x, {0, 3}, 3), std::invalid_argument);
  const Dataset b = with_bias_column(make_binary(x, {1, -1}));
  CHECK(b.dim() == 2);
  CHECK(b.features.col(1).sum() == 2.0);
  CHECK(b.class_index(1) == 1);
}

TEST_CASE("hypercube stand-ins") {
  HypercubeSpec spec = madelon_like_spec();
  CHECK(spec.informative + spec.redundant + spec.probes == 500);
  spec.samples = 200;
  const Dataset a = make_hypercube_clusters(spec, 3);
  CHECK(a.size() == 200);
  CHECK(a.dim() == 500);
  CHECK(a.is_binary());
  CHECK(make_hypercube_clusters(spec, 3).features == a.features);
  const HypercubeSpec heart = spectf_like_spec();
  CHECK(heart.informative + heart.redundant + heart.probes == 44);
}
