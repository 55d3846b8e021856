#include "rlo/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include <fmt/format.h>

#include "rlo/rng.hpp"

namespace rlo {

namespace {

std::vector<std::string> default_binary_names() { return {"1", "-1"}; }

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view tok, double& value) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  return ec == std::errc{} && ptr == tok.data() + tok.size() && std::isfinite(value);
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() < 1) throw std::invalid_argument("dataset must contain at least one sample");
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw std::invalid_argument(fmt::format("dataset has {} rows but {} labels", features.rows(),
                                            labels.size()));
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset features must be finite");
  if (kind == LabelKind::Binary) {
    for (int y : labels) {
      if (y != 1 && y != -1) throw std::invalid_argument("binary labels must be exactly +1 or -1");
    }
  } else {
    if (num_classes < 2) throw std::invalid_argument("multiclass data needs at least 2 classes");
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw std::invalid_argument(
            fmt::format("class index {} out of range for {} classes", y, num_classes));
      }
    }
  }
}

Dataset make_binary(Matrix features, std::vector<int> labels, std::string name) {
  Dataset d;
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.kind = LabelKind::Binary;
  d.num_classes = 2;
  d.class_names = default_binary_names();
  d.name = std::move(name);
  d.validate();
  return d;
}

Dataset make_multiclass(Matrix features, std::vector<int> labels, int num_classes,
                        std::string name) {
  Dataset d;
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.kind = LabelKind::Multiclass;
  d.num_classes = num_classes;
  for (int c = 0; c < num_classes; ++c) d.class_names.push_back(std::to_string(c));
  d.name = std::move(name);
  d.validate();
  return d;
}

Dataset from_points(std::span<const LabeledPoint> points, LabelKind kind, int num_classes) {
  if (points.empty()) throw std::invalid_argument("dataset must contain at least one sample");
  const Index d = points.front().x.size();
  Matrix x(static_cast<Index>(points.size()), d);
  std::vector<int> y;
  y.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].x.size() != d) throw std::invalid_argument("points have differing dimensions");
    x.row(static_cast<Index>(i)) = points[i].x.transpose();
    y.push_back(points[i].y);
  }
  return kind == LabelKind::Binary ? make_binary(std::move(x), std::move(y))
                                   : make_multiclass(std::move(x), std::move(y), num_classes);
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.features.resize(static_cast<Index>(indices.size()), data.dim());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= static_cast<std::size_t>(data.size())) {
      throw std::out_of_range("subset index out of range");
    }
    out.features.row(static_cast<Index>(r)) = data.features.row(static_cast<Index>(indices[r]));
    out.labels.push_back(data.labels[indices[r]]);
  }
  out.kind = data.kind;
  out.num_classes = data.num_classes;
  out.class_names = data.class_names;
  out.name = data.name;
  out.provenance = data.provenance;
  return out;
}

Dataset with_bias_column(const Dataset& data) {
  Dataset out = data;
  out.features.conservativeResize(Eigen::NoChange, data.dim() + 1);
  out.features.col(data.dim()).setOnes();
  return out;
}

Dataset make_spiral(std::size_t n, double noise, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) {
    throw std::invalid_argument(fmt::format("spiral sample count must be even and positive, got {}", n));
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("spiral noise must be nonnegative");
  constexpr double kTurns = 3.0 * std::numbers::pi;
  Rng rng(seed);
  Matrix x(static_cast<Index>(n), 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int arm = static_cast<int>(i % 2);
    const double t = rng.uniform(0.0, kTurns);
    const double r = t / kTurns;
    const double angle = t + arm * std::numbers::pi;
    const Index row = static_cast<Index>(i);
    x(row, 0) = r * std::cos(angle) + noise * rng.normal();
    x(row, 1) = r * std::sin(angle) + noise * rng.normal();
    y[i] = arm == 0 ? 1 : -1;
  }
  Dataset d = make_binary(std::move(x), std::move(y), "spiral");
  d.provenance = fmt::format("spiral(n={}, noise={}, seed={})", n, noise, seed);
  return d;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double train_fraction,
                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  const auto n = static_cast<std::size_t>(data.size());
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw std::invalid_argument(
        fmt::format("train fraction {} leaves an empty side for n = {}", train_fraction, n));
  }
  auto idx = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(data, train), subset(data, test)};
}

Dataset read_delimited(std::istream& in, const DelimitedSchema& schema, std::string name) {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> label_tokens;
  std::size_t expected_fields = 0;
  std::size_t label_pos = 0;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = schema.header;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = split_fields(line, schema.delimiter);
    if (expected_fields == 0) {
      expected_fields = fields.size();
      const long pos = schema.label_column < 0
                           ? static_cast<long>(expected_fields) + schema.label_column
                           : schema.label_column;
      if (pos < 0 || pos >= static_cast<long>(expected_fields)) {
        throw DataError(fmt::format("line {}: label column {} missing (row has {} fields)", line_no,
                                    schema.label_column, expected_fields));
      }
      if (expected_fields < 2) {
        throw DataError(fmt::format("line {}: need at least one feature besides the label", line_no));
      }
      label_pos = static_cast<std::size_t>(pos);
    } else if (fields.size() != expected_fields) {
      throw DataError(fmt::format("line {}: ragged row, expected {} fields but found {}", line_no,
                                  expected_fields, fields.size()));
    }
    std::vector<double> row;
    row.reserve(expected_fields - 1);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_pos) continue;
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw DataError(fmt::format("line {}, column {}: cannot parse '{}' as a finite number",
                                    line_no, c + 1, fields[c]));
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
    label_tokens.emplace_back(fields[label_pos]);
  }
  if (rows.empty()) throw DataError("no data rows found");

  std::vector<std::string> classes;
  std::unordered_map<std::string, int> class_of;
  std::vector<int> idx;
  idx.reserve(label_tokens.size());
  for (const auto& tok : label_tokens) {
    auto [it, inserted] = class_of.emplace(tok, static_cast<int>(classes.size()));
    if (inserted) classes.push_back(tok);
    idx.push_back(it->second);
  }
  if (classes.size() < 2) throw DataError("label column holds a single class");

  Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(expected_fields - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }

  Dataset d;
  if (classes.size() == 2) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (int i : idx) y.push_back(i == 0 ? 1 : -1);
    d = make_binary(std::move(x), std::move(y), std::move(name));
  } else {
    d = make_multiclass(std::move(x), std::move(idx), static_cast<int>(classes.size()),
                        std::move(name));
  }
  d.class_names = classes;
  std::string mapping;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (c) mapping += ", ";
    mapping += classes.size() == 2 ? fmt::format("{}->{}", classes[c], c == 0 ? "+1" : "-1")
                                   : fmt::format("{}->{}", classes[c], c);
  }
  d.provenance = fmt::format("labels: {{{}}}", mapping);
  return d;
}

Dataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  Dataset d;
  try {
    d = read_delimited(in, schema, path.stem().string());
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  d.provenance = fmt::format("file {}; {}", path.filename().string(), d.provenance);
  return d;
}

void write_delimited(std::ostream& out, const Dataset& data, const DelimitedSchema& schema) {
  const auto total = static_cast<long>(data.dim()) + 1;
  const long label_pos = schema.label_column < 0 ? total + schema.label_column : schema.label_column;
  if (label_pos < 0 || label_pos >= total) throw std::invalid_argument("label column out of range");
  const auto label_token = [&](Index i) -> std::string {
    const int c = data.class_index(i);
    if (static_cast<std::size_t>(c) < data.class_names.size()) {
      return data.class_names[static_cast<std::size_t>(c)];
    }
    return std::to_string(data.labels[static_cast<std::size_t>(i)]);
  };
  if (schema.header) {
    std::string line;
    for (long c = 0, f = 0; c < total; ++c) {
      if (c) line += schema.delimiter;
      line += c == label_pos ? std::string("class") : fmt::format("f{}", ++f);
    }
    out << line << '\n';
  }
  for (Index i = 0; i < data.size(); ++i) {
    std::string line;
    for (long c = 0, f = 0; c < total; ++c) {
      if (c) line += schema.delimiter;
      line += c == label_pos ? label_token(i) : fmt::format("{}", data.features(i, f++));
    }
    out << line << '\n';
  }
}

void save_delimited(const std::filesystem::path& path, const Dataset& data,
                    const DelimitedSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  write_delimited(out, data, schema);
}

Dataset Standardization::apply(const Dataset& data) const {
  if (data.dim() != mean.size()) throw std::invalid_argument("standardization dimension mismatch");
  Dataset out = data;
  for (Index c = 0; c < data.dim(); ++c) {
    if (constant[static_cast<std::size_t>(c)]) continue;
    out.features.col(c) = (data.features.col(c).array() - mean(c)) / stddev(c);
  }
  return out;
}

std::size_t Standardization::constant_count() const {
  return static_cast<std::size_t>(std::count(constant.begin(), constant.end(), true));
}

Standardization fit_standardization(const Dataset& train) {
  if (train.size() < 1) throw std::invalid_argument("cannot standardize an empty dataset");
  Standardization s;
  const auto n = static_cast<double>(train.size());
  s.mean = train.features.colwise().mean().transpose();
  s.stddev.resize(train.dim());
  s.constant.assign(static_cast<std::size_t>(train.dim()), false);
  for (Index c = 0; c < train.dim(); ++c) {
    const double var = (train.features.col(c).array() - s.mean(c)).square().sum() / n;
    s.stddev(c) = std::sqrt(var);
    if (!(s.stddev(c) > 1e-12 * std::max(1.0, std::abs(s.mean(c))))) {
      s.constant[static_cast<std::size_t>(c)] = true;
    }
  }
  return s;
}

StandardizeResult standardize(const Dataset& train, std::span<const Dataset> others) {
  StandardizeResult r;
  r.stats = fit_standardization(train);
  r.train = r.stats.apply(train);
  r.others.reserve(others.size());
  for (const auto& d : others) r.others.push_back(r.stats.apply(d));
  return r;
}

FoldPlan kfold(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("k-fold needs at least 2 folds");
  if (folds > n) {
    throw std::invalid_argument(fmt::format("cannot split {} samples into {} folds", n, folds));
  }
  auto idx = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  FoldPlan plan;
  plan.folds = folds;
  plan.validation.resize(folds);
  for (std::size_t i = 0; i < n; ++i) plan.validation[i % folds].push_back(idx[i]);
  plan.train.resize(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    auto& val = plan.validation[f];
    std::sort(val.begin(), val.end());
    std::vector<bool> in_val(n, false);
    for (auto i : val) in_val[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_val[i]) plan.train[f].push_back(i);
    }
  }
  return plan;
}

std::vector<Dataset> one_vs_all(const Dataset& data) {
  if (data.kind != LabelKind::Multiclass || data.num_classes < 3) {
    throw std::invalid_argument("one-vs-all needs a multiclass dataset with at least 3 classes");
  }
  std::vector<Dataset> out;
  out.reserve(static_cast<std::size_t>(data.num_classes));
  for (int j = 0; j < data.num_classes; ++j) {
    Dataset b;
    b.features = data.features;
    b.labels.reserve(data.labels.size());
    for (int y : data.labels) b.labels.push_back(y == j ? 1 : -1);
    b.kind = LabelKind::Binary;
    b.num_classes = 2;
    const std::string cls = static_cast<std::size_t>(j) < data.class_names.size()
                                ? data.class_names[static_cast<std::size_t>(j)]
                                : std::to_string(j);
    b.class_names = {cls, "rest"};
    b.name = fmt::format("{}[{}-vs-rest]", data.name, cls);
    b.provenance = fmt::format("{}; one-vs-all class {}", data.provenance, cls);
    out.push_back(std::move(b));
  }
  return out;
}

Dataset make_hypercube_clusters(const HypercubeSpec& spec, std::uint64_t seed) {
  if (spec.samples < 2 || spec.informative < 1 || spec.clusters_per_class < 1) {
    throw std::invalid_argument("hypercube spec needs samples >= 2, informative >= 1, clusters >= 1");
  }
  if (spec.informative < 63 && 2 * spec.clusters_per_class > (std::size_t{1} << spec.informative)) {
    throw std::invalid_argument("more clusters than hypercube vertices");
  }
  if (!(spec.positive_fraction > 0.0 && spec.positive_fraction < 1.0)) {
    throw std::invalid_argument("positive fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  const std::size_t inf = spec.informative;
  const std::size_t total_clusters = 2 * spec.clusters_per_class;
  const std::size_t d = inf + spec.redundant + spec.probes;

  // Distinct hypercube vertices, one per cluster; even clusters are +1.
  std::vector<std::uint64_t> vertices;
  while (vertices.size() < total_clusters) {
    const std::uint64_t v = inf >= 64 ? rng.next_u64() : rng.index(std::uint64_t{1} << inf);
    if (std::find(vertices.begin(), vertices.end(), v) == vertices.end()) vertices.push_back(v);
  }

  const auto n = spec.samples;
  const auto n_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(n)));
  Matrix x = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(d));
  std::vector<int> y(n);
  std::size_t row = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const std::size_t count = cls == 0 ? n_pos : n - n_pos;
    for (std::size_t j = 0; j < count; ++j, ++row) {
      y[row] = cls == 0 ? 1 : -1;
      for (std::size_t f = 0; f < inf; ++f) {
        x(static_cast<Index>(row), static_cast<Index>(f)) = rng.normal();
      }
    }
  }
  // Per-cluster random covariance, then shift to the cluster vertex.
  std::vector<Matrix> mix(total_clusters);
  for (auto& a : mix) {
    a.resize(static_cast<Index>(inf), static_cast<Index>(inf));
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < a.cols(); ++j) a(i, j) = rng.uniform(-1.0, 1.0);
  }
  row = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const std::size_t count = cls == 0 ? n_pos : n - n_pos;
    for (std::size_t j = 0; j < count; ++j, ++row) {
      const std::size_t cluster = 2 * (j % spec.clusters_per_class) + static_cast<std::size_t>(cls);
      const Index r = static_cast<Index>(row);
      const Eigen::RowVectorXd raw = x.row(r).head(static_cast<Index>(inf));
      x.row(r).head(static_cast<Index>(inf)) = raw * mix[cluster];
      for (std::size_t f = 0; f < inf; ++f) {
        const bool bit = (vertices[cluster] >> (f % 64)) & 1u;
        x(r, static_cast<Index>(f)) += (bit ? 1.0 : -1.0) * spec.class_separation;
      }
    }
  }
  if (spec.redundant > 0) {
    Matrix b(static_cast<Index>(inf), static_cast<Index>(spec.redundant));
    for (Index i = 0; i < b.rows(); ++i)
      for (Index j = 0; j < b.cols(); ++j) b(i, j) = rng.uniform(-1.0, 1.0);
    x.middleCols(static_cast<Index>(inf), static_cast<Index>(spec.redundant)) =
        x.leftCols(static_cast<Index>(inf)) * b;
  }
  for (std::size_t f = inf + spec.redundant; f < d; ++f) {
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Index>(i), static_cast<Index>(f)) = rng.normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < spec.label_noise) y[i] = -y[i];
  }
  // Interleave classes so file order carries no label information.
  auto perm = iota_indices(n);
  rng.shuffle(std::span<std::size_t>(perm));
  Dataset out = subset(make_binary(std::move(x), std::move(y)), perm);
  out.name = spec.name;
  out.provenance = fmt::format(
      "hypercube clusters (n={}, informative={}, redundant={}, probes={}, clusters/class={}, "
      "sep={}, flip={}, pos={}, seed={})",
      spec.samples, spec.informative, spec.redundant, spec.probes, spec.clusters_per_class,
      spec.class_separation, spec.label_noise, spec.positive_fraction, seed);
  return out;
}

HypercubeSpec madelon_like_spec() {
  HypercubeSpec s;
  s.name = "madelon-like";
  return s;
}

HypercubeSpec spectf_like_spec() {
  HypercubeSpec s;
  s.samples = 267;
  s.informative = 6;
  s.redundant = 10;
  s.probes = 28;
  s.clusters_per_class = 2;
  s.class_separation = 1.0;
  s.label_noise = 0.03;
  s.positive_fraction = 212.0 / 267.0;
  s.name = "spectf-like";
  return s;
}

}  // namespace rlo
