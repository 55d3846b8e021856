#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rlo/types.hpp"

namespace rlo {

enum class LabelKind { Binary, Multiclass };

/// One (x, y) sample. y is ±1 for binary data or a class index otherwise.
struct LabeledPoint {
  Vector x;
  int y = 1;
};

/// Feature matrix (one sample per row) plus labels of a single kind.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  LabelKind kind = LabelKind::Binary;
  int num_classes = 2;
  /// Original label tokens by class index (binary: index 0 is +1, index 1 is -1).
  std::vector<std::string> class_names;
  std::string name;
  std::string provenance;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool is_binary() const { return kind == LabelKind::Binary; }

  /// Class index of sample i; binary labels map +1 -> 0 and -1 -> 1.
  int class_index(Index i) const {
    const int y = labels[static_cast<std::size_t>(i)];
    return kind == LabelKind::Binary ? (y == 1 ? 0 : 1) : y;
  }

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

/// Error raised by file ingestion; the message names the line (and column).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Dataset make_binary(Matrix features, std::vector<int> labels, std::string name = {});
Dataset make_multiclass(Matrix features, std::vector<int> labels, int num_classes,
                        std::string name = {});
Dataset from_points(std::span<const LabeledPoint> points, LabelKind kind, int num_classes = 2);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Appends a constant-1 column so a linear model carries its bias as a weight.
Dataset with_bias_column(const Dataset& data);

/// Two interleaved spiral arms, labels +1 (arm 0) and -1 (arm 1).
///
/// For arm s and t ~ U[0, 3π]: r = t / 3π, point = r (cos(t + sπ), sin(t + sπ))
/// plus noise * N(0, I). Samples alternate between arms, so classes are exactly
/// balanced. Throws std::invalid_argument for odd n.
Dataset make_spiral(std::size_t n, double noise, std::uint64_t seed);

/// Shuffled split into floor(fraction * n) training rows and the remainder.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double train_fraction,
                                             std::uint64_t seed);

struct DelimitedSchema {
  /// Label column; negative values count from the end (-1 is the last column).
  int label_column = -1;
  char delimiter = ',';
  bool header = false;
};

/// Reads a delimited numeric table with one label column.
///
/// Label tokens are mapped to class indices in order of first appearance and
/// the mapping is recorded in `provenance`. Two-class tables become binary
/// with the first-seen token as +1.
Dataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema);
Dataset read_delimited(std::istream& in, const DelimitedSchema& schema, std::string name = {});

/// Writes `data` in the layout `schema` describes (label tokens from class_names).
void write_delimited(std::ostream& out, const Dataset& data, const DelimitedSchema& schema);
void save_delimited(const std::filesystem::path& path, const Dataset& data,
                    const DelimitedSchema& schema);

/// Column statistics fitted on a training set.
struct Standardization {
  Vector mean;
  Vector stddev;
  /// Columns with zero spread; they pass through unscaled.
  std::vector<bool> constant;

  Dataset apply(const Dataset& data) const;
  std::size_t constant_count() const;
};

Standardization fit_standardization(const Dataset& train);

struct StandardizeResult {
  Dataset train;
  std::vector<Dataset> others;
  Standardization stats;
};

/// Column-wise (x - μ) / σ with μ, σ from `train` only (population std).
StandardizeResult standardize(const Dataset& train, std::span<const Dataset> others = {});

struct FoldPlan {
  std::size_t folds = 0;
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::vector<std::size_t>> validation;
};

/// Shuffled indices dealt round-robin into K folds (sizes differ by at most one).
FoldPlan kfold(std::size_t n, std::size_t folds, std::uint64_t seed);

/// One binary problem per class: class j -> +1, every other class -> -1.
std::vector<Dataset> one_vs_all(const Dataset& data);

/// Parameters of the hypercube-cluster generator (the construction behind the
/// Madelon benchmark): Gaussian clusters on hypercube vertices in the
/// informative subspace, redundant features as random linear combinations of
/// the informative ones, and pure-noise probe features.
struct HypercubeSpec {
  std::size_t samples = 4400;
  std::size_t informative = 5;
  std::size_t redundant = 15;
  std::size_t probes = 480;
  std::size_t clusters_per_class = 16;
  double class_separation = 1.0;
  /// Fraction of labels flipped after generation.
  double label_noise = 0.01;
  /// Fraction of samples drawn for the +1 class.
  double positive_fraction = 0.5;
  std::string name = "hypercube";
};

Dataset make_hypercube_clusters(const HypercubeSpec& spec, std::uint64_t seed);

/// Shape-matched stand-ins for the UCI tables that cannot be fetched offline.
HypercubeSpec madelon_like_spec();
HypercubeSpec spectf_like_spec();

}  // namespace rlo
