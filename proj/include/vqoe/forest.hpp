// Random forests (CART trees on bootstrap samples) for startup-delay
// regression and resolution classification.
#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace vqoe {

enum class ModelKind : std::uint8_t { kRegressor, kClassifier };
enum class MaxFeatures : std::uint8_t { kSqrt, kThird, kAll };

// Tree training can run on one thread (the reference path) or spread trees
// over OpenMP threads. Both produce identical forests.
enum class Execution : std::uint8_t { kSerial, kParallel };

std::string_view to_string(ModelKind k);
std::string_view to_string(MaxFeatures m);
MaxFeatures max_features_from_string(std::string_view s);

inline constexpr std::array<int, 5> kResolutionLadder = {240, 360, 480, 720, 1080};

// Row-major sample matrix with per-row provenance.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> features;  // rows * feature_names.size()
  std::vector<double> targets;   // seconds, or resolution class (240, 360, ...)
  std::vector<std::string> groups;    // session id per row
  std::vector<std::string> services;  // service per row

  std::size_t rows() const { return targets.size(); }
  std::size_t cols() const { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * cols(), cols()};
  }
  void add_row(std::span<const double> x, double target, std::string group, std::string service);
  // Throws DataError when list lengths disagree.
  void validate(ModelKind kind) const;
  Dataset subset(std::span<const std::size_t> rows) const;
  // Keeps only the named columns, in the given order.
  Dataset select_columns(const std::vector<std::string>& names) const;
};

struct Hyperparams {
  int n_trees = 100;
  std::optional<int> max_depth;  // none = grow until pure or min_samples_leaf
  int min_samples_leaf = 1;
  MaxFeatures max_features = MaxFeatures::kSqrt;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// Flat node arrays; leaves have feature == -1. Each node stores its output:
// one mean for regression, a class distribution for classification.
struct DecisionTree {
  std::vector<int> feature;
  std::vector<double> threshold;  // x <= threshold goes left
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;  // nodes * n_outputs
  int n_outputs = 1;

  std::size_t nodes() const { return feature.size(); }
  std::span<const double> leaf_output(std::span<const double> x) const;
  int depth() const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ClassPrediction {
  int label = 0;                     // resolution
  std::vector<double> probabilities; // aligned with the model's classes
};

class RandomForestModel {
 public:
  ModelKind kind = ModelKind::kRegressor;
  std::vector<DecisionTree> trees;
  std::vector<std::string> feature_names;
  std::vector<int> classes;         // classifier only, ascending
  std::vector<double> importances;  // per feature, sums to 1 when any split happened
  Hyperparams hyperparams;

  // Feature names must equal feature_names exactly; otherwise DataError names
  // the first mismatching column.
  void check_columns(const std::vector<std::string>& names) const;

  double predict_value(std::span<const double> x) const;
  ClassPrediction predict_class(std::span<const double> x) const;

  std::vector<double> predict_values(const std::vector<std::string>& names,
                                     std::span<const double> rows,
                                     Execution exec = Execution::kParallel) const;
  std::vector<ClassPrediction> predict_classes(const std::vector<std::string>& names,
                                               std::span<const double> rows,
                                               Execution exec = Execution::kParallel) const;

  void save(std::ostream& out) const;
  static RandomForestModel load(std::istream& in);
  friend bool operator==(const RandomForestModel&, const RandomForestModel&) = default;
};

// Throws DataError for fewer than 2 rows, or fewer than 2 classes when
// classifying. A constant regression target produces a constant model.
RandomForestModel train(const Dataset& data, ModelKind kind, const Hyperparams& hp,
                        Execution exec = Execution::kParallel);

// Builds a single tree on the given (possibly repeated) sample indices. Exposed
// for tests; train() calls it once per bootstrap sample.
DecisionTree build_tree(const Dataset& data, ModelKind kind, const std::vector<int>& classes,
                        std::span<const std::size_t> sample, const Hyperparams& hp,
                        std::uint64_t tree_seed, std::vector<double>* importance = nullptr);

// Index of the highest probability; ties go to the lowest index (lowest
// resolution).
std::size_t argmax_low_tie(std::span<const double> p);

}  // namespace vqoe
