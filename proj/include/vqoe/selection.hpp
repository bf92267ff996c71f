// Model selection: group-aware folds, exhaustive grid search and the
// specific / composite / excluded training regimes.
#pragma once

#include <istream>
#include <string>
#include <vector>

#include "vqoe/forest.hpp"

namespace vqoe {

// Assigns every row a fold so that all rows of a group share one fold.
// Groups are shuffled with `seed` and dealt round-robin. Throws DataError when
// k exceeds the number of distinct groups or is below 2.
std::vector<int> group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed);

// Mean validation score over the folds: R2 for regressors, support-weighted
// F1 for classifiers.
double cross_validate(const Dataset& data, ModelKind kind, const Hyperparams& hp,
                      const std::vector<int>& folds, Execution exec = Execution::kParallel);

struct HyperparamGrid {
  std::vector<int> n_trees;
  std::vector<std::optional<int>> max_depth;
  std::vector<int> min_samples_leaf;
  std::vector<MaxFeatures> max_features;
  std::uint64_t seed = 0;

  // n_trees {50, 100, 200} x max_depth {8, 16, none} x min_samples_leaf {1, 5};
  // max_features sqrt for classifiers, third for regressors.
  static HyperparamGrid defaults(ModelKind kind);
  // {"n_trees": [...], "max_depth": [8, null], "min_samples_leaf": [...],
  //  "max_features": ["sqrt"], "seed": 0}; missing keys fall back to defaults.
  static HyperparamGrid from_json(std::istream& in, ModelKind kind);
  std::vector<Hyperparams> points() const;
};

struct GridPoint {
  Hyperparams hp;
  double score = 0.0;
};

struct GridSearchResult {
  Hyperparams best;
  double best_score = 0.0;
  std::vector<GridPoint> points;  // one per lattice point, lattice order
};

// Ties on the mean score go to fewer trees, then shallower trees.
GridSearchResult grid_search(const Dataset& data, ModelKind kind, const HyperparamGrid& grid,
                             int folds = 10, Execution exec = Execution::kParallel);

struct Regime {
  enum class Kind { kSpecific, kComposite, kExcluded };
  Kind kind = Kind::kComposite;
  std::string service;

  static Regime specific(std::string s) { return {Kind::kSpecific, std::move(s)}; }
  static Regime composite() { return {Kind::kComposite, {}}; }
  static Regime excluded(std::string s) { return {Kind::kExcluded, std::move(s)}; }
  // "specific:<svc>", "composite", "excluded:<svc>"
  static Regime parse(std::string_view text);
  std::string str() const;
  bool admits(const std::string& service) const;
};

// Rows of `pool` admitted by the regime, provenance kept. Throws DataError
// when nothing is left.
Dataset assemble_regime(const Dataset& pool, const Regime& regime);

}  // namespace vqoe
