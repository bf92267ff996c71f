#include "vqoe/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "vqoe/types.hpp"

namespace vqoe {

using nlohmann::json;

std::string_view to_string(ModelKind k) {
  return k == ModelKind::kRegressor ? "regressor" : "classifier";
}

std::string_view to_string(MaxFeatures m) {
  switch (m) {
    case MaxFeatures::kSqrt:
      return "sqrt";
    case MaxFeatures::kThird:
      return "third";
    case MaxFeatures::kAll:
      break;
  }
  return "all";
}

MaxFeatures max_features_from_string(std::string_view s) {
  if (s == "sqrt") return MaxFeatures::kSqrt;
  if (s == "third") return MaxFeatures::kThird;
  if (s == "all") return MaxFeatures::kAll;
  throw DataError("unknown max_features '" + std::string(s) + "'");
}

void Dataset::add_row(std::span<const double> x, double target, std::string group,
                      std::string service) {
  if (x.size() != cols()) {
    throw DataError("row has " + std::to_string(x.size()) + " values, dataset has " +
                    std::to_string(cols()) + " columns");
  }
  features.insert(features.end(), x.begin(), x.end());
  targets.push_back(target);
  groups.push_back(std::move(group));
  services.push_back(std::move(service));
}

void Dataset::validate(ModelKind kind) const {
  if (features.size() != rows() * cols() || groups.size() != rows() || services.size() != rows()) {
    throw DataError("dataset columns have inconsistent lengths");
  }
  if (kind == ModelKind::kClassifier) {
    for (double t : targets) {
      if (std::find(kResolutionLadder.begin(), kResolutionLadder.end(), static_cast<int>(t)) ==
              kResolutionLadder.end() ||
          t != std::floor(t)) {
        throw DataError("classification target " + std::to_string(t) + " is not a ladder resolution");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.feature_names = feature_names;
  out.features.reserve(idx.size() * cols());
  for (auto i : idx) out.add_row(row(i), targets[i], groups[i], services[i]);
  return out;
}

Dataset Dataset::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> pos;
  for (const auto& n : names) {
    const auto it = std::find(feature_names.begin(), feature_names.end(), n);
    if (it == feature_names.end()) throw DataError("dataset has no column '" + n + "'");
    pos.push_back(static_cast<std::size_t>(it - feature_names.begin()));
  }
  Dataset out;
  out.feature_names = names;
  out.features.reserve(rows() * names.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto x = row(r);
    for (auto p : pos) out.features.push_back(x[p]);
  }
  out.targets = targets;
  out.groups = groups;
  out.services = services;
  return out;
}

void Hyperparams::validate() const {
  if (n_trees < 1) throw DataError("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw DataError("min_samples_leaf must be >= 1");
  if (max_depth && *max_depth < 0) throw DataError("max_depth must be >= 0");
}

std::span<const double> DecisionTree::leaf_output(std::span<const double> x) const {
  int node = 0;
  while (feature[node] >= 0) {
    node = x[static_cast<std::size_t>(feature[node])] <= threshold[node] ? left[node] : right[node];
  }
  return {value.data() + static_cast<std::size_t>(node) * n_outputs,
          static_cast<std::size_t>(n_outputs)};
}

int DecisionTree::depth() const {
  if (feature.empty()) return 0;
  std::vector<int> d(nodes(), 0);
  int best = 0;
  // Children always follow their parent in the arrays.
  for (std::size_t i = 0; i < nodes(); ++i) {
    if (feature[i] >= 0) {
      d[static_cast<std::size_t>(left[i])] = d[i] + 1;
      d[static_cast<std::size_t>(right[i])] = d[i] + 1;
    }
    best = std::max(best, d[i]);
  }
  return best;
}

std::size_t argmax_low_tie(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

namespace {

int feature_budget(MaxFeatures m, std::size_t p) {
  switch (m) {
    case MaxFeatures::kSqrt:
      return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
    case MaxFeatures::kThird:
      return std::max(1, static_cast<int>(p / 3));
    case MaxFeatures::kAll:
      break;
  }
  return static_cast<int>(p);
}

std::mt19937_64 tree_rng(std::uint64_t seed, std::uint64_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), static_cast<std::uint32_t>(tree >> 32)};
  return std::mt19937_64(seq);
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, ModelKind kind, const std::vector<int>& classes,
              const Hyperparams& hp, std::uint64_t seed)
      : data_(data), kind_(kind), hp_(hp), rng_(tree_rng(hp.seed, seed)) {
    n_out_ = kind == ModelKind::kClassifier ? static_cast<int>(classes.size()) : 1;
    if (kind == ModelKind::kClassifier) {
      label_.resize(data.rows());
      for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto it = std::lower_bound(classes.begin(), classes.end(),
                                         static_cast<int>(data.targets[i]));
        label_[i] = static_cast<int>(it - classes.begin());
      }
    }
    tree_.n_outputs = n_out_;
    budget_ = feature_budget(hp.max_features, data.cols());
  }

  DecisionTree build(std::vector<std::size_t> sample, std::vector<double>* importance) {
    idx_ = std::move(sample);
    total_ = static_cast<double>(idx_.size());
    if (importance) importance->assign(data_.cols(), 0.0);
    importance_ = importance;
    features_.resize(data_.cols());
    std::iota(features_.begin(), features_.end(), std::size_t{0});

    struct Task {
      std::size_t lo, hi;
      int depth;
      int node;
    };
    std::vector<Task> stack;
    stack.push_back({0, idx_.size(), 0, new_node()});
    while (!stack.empty()) {
      const Task t = stack.back();
      stack.pop_back();
      split_node(t.lo, t.hi, t.depth, t.node, [&](std::size_t lo, std::size_t hi, int depth) {
        const int id = new_node();
        stack.push_back({lo, hi, depth, id});
        return id;
      });
    }
    return std::move(tree_);
  }

 private:
  int new_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.resize(tree_.value.size() + static_cast<std::size_t>(n_out_), 0.0);
    return static_cast<int>(tree_.feature.size() - 1);
  }

  // Stores the node output; returns (sum of squares proxy, impure?).
  std::pair<double, bool> node_output(std::size_t lo, std::size_t hi, int node) {
    const auto n = static_cast<double>(hi - lo);
    double* out = tree_.value.data() + static_cast<std::size_t>(node) * n_out_;
    if (kind_ == ModelKind::kRegressor) {
      double s = 0.0;
      bool impure = false;
      const double first = data_.targets[idx_[lo]];
      for (std::size_t i = lo; i < hi; ++i) {
        const double y = data_.targets[idx_[i]];
        s += y;
        impure |= y != first;
      }
      out[0] = s / n;
      return {s * s / n, impure};
    }
    counts_.assign(static_cast<std::size_t>(n_out_), 0.0);
    for (std::size_t i = lo; i < hi; ++i) counts_[static_cast<std::size_t>(label_[idx_[i]])] += 1.0;
    double sq = 0.0;
    int nonzero = 0;
    for (int k = 0; k < n_out_; ++k) {
      out[k] = counts_[static_cast<std::size_t>(k)] / n;
      sq += counts_[static_cast<std::size_t>(k)] * counts_[static_cast<std::size_t>(k)];
      nonzero += counts_[static_cast<std::size_t>(k)] > 0;
    }
    return {sq / n, nonzero > 1};
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double proxy = -1.0;
  };

  // Best split on one feature: maximizes sum over children of
  // (sum y)^2 / n (regression) or sum_k count_k^2 / n (Gini).
  Split best_split_on(std::size_t f, std::size_t lo, std::size_t hi) {
    const std::size_t n = hi - lo;
    const auto leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    vals_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = idx_[lo + i];
      vals_[i] = {data_.row(r)[f], r};
    }
    std::sort(vals_.begin(), vals_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Split best;
    if (vals_.front().first == vals_.back().first) return best;

    if (kind_ == ModelKind::kRegressor) {
      double total = 0.0;
      for (const auto& v : vals_) total += data_.targets[v.second];
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += data_.targets[vals_[i].second];
        const std::size_t nl = i + 1;
        if (nl < leaf || n - nl < leaf || vals_[i].first == vals_[i + 1].first) continue;
        const double right = total - left;
        const double proxy = left * left / static_cast<double>(nl) +
                             right * right / static_cast<double>(n - nl);
        if (proxy > best.proxy) {
          best = {static_cast<int>(f), midpoint(vals_[i].first, vals_[i + 1].first), proxy};
        }
      }
      return best;
    }

    const auto k = static_cast<std::size_t>(n_out_);
    right_counts_.assign(k, 0.0);
    left_counts_.assign(k, 0.0);
    for (const auto& v : vals_) right_counts_[static_cast<std::size_t>(label_[v.second])] += 1.0;
    double sq_left = 0.0;
    double sq_right = 0.0;
    for (double c : right_counts_) sq_right += c * c;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto c = static_cast<std::size_t>(label_[vals_[i].second]);
      // Incremental update of the squared class counts.
      sq_left += 2.0 * left_counts_[c] + 1.0;
      sq_right -= 2.0 * right_counts_[c] - 1.0;
      left_counts_[c] += 1.0;
      right_counts_[c] -= 1.0;
      const std::size_t nl = i + 1;
      if (nl < leaf || n - nl < leaf || vals_[i].first == vals_[i + 1].first) continue;
      const double proxy =
          sq_left / static_cast<double>(nl) + sq_right / static_cast<double>(n - nl);
      if (proxy > best.proxy) {
        best = {static_cast<int>(f), midpoint(vals_[i].first, vals_[i + 1].first), proxy};
      }
    }
    return best;
  }

  static double midpoint(double a, double b) {
    const double m = a + (b - a) / 2.0;
    return m < b ? m : a;
  }

  template <typename Push>
  void split_node(std::size_t lo, std::size_t hi, int depth, int node, Push push) {
    const auto [parent_proxy, impure] = node_output(lo, hi, node);
    const auto n = hi - lo;
    const auto leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    if (!impure || n < 2 * leaf || (hp_.max_depth && depth >= *hp_.max_depth)) return;

    // Draw features without replacement; past the budget, keep drawing only
    // until some feature yields a valid split.
    Split best;
    const std::size_t p = features_.size();
    for (std::size_t drawn = 0; drawn < p; ++drawn) {
      if (drawn >= static_cast<std::size_t>(budget_) && best.feature >= 0) break;
      std::uniform_int_distribution<std::size_t> pick(drawn, p - 1);
      std::swap(features_[drawn], features_[pick(rng_)]);
      const Split s = best_split_on(features_[drawn], lo, hi);
      if (s.feature >= 0 && s.proxy > best.proxy) best = s;
    }
    if (best.feature < 0) return;

    const auto f = static_cast<std::size_t>(best.feature);
    const auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx_.begin() + static_cast<std::ptrdiff_t>(hi),
                                    [&](std::size_t r) { return data_.row(r)[f] <= best.threshold; });
    const auto split = static_cast<std::size_t>(mid - idx_.begin());
    if (split == lo || split == hi) return;

    if (importance_) {
      (*importance_)[f] += std::max(0.0, best.proxy - parent_proxy) / total_;
    }
    tree_.feature[static_cast<std::size_t>(node)] = best.feature;
    tree_.threshold[static_cast<std::size_t>(node)] = best.threshold;
    // Right pushed first so the left subtree is numbered first.
    const int r = push(split, hi, depth + 1);
    const int l = push(lo, split, depth + 1);
    tree_.left[static_cast<std::size_t>(node)] = l;
    tree_.right[static_cast<std::size_t>(node)] = r;
  }

  const Dataset& data_;
  ModelKind kind_;
  Hyperparams hp_;
  std::mt19937_64 rng_;
  int n_out_ = 1;
  int budget_ = 1;
  double total_ = 0.0;
  std::vector<int> label_;
  std::vector<std::size_t> idx_;
  std::vector<std::size_t> features_;
  std::vector<double> counts_, left_counts_, right_counts_;
  std::vector<std::pair<double, std::size_t>> vals_;
  std::vector<double>* importance_ = nullptr;
  DecisionTree tree_;
};

}  // namespace

DecisionTree build_tree(const Dataset& data, ModelKind kind, const std::vector<int>& classes,
                        std::span<const std::size_t> sample, const Hyperparams& hp,
                        std::uint64_t tree_seed, std::vector<double>* importance) {
  TreeBuilder b(data, kind, classes, hp, tree_seed);
  return b.build(std::vector<std::size_t>(sample.begin(), sample.end()), importance);
}

RandomForestModel train(const Dataset& data, ModelKind kind, const Hyperparams& hp,
                        Execution exec) {
  hp.validate();
  data.validate(kind);
  if (data.rows() < 2) throw DataError("training needs at least 2 samples");
  if (data.cols() == 0) throw DataError("training needs at least 1 feature");

  RandomForestModel m;
  m.kind = kind;
  m.feature_names = data.feature_names;
  m.hyperparams = hp;
  if (kind == ModelKind::kClassifier) {
    for (double t : data.targets) m.classes.push_back(static_cast<int>(t));
    std::sort(m.classes.begin(), m.classes.end());
    m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
    if (m.classes.size() < 2) throw DataError("classification needs at least 2 classes");
  }

  const auto n_trees = static_cast<std::size_t>(hp.n_trees);
  const std::size_t n = data.rows();
  m.trees.resize(n_trees);
  std::vector<std::vector<double>> imp(n_trees);

  // Bootstrap and split streams are keyed by (seed, tree index) only, so tree
  // t never depends on how many trees are grown or on which thread.
  auto build_one = [&](std::size_t t) {
    std::mt19937_64 boot = tree_rng(hp.seed ^ 0x5bd1e995ULL, t);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = pick(boot);
    TreeBuilder builder(data, kind, m.classes, hp, t);
    m.trees[t] = builder.build(std::move(sample), &imp[t]);
  };

  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n_trees); ++t) {
      build_one(static_cast<std::size_t>(t));
    }
  } else {
    for (std::size_t t = 0; t < n_trees; ++t) build_one(t);
  }

  m.importances.assign(data.cols(), 0.0);
  for (const auto& ti : imp) {
    const double s = std::accumulate(ti.begin(), ti.end(), 0.0);
    if (s <= 0.0) continue;
    for (std::size_t f = 0; f < ti.size(); ++f) m.importances[f] += ti[f] / s;
  }
  const double total = std::accumulate(m.importances.begin(), m.importances.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : m.importances) v /= total;
  }
  return m;
}

void RandomForestModel::check_columns(const std::vector<std::string>& names) const {
  const std::size_t n = std::max(names.size(), feature_names.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string got = i < names.size() ? names[i] : "<missing>";
    const std::string want = i < feature_names.size() ? feature_names[i] : "<none>";
    if (got != want) {
      throw DataError("feature column " + std::to_string(i) + " is '" + got + "', model expects '" +
                      want + "'");
    }
  }
}

double RandomForestModel::predict_value(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.leaf_output(x)[0];
  return s / static_cast<double>(trees.size());
}

ClassPrediction RandomForestModel::predict_class(std::span<const double> x) const {
  ClassPrediction out;
  out.probabilities.assign(classes.size(), 0.0);
  for (const auto& t : trees) {
    const auto dist = t.leaf_output(x);
    for (std::size_t k = 0; k < dist.size(); ++k) out.probabilities[k] += dist[k];
  }
  double total = 0.0;
  for (double p : out.probabilities) total += p;
  for (auto& p : out.probabilities) p /= total;
  out.label = classes[argmax_low_tie(out.probabilities)];
  return out;
}

std::vector<double> RandomForestModel::predict_values(const std::vector<std::string>& names,
                                                      std::span<const double> rows,
                                                      Execution exec) const {
  check_columns(names);
  if (kind != ModelKind::kRegressor) throw DataError("model is not a regressor");
  const std::size_t p = feature_names.size();
  const std::size_t n = p ? rows.size() / p : 0;
  std::vector<double> out(n);
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      out[static_cast<std::size_t>(i)] = predict_value(rows.subspan(static_cast<std::size_t>(i) * p, p));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = predict_value(rows.subspan(i * p, p));
  }
  return out;
}

std::vector<ClassPrediction> RandomForestModel::predict_classes(
    const std::vector<std::string>& names, std::span<const double> rows, Execution exec) const {
  check_columns(names);
  if (kind != ModelKind::kClassifier) throw DataError("model is not a classifier");
  const std::size_t p = feature_names.size();
  const std::size_t n = p ? rows.size() / p : 0;
  std::vector<ClassPrediction> out(n);
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      out[static_cast<std::size_t>(i)] = predict_class(rows.subspan(static_cast<std::size_t>(i) * p, p));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = predict_class(rows.subspan(i * p, p));
  }
  return out;
}

void RandomForestModel::save(std::ostream& out) const {
  json j;
  j["format"] = "vqoe-random-forest";
  j["version"] = 1;
  j["kind"] = to_string(kind);
  j["hyperparams"] = {{"n_trees", hyperparams.n_trees},
                      {"max_depth", hyperparams.max_depth ? json(*hyperparams.max_depth) : json()},
                      {"min_samples_leaf", hyperparams.min_samples_leaf},
                      {"max_features", to_string(hyperparams.max_features)},
                      {"seed", hyperparams.seed}};
  j["feature_names"] = feature_names;
  j["classes"] = classes;
  j["importances"] = importances;
  json ts = json::array();
  for (const auto& t : trees) {
    ts.push_back({{"n_outputs", t.n_outputs},
                  {"feature", t.feature},
                  {"threshold", t.threshold},
                  {"left", t.left},
                  {"right", t.right},
                  {"value", t.value}});
  }
  j["trees"] = std::move(ts);
  out << j.dump() << '\n';
}

RandomForestModel RandomForestModel::load(std::istream& in) {
  RandomForestModel m;
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "vqoe-random-forest") throw DataError("not a random forest model file");
    m.kind = j.at("kind").get<std::string>() == "classifier" ? ModelKind::kClassifier
                                                             : ModelKind::kRegressor;
    const auto& hp = j.at("hyperparams");
    m.hyperparams.n_trees = hp.at("n_trees").get<int>();
    if (!hp.at("max_depth").is_null()) m.hyperparams.max_depth = hp.at("max_depth").get<int>();
    m.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
    m.hyperparams.max_features = max_features_from_string(hp.at("max_features").get<std::string>());
    m.hyperparams.seed = hp.at("seed").get<std::uint64_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.classes = j.at("classes").get<std::vector<int>>();
    m.importances = j.at("importances").get<std::vector<double>>();
    for (const auto& t : j.at("trees")) {
      DecisionTree tree;
      tree.n_outputs = t.at("n_outputs").get<int>();
      tree.feature = t.at("feature").get<std::vector<int>>();
      tree.threshold = t.at("threshold").get<std::vector<double>>();
      tree.left = t.at("left").get<std::vector<int>>();
      tree.right = t.at("right").get<std::vector<int>>();
      tree.value = t.at("value").get<std::vector<double>>();
      const auto nodes = tree.feature.size();
      if (tree.threshold.size() != nodes || tree.left.size() != nodes ||
          tree.right.size() != nodes ||
          tree.value.size() != nodes * static_cast<std::size_t>(tree.n_outputs)) {
        throw DataError("model tree arrays have inconsistent lengths");
      }
      for (std::size_t i = 0; i < nodes; ++i) {
        if (tree.feature[i] >= static_cast<int>(m.feature_names.size())) {
          throw DataError("model tree splits on a feature index out of range");
        }
      }
      m.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  return m;
}

}  // namespace vqoe
