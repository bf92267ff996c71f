#include "vqoe/selection.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include "json.hpp"
#include "vqoe/metrics.hpp"
#include "vqoe/types.hpp"

namespace vqoe {

using nlohmann::json;

std::vector<int> group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed) {
  std::vector<std::string> distinct(groups.begin(), groups.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k < 2) throw DataError("cross-validation needs at least 2 folds");
  if (static_cast<std::size_t>(k) > distinct.size()) {
    throw DataError(std::to_string(k) + " folds requested but only " +
                    std::to_string(distinct.size()) + " groups exist");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(distinct.begin(), distinct.end(), rng);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < distinct.size(); ++i) fold_of[distinct[i]] = static_cast<int>(i % k);
  std::vector<int> folds;
  folds.reserve(groups.size());
  for (const auto& g : groups) folds.push_back(fold_of.at(g));
  return folds;
}

double cross_validate(const Dataset& data, ModelKind kind, const Hyperparams& hp,
                      const std::vector<int>& folds, Execution exec) {
  const int k = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
  double total = 0.0;
  int used = 0;
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train_rows, valid_rows;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      (folds[i] == f ? valid_rows : train_rows).push_back(i);
    }
    if (valid_rows.empty()) continue;
    const Dataset tr = data.subset(train_rows);
    const Dataset va = data.subset(valid_rows);
    const auto model = train(tr, kind, hp, exec);
    if (kind == ModelKind::kRegressor) {
      const auto pred = model.predict_values(va.feature_names, va.features, exec);
      total += r2_score(pred, va.targets);
    } else {
      const auto pred = model.predict_classes(va.feature_names, va.features, exec);
      std::vector<int> p, t;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        p.push_back(pred[i].label);
        t.push_back(static_cast<int>(va.targets[i]));
      }
      total += weighted_f1(p, t);
    }
    ++used;
  }
  return used ? total / used : 0.0;
}

HyperparamGrid HyperparamGrid::defaults(ModelKind kind) {
  HyperparamGrid g;
  g.n_trees = {50, 100, 200};
  g.max_depth = {8, 16, std::nullopt};
  g.min_samples_leaf = {1, 5};
  g.max_features = {kind == ModelKind::kClassifier ? MaxFeatures::kSqrt : MaxFeatures::kThird};
  return g;
}

HyperparamGrid HyperparamGrid::from_json(std::istream& in, ModelKind kind) {
  HyperparamGrid g = defaults(kind);
  try {
    const json j = json::parse(in);
    if (j.contains("n_trees")) g.n_trees = j.at("n_trees").get<std::vector<int>>();
    if (j.contains("max_depth")) {
      g.max_depth.clear();
      for (const auto& d : j.at("max_depth")) {
        g.max_depth.push_back(d.is_null() ? std::nullopt : std::optional<int>(d.get<int>()));
      }
    }
    if (j.contains("min_samples_leaf")) {
      g.min_samples_leaf = j.at("min_samples_leaf").get<std::vector<int>>();
    }
    if (j.contains("max_features")) {
      g.max_features.clear();
      for (const auto& m : j.at("max_features")) {
        g.max_features.push_back(max_features_from_string(m.get<std::string>()));
      }
    }
    g.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw DataError(std::string("grid file: ") + e.what());
  }
  return g;
}

std::vector<Hyperparams> HyperparamGrid::points() const {
  std::vector<Hyperparams> out;
  for (int t : n_trees) {
    for (const auto& d : max_depth) {
      for (int l : min_samples_leaf) {
        for (auto m : max_features) out.push_back(Hyperparams{t, d, l, m, seed});
      }
    }
  }
  return out;
}

GridSearchResult grid_search(const Dataset& data, ModelKind kind, const HyperparamGrid& grid,
                             int folds, Execution exec) {
  const auto lattice = grid.points();
  if (lattice.empty()) throw DataError("hyperparameter grid is empty");
  const auto fold_of = group_kfold(data.groups, folds, grid.seed);

  GridSearchResult r;
  auto depth_key = [](const Hyperparams& h) {
    return h.max_depth ? *h.max_depth : std::numeric_limits<int>::max();
  };
  bool have = false;
  for (const auto& hp : lattice) {
    const double score = cross_validate(data, kind, hp, fold_of, exec);
    r.points.push_back({hp, score});
    const bool better =
        !have || score > r.best_score ||
        (score == r.best_score &&
         (hp.n_trees < r.best.n_trees ||
          (hp.n_trees == r.best.n_trees && depth_key(hp) < depth_key(r.best))));
    if (better) {
      r.best = hp;
      r.best_score = score;
      have = true;
    }
  }
  return r;
}

Regime Regime::parse(std::string_view text) {
  if (text == "composite") return composite();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos && colon + 1 < text.size()) {
    const auto kind = text.substr(0, colon);
    std::string svc(text.substr(colon + 1));
    if (kind == "specific") return specific(std::move(svc));
    if (kind == "excluded") return excluded(std::move(svc));
  }
  throw DataError("regime must be specific:<svc>, composite or excluded:<svc>; got '" +
                  std::string(text) + "'");
}

std::string Regime::str() const {
  switch (kind) {
    case Kind::kSpecific:
      return "specific:" + service;
    case Kind::kExcluded:
      return "excluded:" + service;
    case Kind::kComposite:
      break;
  }
  return "composite";
}

bool Regime::admits(const std::string& s) const {
  switch (kind) {
    case Kind::kSpecific:
      return s == service;
    case Kind::kExcluded:
      return s != service;
    case Kind::kComposite:
      break;
  }
  return true;
}

Dataset assemble_regime(const Dataset& pool, const Regime& regime) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pool.rows(); ++i) {
    if (regime.admits(pool.services[i])) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("regime " + regime.str() + " selects no samples");
  return pool.subset(keep);
}

}  // namespace vqoe
