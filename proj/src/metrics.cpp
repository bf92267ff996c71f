#include "vqoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vqoe/forest.hpp"
#include "vqoe/stats.hpp"
#include "vqoe/types.hpp"

namespace vqoe {

using nlohmann::json;

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DataError("prediction and truth lengths differ (" + std::to_string(a) + " vs " +
                    std::to_string(b) + ")");
  }
  if (a == 0) throw DataError("metrics need at least one sample");
}

double safe_div(double num, double den, double if_zero) { return den > 0.0 ? num / den : if_zero; }

// Exact one-vs-rest ranking metrics for one class from its scores.
struct RankMetrics {
  double average_precision = 0.0;
  double roc_auc = 0.0;
};

RankMetrics rank_metrics(std::vector<std::pair<double, bool>> scored) {
  RankMetrics r;
  const auto pos = static_cast<double>(
      std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.second; }));
  const double neg = static_cast<double>(scored.size()) - pos;
  if (pos == 0.0) return r;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double tp = 0.0, fp = 0.0, prev_tpr = 0.0, prev_fpr = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) {
      (scored[j].second ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / pos;
    const double precision = tp / (tp + fp);
    r.average_precision += (recall - prev_recall) * precision;
    prev_recall = recall;
    const double tpr = recall;
    const double fpr = safe_div(fp, neg, 0.0);
    r.roc_auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
    i = j;
  }
  if (neg == 0.0) r.roc_auc = 1.0;
  return r;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred.size(), truth.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double r2_score(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred.size(), truth.size());
  const double mean =
      std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (tot == 0.0) return res == 0.0 ? 1.0 : 0.0;
  return 1.0 - res / tot;
}

RegressionReport regression_report(std::span<const double> pred, std::span<const double> truth,
                                   double bin_width) {
  RegressionReport r;
  r.rmse = rmse(pred, truth);
  r.samples = pred.size();
  std::vector<std::vector<double>> errs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto b = static_cast<std::size_t>(std::max(0.0, std::floor(truth[i] / bin_width)));
    if (errs.size() <= b) errs.resize(b + 1);
    errs[b].push_back(pred[i] - truth[i]);
  }
  for (std::size_t b = 0; b < errs.size(); ++b) {
    ErrorBin e;
    e.lo = static_cast<double>(b) * bin_width;
    e.hi = e.lo + bin_width;
    e.count = errs[b].size();
    if (!errs[b].empty()) {
      std::sort(errs[b].begin(), errs[b].end());
      e.mean = std::accumulate(errs[b].begin(), errs[b].end(), 0.0) / static_cast<double>(e.count);
      e.min = errs[b].front();
      e.max = errs[b].back();
      e.p25 = percentile_sorted(errs[b], 0.25);
      e.p50 = percentile_sorted(errs[b], 0.50);
      e.p75 = percentile_sorted(errs[b], 0.75);
    }
    r.bins.push_back(e);
  }
  return r;
}

double weighted_f1(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred.size(), truth.size());
  std::vector<int> labels(truth.begin(), truth.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  double total = 0.0;
  for (int c : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == c, t = truth[i] == c;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    const double precision = safe_div(tp, tp + fp, 0.0);
    const double recall = safe_div(tp, tp + fn, 0.0);
    const double f1 = safe_div(2.0 * precision * recall, precision + recall, 0.0);
    total += f1 * (tp + fn);
  }
  return total / static_cast<double>(truth.size());
}

ClassificationReport classification_report(const std::vector<std::vector<double>>& probs,
                                           std::span<const int> truth,
                                           std::span<const int> ladder) {
  check_lengths(probs.size(), truth.size());
  const std::size_t k = ladder.size();
  const std::size_t n = truth.size();
  ClassificationReport r;
  r.ladder.assign(ladder.begin(), ladder.end());
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));

  std::vector<std::size_t> t_idx(n), p_idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = std::find(ladder.begin(), ladder.end(), truth[i]);
    if (it == ladder.end()) throw DataError("unknown class " + std::to_string(truth[i]) + " in truth");
    t_idx[i] = static_cast<std::size_t>(it - ladder.begin());
    if (probs[i].size() != k) throw DataError("probability row has the wrong number of classes");
    const double s = std::accumulate(probs[i].begin(), probs[i].end(), 0.0);
    if (std::abs(s - 1.0) > 1e-6) throw DataError("probability row does not sum to 1");
    p_idx[i] = argmax_low_tie(probs[i]);
    r.confusion[t_idx[i]][p_idx[i]] += 1;
    if (p_idx[i] != t_idx[i]) {
      r.step_errors[static_cast<int>(p_idx[i]) - static_cast<int>(t_idx[i])] += 1;
    }
  }

  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) correct += r.confusion[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.label = ladder[c];
    double tp = static_cast<double>(r.confusion[c][c]), fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(r.confusion[o][c]);
      fn += static_cast<double>(r.confusion[c][o]);
    }
    m.support = r.confusion[c].empty()
                    ? 0
                    : std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
    const double negatives = static_cast<double>(n - m.support);
    m.precision = safe_div(tp, tp + fp, 0.0);
    m.recall = safe_div(tp, tp + fn, 0.0);
    m.fpr = safe_div(fp, negatives, 0.0);
    m.f1 = safe_div(2 * m.precision * m.recall, m.precision + m.recall, 0.0);
    std::vector<std::pair<double, bool>> scored(n);
    for (std::size_t i = 0; i < n; ++i) scored[i] = {probs[i][c], t_idx[i] == c};
    const auto rm = rank_metrics(std::move(scored));
    m.average_precision = rm.average_precision;
    m.roc_auc = rm.roc_auc;

    const double w = static_cast<double>(m.support) / static_cast<double>(n);
    r.precision += w * m.precision;
    r.recall += w * m.recall;
    r.fpr += w * m.fpr;
    r.f1 += w * m.f1;
    r.average_precision += w * m.average_precision;
    r.roc_auc += w * m.roc_auc;
    r.per_class.push_back(m);
  }

  // Threshold sweep shared by every class: +inf, 1.00, 0.99, ..., 0.00.
  std::vector<double> thresholds = {INFINITY};
  for (int j = 100; j >= 0; --j) thresholds.push_back(j / 100.0);
  for (double t : thresholds) {
    CurvePoint pt;
    pt.threshold = t;
    for (std::size_t c = 0; c < k; ++c) {
      const double support = static_cast<double>(r.per_class[c].support);
      if (support == 0.0) continue;
      double tp = 0, fp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (probs[i][c] >= t) (t_idx[i] == c ? tp : fp) += 1.0;
      }
      const double w = support / static_cast<double>(n);
      const double negatives = static_cast<double>(n) - support;
      pt.tpr += w * tp / support;
      pt.fpr += w * (negatives > 0 ? fp / negatives : (t <= 0.0 ? 1.0 : 0.0));
      pt.precision += w * safe_div(tp, tp + fp, 1.0);
    }
    r.roc.push_back(pt);
  }
  r.pr = r.roc;
  std::stable_sort(r.pr.begin(), r.pr.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.tpr < b.tpr; });
  return r;
}

json to_json(const RegressionReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean", b.mean},
                    {"min", b.min}, {"p25", b.p25}, {"p50", b.p50}, {"p75", b.p75},
                    {"max", b.max}});
  }
  return {{"rmse", r.rmse}, {"samples", r.samples}, {"error_bins", bins}};
}

json to_json(const ClassificationReport& r) {
  json per = json::array();
  for (const auto& m : r.per_class) {
    per.push_back({{"label", m.label}, {"support", m.support}, {"precision", m.precision},
                   {"recall", m.recall}, {"fpr", m.fpr}, {"f1", m.f1},
                   {"average_precision", m.average_precision}, {"roc_auc", m.roc_auc}});
  }
  auto curve = [](const std::vector<CurvePoint>& pts) {
    json c = json::array();
    for (const auto& p : pts) {
      c.push_back({{"threshold", std::isinf(p.threshold) ? json("inf") : json(p.threshold)},
                   {"fpr", p.fpr}, {"tpr", p.tpr}, {"precision", p.precision}});
    }
    return c;
  };
  json steps = json::object();
  for (const auto& [d, c] : r.step_errors) steps[std::to_string(d)] = c;
  return {{"ladder", r.ladder},
          {"weighted", {{"precision", r.precision}, {"recall", r.recall}, {"fpr", r.fpr},
                        {"f1", r.f1}, {"average_precision", r.average_precision},
                        {"roc_auc", r.roc_auc}}},
          {"accuracy", r.accuracy},
          {"per_class", per},
          {"confusion", r.confusion},
          {"roc", curve(r.roc)},
          {"pr", curve(r.pr)},
          {"step_errors", steps}};
}

}  // namespace vqoe
