// Regression and multi-class evaluation metrics.
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace vqoe {

// Throws DataError on empty input or length mismatch.
double rmse(std::span<const double> pred, std::span<const double> truth);
double r2_score(std::span<const double> pred, std::span<const double> truth);

struct ErrorBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  // Distribution of (pred - truth) for samples whose truth lies in [lo, hi).
  double mean = 0.0;
  double min = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double max = 0.0;
};

struct RegressionReport {
  double rmse = 0.0;
  std::size_t samples = 0;
  std::vector<ErrorBin> bins;  // edges 0, 2, 4, ...
};

RegressionReport regression_report(std::span<const double> pred, std::span<const double> truth,
                                   double bin_width = 2.0);

struct CurvePoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;  // = recall
  double precision = 0.0;
};

struct ClassMetrics {
  int label = 0;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  double average_precision = 0.0;
  double roc_auc = 0.0;
};

struct ClassificationReport {
  std::vector<int> ladder;
  std::vector<ClassMetrics> per_class;
  // Support-weighted averages over classes.
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  double average_precision = 0.0;
  double roc_auc = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][pred]
  std::vector<CurvePoint> roc;  // weighted one-vs-rest, ascending FPR, (0,0) to (1,1)
  std::vector<CurvePoint> pr;   // same sweep, ordered by recall
  std::map<int, std::size_t> step_errors;  // ladder index(pred) - index(truth), misclassified only
};

// `probs` rows are aligned with `ladder` and must sum to 1. Predictions are
// argmax with ties to the lower resolution. Unknown truth labels throw.
ClassificationReport classification_report(const std::vector<std::vector<double>>& probs,
                                           std::span<const int> truth,
                                           std::span<const int> ladder);

// Support-weighted F1 of hard predictions; labels absent from both lists
// contribute nothing.
double weighted_f1(std::span<const int> pred, std::span<const int> truth);

nlohmann::json to_json(const RegressionReport& r);
nlohmann::json to_json(const ClassificationReport& r);

}  // namespace vqoe
