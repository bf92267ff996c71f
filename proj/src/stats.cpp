#include "vqoe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace vqoe {

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

SummaryStats summarize(std::span<const double> values, bool extended) {
  SummaryStats s;
  if (values.empty()) return s;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());

  double sum = 0.0;
  for (double v : sorted) sum += v;
  s.mean = sum / n;

  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (double v : sorted) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  s.min = sorted.front();
  s.max = sorted.back();
  s.std = std::sqrt(m2);
  s.p50 = percentile_sorted(sorted, 0.50);
  s.p75 = percentile_sorted(sorted, 0.75);
  s.p85 = percentile_sorted(sorted, 0.85);
  s.p90 = percentile_sorted(sorted, 0.90);
  if (extended) {
    s.median = s.p50;
    // Constant input (up to rounding of the mean) has no shape.
    if (s.max > s.min && m2 > 0.0) {
      s.skewness = m3 / std::pow(m2, 1.5);
      s.kurtosis = m4 / (m2 * m2) - 3.0;
    }
  }
  return s;
}

}  // namespace vqoe
