// Summary statistics used by every feature layer.
#pragma once

#include <array>
#include <span>
#include <string_view>

namespace vqoe {

struct SummaryStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double std = 0.0;  // population
  double p50 = 0.0;
  double p75 = 0.0;
  double p85 = 0.0;
  double p90 = 0.0;
  // Extended fields, filled only when requested.
  double median = 0.0;
  double kurtosis = 0.0;  // excess (Fisher)
  double skewness = 0.0;
};

inline constexpr std::array<std::string_view, 8> kBasicStatNames = {
    "min", "mean", "max", "std", "p50", "p75", "p85", "p90"};
inline constexpr std::array<std::string_view, 11> kExtendedStatNames = {
    "min", "mean", "max", "std", "p50", "p75", "p85", "p90", "median", "kurt", "skew"};

// Empty input yields all zeros. Percentiles interpolate linearly between
// closest ranks. Skewness and kurtosis are 0 for constant input.
SummaryStats summarize(std::span<const double> values, bool extended = false);

// Linear-interpolation percentile of already sorted data, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

// Appends the 8 (or 11 when extended) fields in the order of the name arrays.
template <typename Out>
void append_stats(const SummaryStats& s, bool extended, Out& out) {
  out.insert(out.end(), {s.min, s.mean, s.max, s.std, s.p50, s.p75, s.p85, s.p90});
  if (extended) out.insert(out.end(), {s.median, s.kurtosis, s.skewness});
}

}  // namespace vqoe
