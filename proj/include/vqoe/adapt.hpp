// Training-set augmentation that emulates start-time uncertainty: each
// session is re-featurized with its start moved over a grid of offsets.
#pragma once

#include <span>
#include <vector>

#include "vqoe/features.hpp"
#include "vqoe/session.hpp"

namespace vqoe {

struct AdaptParams {
  double max_offset = 5.0;
  double step = 0.5;
  double window_seconds = 10.0;
  std::uint32_t quic_request_threshold = 150;
};

// -max_offset, ..., 0, ..., +max_offset in `step` increments (21 by default).
std::vector<double> adapt_offsets(const AdaptParams& p = {});

// Copy of `session` whose start moved by `offset`, with segments
// re-collected from the raw flows for the new bounds.
VideoSession shift_session(const VideoSession& session, std::span<const FlowRecord> flows,
                           double offset, std::uint32_t quic_request_threshold = 150);

struct AdaptedStartup {
  std::vector<double> offsets;
  std::vector<FeatureVector> vectors;  // aligned with offsets
  std::vector<double> skipped;         // offsets whose window left the trace
};

// Startup-window vectors for every offset; they all share the session's
// startup-delay label.
AdaptedStartup domain_adapt(const VideoSession& session, std::span<const FlowRecord> flows,
                            LayerSet layers, const AdaptParams& p = {});

struct AdaptedBin {
  double offset = 0.0;
  int bin = 0;
  int label = 0;
  FeatureVector vector;
};

// Per-bin variant: bins follow the shifted start and each inherits the
// ground-truth label of the original bin holding its midpoint.
std::vector<AdaptedBin> domain_adapt_bins(const VideoSession& session,
                                          std::span<const FlowRecord> flows, LayerSet layers,
                                          std::span<const int> bin_labels,
                                          double bin_seconds = 10.0, const AdaptParams& p = {});

}  // namespace vqoe
