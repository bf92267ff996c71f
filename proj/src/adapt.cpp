#include "vqoe/adapt.hpp"

#include <algorithm>
#include <cmath>

namespace vqoe {

std::vector<double> adapt_offsets(const AdaptParams& p) {
  const auto steps = static_cast<int>(std::llround(p.max_offset / p.step));
  std::vector<double> out;
  for (int k = -steps; k <= steps; ++k) out.push_back(k * p.step);
  return out;
}

VideoSession shift_session(const VideoSession& session, std::span<const FlowRecord> flows,
                           double offset, std::uint32_t quic_request_threshold) {
  VideoSession s = session;
  s.start_ts = session.start_ts + offset;
  s.flows = session_flows(flows, s.service, s.start_ts, s.end_ts);
  s.segments = collect_segments(flows, s.service, s.start_ts, s.end_ts, quic_request_threshold);
  return s;
}

namespace {

double trace_end(std::span<const FlowRecord> flows) {
  double end = 0.0;
  for (const auto& f : flows) end = std::max(end, f.last_ts);
  return end;
}

}  // namespace

AdaptedStartup domain_adapt(const VideoSession& session, std::span<const FlowRecord> flows,
                            LayerSet layers, const AdaptParams& p) {
  AdaptedStartup out;
  const double last = trace_end(flows);
  for (double off : adapt_offsets(p)) {
    const double start = session.start_ts + off;
    if (start < 0.0 || start + p.window_seconds > last ||
        start + p.window_seconds > session.end_ts) {
      out.skipped.push_back(off);
      continue;
    }
    const auto shifted = shift_session(session, flows, off, p.quic_request_threshold);
    out.offsets.push_back(off);
    out.vectors.push_back(SessionFeatures(shifted, flows).startup(layers, p.window_seconds));
  }
  return out;
}

std::vector<AdaptedBin> domain_adapt_bins(const VideoSession& session,
                                          std::span<const FlowRecord> flows, LayerSet layers,
                                          std::span<const int> bin_labels, double bin_seconds,
                                          const AdaptParams& p) {
  std::vector<AdaptedBin> out;
  for (double off : adapt_offsets(p)) {
    if (session.start_ts + off < 0.0) continue;
    const auto shifted = shift_session(session, flows, off, p.quic_request_threshold);
    const auto vecs = SessionFeatures(shifted, flows).bins(layers, bin_seconds);
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      const double mid = off + (static_cast<double>(i) + 0.5) * bin_seconds;
      const auto j = static_cast<long>(std::floor(mid / bin_seconds));
      if (j < 0 || j >= static_cast<long>(bin_labels.size())) continue;
      out.push_back({off, static_cast<int>(i), bin_labels[static_cast<std::size_t>(j)], vecs[i]});
    }
  }
  return out;
}

}  // namespace vqoe
