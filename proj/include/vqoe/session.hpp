// Service attribution, video-session boundaries and segment reconstruction.
#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vqoe/types.hpp"

namespace vqoe {

struct ServiceEntry {
  std::string service;
  std::vector<std::string> domain_suffixes;  // lowercase
  std::vector<std::string> server_prefixes;  // IPv4 CIDR ("a.b.c.d/n") or literal string prefix
};

class ServiceMap {
 public:
  ServiceMap() = default;
  // Lowercases suffixes; throws DataError on duplicate service names.
  explicit ServiceMap(std::vector<ServiceEntry> entries);

  static ServiceMap from_json(std::istream& in);
  void to_json(std::ostream& out) const;

  // Name of the service a flow belongs to, or empty when nothing matches.
  // The server name is tried first, then the server address.
  std::string match(std::string_view server_name, std::string_view server_addr) const;

  const std::vector<ServiceEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<ServiceEntry> entries_;
};

struct SegmentDownload {
  double request_ts = 0.0;
  double completion_ts = 0.0;
  std::uint64_t size_bytes = 0;
  FlowKey flow;

  friend bool operator==(const SegmentDownload&, const SegmentDownload&) = default;
};

struct VideoSession {
  std::string id;
  std::string service;
  double start_ts = 0.0;
  double end_ts = 0.0;
  std::vector<std::size_t> flows;         // indices into the labeled flow collection
  std::vector<SegmentDownload> segments;  // sorted by request_ts
};

struct DetectionParams {
  double spike_bps = 1e6;
  double silence_gap = 30.0;
  double collection_bin = 5.0;
  std::uint32_t quic_request_threshold = 150;
  std::uint64_t video_payload_threshold = 1'000'000;
};

// Labels flows in place: matched flows get their service, and within a service
// flows with more than video_payload_threshold downstream payload bytes are
// video; everything unmatched is other.
void classify_flows(std::span<FlowRecord> flows, const ServiceMap& map,
                    std::uint64_t video_payload_threshold = DetectionParams{}.video_payload_threshold);

// Splits one video flow into request/response exchanges. Every upstream
// packet carrying payload opens a request (over UDP only payloads above
// quic_request_threshold count); downstream payload goes to the latest open
// request.
std::vector<SegmentDownload> detect_segments(const FlowRecord& flow,
                                             std::uint32_t quic_request_threshold = 150);

// Finds sessions per service from the aggregate video downstream rate and
// attaches the segments whose request falls inside each session.
std::vector<VideoSession> detect_sessions(std::span<const FlowRecord> flows,
                                          const DetectionParams& params = {});

// Segments of the service's video flows with request_ts in [start, end].
std::vector<SegmentDownload> collect_segments(std::span<const FlowRecord> flows,
                                              const std::string& service, double start,
                                              double end, std::uint32_t quic_request_threshold);

// Indices of the service's flows that overlap [start, end].
std::vector<std::size_t> session_flows(std::span<const FlowRecord> flows,
                                       const std::string& service, double start, double end);

void write_sessions(std::ostream& out, std::span<const VideoSession> sessions,
                    std::span<const FlowRecord> flows);
std::vector<VideoSession> read_sessions(std::istream& in);

}  // namespace vqoe
