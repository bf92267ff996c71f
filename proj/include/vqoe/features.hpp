// Network, transport and application feature layers over time windows.
//
// Every feature vector is tied to a layer set; its column names come from
// feature_names(layer_set) and never depend on the data, so models can rely
// on column identity across sessions and runs.
#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vqoe/session.hpp"
#include "vqoe/stats.hpp"
#include "vqoe/types.hpp"

namespace vqoe {

enum class LayerSet : std::uint8_t { kNet, kTran, kApp, kNetTran, kNetApp, kAll };
enum class Window : std::uint8_t { kStartup, kBin };

std::string_view to_string(LayerSet l);
LayerSet layer_set_from_string(std::string_view s);  // "net", "net+app", ...
bool has_network(LayerSet l);
bool has_transport(LayerSet l);
bool has_app(LayerSet l);

const std::vector<std::string>& network_feature_names();
const std::vector<std::string>& transport_feature_names();
const std::vector<std::string>& app_feature_names();
// Concatenation net, tran, app restricted to the layers in the set.
const std::vector<std::string>& feature_names(LayerSet l);

struct FeatureConfig {
  double idle_gap = 1.0;         // inter-packet gaps above this count as idle time
  double goodput_interval = 1.0; // goodput is sampled per sub-interval of this length
};

struct TimeBin {
  std::string service;
  double session_start = 0.0;
  int index = 0;
  double start_ts = 0.0;
  double end_ts = 0.0;
  double duration() const { return end_ts - start_ts; }
};

struct FeatureVector {
  LayerSet layer_set = LayerSet::kAll;
  Window window = Window::kBin;
  std::vector<double> values;

  const std::vector<std::string>& names() const { return feature_names(layer_set); }
};

// Per-packet transport annotations for one TCP flow. Sequence state depends
// on the whole flow history, so it is computed once and windowed afterwards.
struct TcpFlowAnalysis {
  const FlowRecord* flow = nullptr;
  std::vector<std::uint8_t> retransmission;  // per packet
  std::vector<std::uint8_t> out_of_order;    // per packet
  std::vector<double> in_flight;             // per packet, NaN when not sampled
  std::vector<double> rtt;                   // per packet, NaN when no sample ends here
  std::vector<double> gap_before;            // per packet, gap to the previous packet in the same direction, NaN for the first
};

// Throws DataError when the flow is not TCP.
TcpFlowAnalysis analyze_tcp_flow(const FlowRecord& flow);

// Video down throughput (bits/s of payload) of a window; feeds the next
// window's throughput-difference feature.
double video_down_throughput(const TimeBin& bin, std::span<const FlowRecord> flows);

FeatureVector network_features(const TimeBin& bin, std::span<const FlowRecord> flows,
                               double prev_bin_video_down_tput);
FeatureVector transport_features(const TimeBin& bin, std::span<const FlowRecord> video_flows,
                                 const FeatureConfig& cfg = {});
FeatureVector transport_features(const TimeBin& bin, std::span<const TcpFlowAnalysis> analyses,
                                 const FeatureConfig& cfg = {});
FeatureVector app_features(const TimeBin& bin, std::span<const SegmentDownload> segments);

// Computes feature windows for one session. Flow analyses are cached so that
// many windows over the same session stay linear in its packet count.
class SessionFeatures {
 public:
  // `flows` is the full labeled trace; the session's flows and segments are
  // taken from `session`.
  SessionFeatures(const VideoSession& session, std::span<const FlowRecord> flows,
                  FeatureConfig cfg = {});

  FeatureVector window(int index, double start, double end, double prev_video_down_tput,
                       LayerSet layers, Window kind) const;
  FeatureVector startup(LayerSet layers, double window_seconds = 10.0) const;
  std::vector<FeatureVector> bins(LayerSet layers, double bin_seconds = 10.0) const;

  const VideoSession& session() const { return session_; }

 private:
  TimeBin make_bin(int index, double start, double end) const;

  VideoSession session_;
  std::span<const FlowRecord> flows_;
  FeatureConfig cfg_;
  std::vector<FlowRecord> video_flows_;
  std::vector<TcpFlowAnalysis> tcp_;
  bool all_tcp_ = true;
};

// Single window [start, start + 10 s). Throws DataError when the session is
// shorter than the window.
FeatureVector startup_features(const VideoSession& session, std::span<const FlowRecord> flows,
                               LayerSet layers);
// Tiles the session with bins of bin_seconds; a partial trailing bin is dropped.
std::vector<FeatureVector> bin_features(const VideoSession& session,
                                        std::span<const FlowRecord> flows, LayerSet layers,
                                        double bin_seconds = 10.0);

// Picks the columns of `to` out of a vector computed for a superset.
FeatureVector project(const FeatureVector& v, LayerSet to);

// CSV with a header of feature names; one row per vector.
struct FeatureRowInfo {
  std::string session_id;
  std::string service;
  int bin = 0;
  double offset = 0.0;    // start-time shift applied by augmentation
  double start_ts = 0.0;  // window start
};

struct FeatureTable {
  LayerSet layer_set = LayerSet::kAll;
  Window window = Window::kBin;
  double bin_seconds = 10.0;
  std::vector<FeatureRowInfo> rows;
  std::vector<std::vector<double>> values;
};

void write_feature_csv(std::ostream& out, const FeatureTable& table);
void write_feature_manifest(std::ostream& out, const FeatureTable& table);
// Reads the CSV plus its sidecar manifest; checks the header against the
// manifest's layer set.
FeatureTable read_feature_table(std::istream& csv, std::istream& manifest);

}  // namespace vqoe
