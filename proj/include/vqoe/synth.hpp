// Synthetic DASH sessions: a client with a playback buffer and an ABR rule
// downloads segments through a bottleneck link, and the packets it would put
// on the wire are emitted together with labels taken from the simulator state.
#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "vqoe/types.hpp"

namespace vqoe {

struct Rung {
  int resolution = 240;
  double bitrate_bps = 0.0;
};

enum class AbrPolicy : std::uint8_t { kThroughputBased, kBufferBased };

struct ServiceProfile {
  std::string name;
  double segment_duration = 4.0;
  std::vector<double> duration_choices;  // non-empty: per-segment duration drawn from these
  std::vector<Rung> ladder;              // ascending resolution and bitrate
  double startup_buffer_threshold = 8.0; // seconds of video buffered before playback
  double max_buffer = 60.0;              // downloads pause above this many seconds
  AbrPolicy abr_policy = AbrPolicy::kThroughputBased;
  double abr_safety = 0.9;
  double ewma_weight = 0.5;              // weight of the newest throughput sample
  double audio_segment_duration = 0.0;   // 0 = audio muxed with video
  double audio_bitrate_bps = 128'000.0;
  Transport video_transport = Transport::kTcp;
  std::string video_domain;
  std::string page_domain;
  std::string server_subnet;             // e.g. "203.0.113." (host part appended)
  double page_bytes = 250'000.0;
  double manifest_bytes = 40'000.0;
  double telemetry_interval = 15.0;
  double telemetry_bytes = 4'000.0;

  void validate() const;
  double bitrate(int resolution) const;
};

struct NetworkConditions {
  double capacity_bps = 10e6;
  double base_rtt = 0.02;
  double extra_latency = 0.0;  // added to the round trip
  double loss_rate = 0.0;
  // (seconds after session start, capacity) steps applied in order.
  std::vector<std::pair<double, double>> schedule;

  double rtt() const { return base_rtt + extra_latency; }
  double capacity_at(double since_start) const;
};

struct SynthConfig {
  ServiceProfile profile;
  NetworkConditions network;
  double session_length = 120.0;
  double lead_in = 8.0;  // cross traffic only, before the session starts
  double tail = 2.0;
  double cross_traffic_rate = 0.0;
  double size_sigma = 0.2;   // lognormal content variation of segment sizes
  double max_startup = 30.0; // sessions that take longer to start are rejected
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct GroundTruthLabel {
  std::string session_id;
  std::string service;
  double start_ts = 0.0;
  double end_ts = 0.0;
  double startup_delay = 0.0;
  std::vector<int> bin_resolution;  // per 10 s bin from start_ts
};

// One request/response exchange as the simulator produced it. These are the
// units segment detection should recover.
struct SynthExchange {
  enum class Kind : std::uint8_t { kHandshake, kPage, kManifest, kVideo, kAudio, kTelemetry };
  Kind kind = Kind::kVideo;
  FlowKey flow;
  double request_ts = 0.0;
  double completion_ts = 0.0;
  std::uint64_t bytes = 0;
  int resolution = 0;  // video only
};

struct AbrDecision {
  double time = 0.0;
  int resolution = 0;
  double bitrate_bps = 0.0;
  double estimate_bps = 0.0;  // throughput estimate the choice was based on (0 for the first)
  double capacity_bps = 0.0;  // link capacity for video at decision time
};

struct SynthSession {
  std::vector<PacketEvent> events;  // time ordered
  GroundTruthLabel label;
  std::vector<SynthExchange> exchanges;
  std::vector<AbrDecision> decisions;
  double playback_start = 0.0;
};

// Thrown when playback would not start within max_startup.
class SessionRejected : public DataError {
 public:
  using DataError::DataError;
};

SynthSession generate_session(const SynthConfig& cfg, const std::string& session_id = "s0");

// Built-in services: "movie", "shortvideo", "live", "vod".
std::vector<ServiceProfile> builtin_profiles();
ServiceProfile builtin_profile(std::string_view name);

// Per-session randomization of network conditions for corpus generation.
struct ConditionRanges {
  double capacity_min = 50e3, capacity_max = 30e6;  // log-uniform
  double loss_min = 0.0, loss_max = 0.01;
  double latency_min = 0.0, latency_max = 0.03;
  double base_rtt_min = 0.01, base_rtt_max = 0.04;
  double length_min = 90.0, length_max = 150.0;
  double lead_in_min = 6.0, lead_in_max = 15.0;
  double cross_min = 0.0, cross_max = 200e3;
  double change_probability = 0.25;  // chance of one mid-session capacity step
};

struct CorpusProfile {
  SynthConfig base;
  std::optional<ConditionRanges> vary;
};

// Draws the network conditions of one session from the ranges.
SynthConfig sample_config(const CorpusProfile& p, std::mt19937_64& rng);

struct CorpusEntry {
  std::string session_id;
  std::size_t profile = 0;
  SynthConfig config;  // fully resolved, seed included
  int rejected_attempts = 0;
};

// Session k of profile p: samples conditions and generates, retrying with a
// fresh draw while playback fails to start or the video flow carries too
// little data to be told apart from page traffic. Independent of every other entry.
std::pair<CorpusEntry, SynthSession> generate_entry(const std::vector<CorpusProfile>& profiles,
                                                    std::size_t p, int k, std::uint64_t seed);

// Samples and generates n sessions per profile. Rejected draws are retried
// with the next seed. `emit` receives every accepted session.
std::vector<CorpusEntry> plan_and_generate(
    const std::vector<CorpusProfile>& profiles, int n_per_profile, std::uint64_t seed,
    const std::function<void(const CorpusEntry&, SynthSession&)>& emit);

// Writes <dir>/traces/<id>.jsonl, <dir>/labels.jsonl and <dir>/manifest.json.
std::vector<CorpusEntry> generate_corpus(const std::vector<CorpusProfile>& profiles,
                                         int n_per_profile, std::uint64_t seed,
                                         const std::filesystem::path& dir);
// Rebuilds a corpus from the configs recorded in a manifest.
void regenerate_corpus(const std::filesystem::path& manifest, const std::filesystem::path& dir);

nlohmann::json to_json(const ServiceProfile& p);
ServiceProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetworkConditions& n);
NetworkConditions network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& c);
SynthConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConditionRanges& r);
ConditionRanges ranges_from_json(const nlohmann::json& j);

// Synth config file: {"seed": 1, "n": 10, "profiles": [{"service": "movie" or
// {...profile...}, "network": {...}, "ranges": {...} or true, ...}]}.
struct SynthPlan {
  std::vector<CorpusProfile> profiles;
  int n_per_profile = 10;
  std::uint64_t seed = 1;
};
SynthPlan synth_plan_from_json(std::istream& in);

// Labels JSONL: {session_id, service, start_ts, end_ts, startup_delay, bins: [{i, res}]}.
void write_labels(std::ostream& out, const std::vector<GroundTruthLabel>& labels);
std::string label_to_json_line(const GroundTruthLabel& l);
std::vector<GroundTruthLabel> read_labels(std::istream& in);

}  // namespace vqoe
