#include "vqoe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>

#include "vqoe/ingest.hpp"
#include "vqoe/session.hpp"

namespace vqoe {

using nlohmann::json;

namespace {

constexpr std::uint32_t kTcpMss = 1448;
constexpr std::uint32_t kQuicMss = 1350;
constexpr std::uint32_t kTcpOverhead = 52;
constexpr std::uint32_t kUdpOverhead = 28;
constexpr std::uint32_t kQuicAckPayload = 35;
constexpr std::uint32_t kQuicRequestThreshold = 150;
constexpr double kClientThink = 0.002;
constexpr double kServerThink = 0.004;
constexpr double kLabelBin = 10.0;
constexpr int kLabelSamples = 200;
constexpr std::uint64_t kMinVideoBytes = 1'500'000;
const char* const kClientAddr = "10.0.0.2";
const char* const kCrossAddr = "198.51.100.7";

struct SimFlow {
  FlowKey key;
  std::string sni;
  std::uint32_t client_isn = 0;
  std::uint32_t server_isn = 0;
  std::uint64_t client_sent = 0;  // payload bytes sent upstream so far
  std::uint64_t server_sent = 0;  // payload bytes delivered downstream so far
  std::uint32_t client_rwnd = 65535;
  std::uint32_t server_rwnd = 65535;
  bool open = false;
};

struct PlayStretch {
  double wall_start = 0.0;
  double wall_end = std::numeric_limits<double>::infinity();
  double pos_start = 0.0;
};

struct SegmentRecord {
  double pos_start = 0.0;
  double duration = 0.0;
  int resolution = 0;
};

class Simulator {
 public:
  Simulator(const SynthConfig& cfg, std::string id)
      : cfg_(cfg), prof_(cfg.profile), net_(cfg.network), rng_(cfg.rng_seed), id_(std::move(id)) {
    next_port_ = static_cast<std::uint16_t>(40000 + rng_() % 20000);
  }

  SynthSession run();

 private:
  double rtt() const { return net_.rtt(); }

  double video_rate(double t) const {
    const double c = net_.capacity_at(std::max(0.0, t - t0_));
    double rate = std::max(c - cfg_.cross_traffic_rate, 0.25 * c);
    if (net_.loss_rate > 0.0) {
      rate = std::min(rate, 1.22 * kTcpMss * 8.0 / (rtt() * std::sqrt(net_.loss_rate)));
    }
    return rate;
  }

  SimFlow make_flow(const std::string& host, Transport tr, const std::string& sni) {
    SimFlow f;
    f.key = {kClientAddr, next_port_++, prof_.server_subnet + host, 443, tr};
    if (next_port_ < 40000) next_port_ = 40000;
    f.sni = sni;
    f.client_isn = static_cast<std::uint32_t>(rng_());
    f.server_isn = static_cast<std::uint32_t>(rng_());
    f.client_rwnd = static_cast<std::uint32_t>(131072 + rng_() % 131072);
    f.server_rwnd = 65535;
    return f;
  }

  void emit(double t, SimFlow& f, Direction dir, std::uint32_t payload, std::uint8_t flags,
            std::uint64_t rel_seq, bool with_sni = false) {
    PacketEvent e;
    e.ts = quantize_us(t);
    e.flow = f.key;
    e.dir = dir;
    e.payload_bytes = payload;
    if (f.key.transport == Transport::kTcp) {
      e.ip_bytes = payload + kTcpOverhead;
      TcpHeader h;
      h.flags = flags;
      const bool up = dir == Direction::kUp;
      h.seq = static_cast<std::uint32_t>((up ? f.client_isn : f.server_isn) + rel_seq);
      if (flags & tcp_flag::kAck) {
        h.ack_no = static_cast<std::uint32_t>(up ? f.server_isn + 1 + f.server_sent
                                                 : f.client_isn + 1 + f.client_sent);
      }
      h.recv_window = up ? f.client_rwnd : f.server_rwnd;
      e.tcp = h;
    } else {
      e.ip_bytes = payload + kUdpOverhead;
    }
    if (with_sni) e.sni = f.sni;
    events_.push_back(std::move(e));
  }

  // Sends one request and delivers the response through the bottleneck.
  // Returns the time the last response byte reached the client.
  double exchange(SimFlow& f, double t, std::uint32_t request_payload, std::uint64_t bytes,
                  SynthExchange::Kind kind, int resolution = 0, bool with_sni = false) {
    const bool tcp = f.key.transport == Transport::kTcp;
    t = std::max(t, last_request_ + 1e-5);
    emit(t, f, Direction::kUp, request_payload, tcp_flag::kAck | tcp_flag::kPush,
         1 + f.client_sent, with_sni);
    const double request_ts = events_.back().ts;
    last_request_ = t;
    f.client_sent += request_payload;
    const double done = bytes ? deliver(f, t + rtt() + kServerThink, bytes) : t;
    const bool qualifies = tcp ? request_payload > 0 : request_payload > kQuicRequestThreshold;
    if (qualifies) {
      exchanges_.push_back(
          {kind, f.key, request_ts, bytes ? quantize_us(done) : request_ts, bytes, resolution});
    }
    return done;
  }

  double deliver(SimFlow& f, double ready, std::uint64_t bytes) {
    const bool tcp = f.key.transport == Transport::kTcp;
    const std::uint32_t mss = tcp ? kTcpMss : kQuicMss;
    const std::uint32_t overhead = tcp ? kTcpOverhead : kUdpOverhead;
    struct Piece {
      std::uint64_t off;
      std::uint32_t len;
    };
    std::vector<Piece> pieces;
    for (std::uint64_t off = 0; off < bytes; off += mss) {
      pieces.push_back({off, static_cast<std::uint32_t>(std::min<std::uint64_t>(mss, bytes - off))});
    }
    using Pending = std::pair<double, std::size_t>;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> retx;
    std::bernoulli_distribution lose(net_.loss_rate);
    const std::uint64_t base = f.server_sent;
    std::uint64_t in_order = 0;
    std::map<std::uint64_t, std::uint32_t> held;
    std::size_t next = 0;
    int unacked = 0;
    double t = std::max(ready, link_free_);
    double last = t;
    while (next < pieces.size() || !retx.empty()) {
      std::size_t idx;
      if (!retx.empty() && retx.top().first <= t) {
        idx = retx.top().second;
        retx.pop();
      } else if (next < pieces.size()) {
        idx = next++;
      } else {
        t = retx.top().first;
        continue;
      }
      const auto& p = pieces[idx];
      t += (p.len + overhead) * 8.0 / video_rate(t);
      if (net_.loss_rate > 0.0 && lose(rng_)) {
        retx.push({t + rtt(), idx});
        continue;
      }
      const bool expected = p.off == in_order;
      if (expected) {
        in_order += p.len;
        for (auto it = held.begin(); it != held.end() && it->first == in_order; it = held.erase(it)) {
          in_order += it->second;
        }
      } else {
        held.emplace(p.off, p.len);
      }
      const std::uint8_t flags =
          tcp_flag::kAck | (p.off + p.len == bytes ? tcp_flag::kPush : std::uint8_t{0});
      emit(t, f, Direction::kDown, p.len, flags, 1 + base + p.off);
      last = t;
      // The cumulative ACK point only advances over contiguous data.
      f.server_sent = base + in_order;
      if (++unacked >= 2 || !expected || !held.empty()) {
        send_ack(t, f);
        unacked = 0;
      }
    }
    if (unacked) send_ack(last, f);
    f.server_sent = base + bytes;
    link_free_ = last;
    return last;
  }

  // HTTP request sizes vary with URL, cookies and range headers.
  std::uint32_t request_size(std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng_);
  }

  void send_ack(double t, SimFlow& f) {
    if (f.key.transport == Transport::kTcp) {
      emit(t, f, Direction::kUp, 0, tcp_flag::kAck, 1 + f.client_sent);
    } else {
      emit(t, f, Direction::kUp, kQuicAckPayload, 0, 0);
    }
  }

  // Connection setup including the TLS exchange; returns when the client may
  // send its first application request.
  double open(SimFlow& f, double t) {
    f.open = true;
    std::uniform_real_distribution<double> cert(3500.0, 6000.0);
    if (f.key.transport == Transport::kTcp) {
      emit(t, f, Direction::kUp, 0, tcp_flag::kSyn, 0);
      emit(t + rtt(), f, Direction::kDown, 0, tcp_flag::kSyn | tcp_flag::kAck, 0);
      emit(t + rtt() + 1e-5, f, Direction::kUp, 0, tcp_flag::kAck, 1);
      t += rtt() + 1e-4;
      const double hello = exchange(f, t, request_size(480, 640), static_cast<std::uint64_t>(cert(rng_)),
                                    SynthExchange::Kind::kHandshake, 0, true);
      return exchange(f, hello + kClientThink, request_size(60, 110), 0, SynthExchange::Kind::kHandshake) +
             kClientThink;
    }
    const double hello = exchange(f, t, 1200, static_cast<std::uint64_t>(cert(rng_) * 0.7),
                                  SynthExchange::Kind::kHandshake, 0, true);
    emit(hello + kClientThink, f, Direction::kUp, 60, 0, 0);
    return hello + 2 * kClientThink;
  }

  void add_cross_traffic(double end) {
    if (cfg_.cross_traffic_rate <= 0.0) return;
    SimFlow f;
    f.key = {kClientAddr, next_port_++, kCrossAddr, 443, Transport::kTcp};
    f.sni = "cdn.other.example";
    f.client_isn = static_cast<std::uint32_t>(rng_());
    f.server_isn = static_cast<std::uint32_t>(rng_());
    double t = 0.01;
    emit(t, f, Direction::kUp, 0, tcp_flag::kSyn, 0);
    emit(t + 0.03, f, Direction::kDown, 0, tcp_flag::kSyn | tcp_flag::kAck, 0);
    emit(t + 0.03 + 1e-5, f, Direction::kUp, 300, tcp_flag::kAck | tcp_flag::kPush, 1, true);
    f.client_sent = 300;
    std::exponential_distribution<double> gap(cfg_.cross_traffic_rate / ((kTcpMss + kTcpOverhead) * 8.0));
    t += 0.06;
    int unacked = 0;
    while (t < end) {
      emit(t, f, Direction::kDown, kTcpMss, tcp_flag::kAck, 1 + f.server_sent);
      f.server_sent += kTcpMss;
      if (++unacked == 2) {
        emit(t + 1e-5, f, Direction::kUp, 0, tcp_flag::kAck, 1 + f.client_sent);
        unacked = 0;
      }
      t += std::max(gap(rng_), 1e-5);
    }
  }

  // Playback clock.
  void advance(double to) {
    if (to <= clock_) return;
    if (playing_) {
      const double room = downloaded_ - playhead_;
      if (to - clock_ >= room) {
        playhead_ = downloaded_;
        stretches_.back().wall_end = clock_ + room;
        playing_ = false;
      } else {
        playhead_ += to - clock_;
      }
    }
    clock_ = to;
  }

  void start_playing(double t) {
    playing_ = true;
    stretches_.push_back({t, std::numeric_limits<double>::infinity(), playhead_});
  }

  double next_duration() {
    if (prof_.duration_choices.empty()) return prof_.segment_duration;
    std::uniform_int_distribution<std::size_t> pick(0, prof_.duration_choices.size() - 1);
    return prof_.duration_choices[pick(rng_)];
  }

  std::size_t choose_rung(double t) const {
    const auto& ladder = prof_.ladder;
    if (prof_.abr_policy == AbrPolicy::kBufferBased) {
      const double level = downloaded_ - playhead_;
      const double reservoir = 0.2 * prof_.max_buffer;
      const double upper = 0.8 * prof_.max_buffer;
      const double x = (level - reservoir) / (upper - reservoir);
      const auto idx = static_cast<long>(std::floor(x * static_cast<double>(ladder.size() - 1)));
      return static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(ladder.size()) - 1));
    }
    (void)t;
    if (estimate_ <= 0.0) return 0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (ladder[i].bitrate_bps <= prof_.abr_safety * estimate_) best = i;
    }
    return best;
  }

  int resolution_at(double wall) const;
  std::vector<int> bin_labels() const;

  const SynthConfig& cfg_;
  const ServiceProfile& prof_;
  const NetworkConditions& net_;
  std::mt19937_64 rng_;
  std::string id_;
  std::uint16_t next_port_ = 40000;

  std::vector<PacketEvent> events_;
  std::vector<SynthExchange> exchanges_;
  std::vector<AbrDecision> decisions_;
  double t0_ = 0.0;
  double link_free_ = 0.0;
  double last_request_ = -1.0;

  double clock_ = 0.0;
  double playhead_ = 0.0;
  double downloaded_ = 0.0;
  bool playing_ = false;
  bool started_ = false;
  double estimate_ = 0.0;
  std::vector<PlayStretch> stretches_;
  std::vector<SegmentRecord> segments_;
};

int Simulator::resolution_at(double wall) const {
  double pos = 0.0;
  for (const auto& s : stretches_) {
    if (wall < s.wall_start) break;
    if (wall < s.wall_end) {
      pos = s.pos_start + (wall - s.wall_start);
      break;
    }
    pos = s.pos_start + (s.wall_end - s.wall_start);
  }
  // A frozen playhead sits at the end of the segment it last showed.
  const double probe = std::max(0.0, pos - 1e-9);
  int res = segments_.empty() ? prof_.ladder.front().resolution : segments_.front().resolution;
  for (const auto& seg : segments_) {
    if (seg.pos_start > probe) break;
    res = seg.resolution;
  }
  return res;
}

std::vector<int> Simulator::bin_labels() const {
  const int n = static_cast<int>(std::floor(cfg_.session_length / kLabelBin + 1e-9));
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    std::map<int, int> votes;
    for (int j = 0; j < kLabelSamples; ++j) {
      const double w = t0_ + kLabelBin * (i + (j + 0.5) / kLabelSamples);
      ++votes[resolution_at(w)];
    }
    // Map iteration is ascending, so ties go to the lower resolution.
    int best = votes.begin()->first, count = 0;
    for (const auto& [res, c] : votes) {
      if (c > count) {
        best = res;
        count = c;
      }
    }
    out.push_back(best);
  }
  return out;
}

SynthSession Simulator::run() {
  t0_ = quantize_us(cfg_.lead_in);
  const double t_end = t0_ + cfg_.session_length;
  const std::string base_domain = prof_.video_domain.substr(prof_.video_domain.find('.') + 1);
  std::uniform_real_distribution<double> vary(0.6, 1.4);
  const double sigma = cfg_.size_sigma;
  std::lognormal_distribution<double> content(-0.5 * sigma * sigma, sigma);
  std::lognormal_distribution<double> audio_content(-0.125 * sigma * sigma, 0.5 * sigma);

  SimFlow page = make_flow("20", Transport::kTcp, prof_.page_domain);
  SimFlow video = make_flow("10", prof_.video_transport, prof_.video_domain);
  SimFlow audio = make_flow("11", prof_.video_transport, "audio." + base_domain);

  clock_ = t0_;
  link_free_ = t0_;
  double t = open(page, t0_);
  t = exchange(page, t, request_size(400, 1200), static_cast<std::uint64_t>(prof_.page_bytes * vary(rng_)),
               SynthExchange::Kind::kPage) + kClientThink;
  t = open(video, t);
  t = exchange(video, t, request_size(250, 800), static_cast<std::uint64_t>(prof_.manifest_bytes * vary(rng_)),
               SynthExchange::Kind::kManifest) + kClientThink;

  const bool has_audio = prof_.audio_segment_duration > 0.0;
  double audio_buffered = 0.0;
  double start_at = -1.0;
  double next_telemetry = t0_ + prof_.telemetry_interval;
  double pending_duration = next_duration();
  const double resume = std::min(prof_.startup_buffer_threshold, prof_.segment_duration);

  auto after_download = [&](double done) {
    if (!started_ && downloaded_ >= prof_.startup_buffer_threshold - 1e-9 &&
        (!has_audio ||
         audio_buffered >= std::min(prof_.startup_buffer_threshold, prof_.audio_segment_duration) - 1e-9)) {
      started_ = true;
      start_at = done;
      start_playing(done);
    } else if (started_ && !playing_ && downloaded_ - playhead_ >= resume - 1e-9) {
      start_playing(done);
    }
  };

  for (;;) {
    advance(t);
    if (t >= t_end) break;
    if (!started_ && t - t0_ > cfg_.max_startup) break;
    if (next_telemetry <= t) {
      t = exchange(page, t, request_size(300, 1400), static_cast<std::uint64_t>(prof_.telemetry_bytes * vary(rng_)),
                   SynthExchange::Kind::kTelemetry) + kClientThink;
      next_telemetry += prof_.telemetry_interval;
      continue;
    }
    if (has_audio && audio_buffered <= downloaded_ + 1e-9 &&
        audio_buffered - playhead_ < prof_.max_buffer) {
      if (!audio.open) t = open(audio, t);
      const double dur = prof_.audio_segment_duration;
      const auto size = static_cast<std::uint64_t>(
          std::llround(prof_.audio_bitrate_bps * dur / 8.0 * audio_content(rng_)));
      const double done = exchange(audio, t, request_size(250, 800), std::max<std::uint64_t>(size, 1),
                                   SynthExchange::Kind::kAudio);
      advance(done);
      audio_buffered += dur;
      after_download(done);
      t = done + kClientThink;
      continue;
    }
    const double dur = pending_duration;
    if (playing_ && downloaded_ - playhead_ > prof_.max_buffer - dur + 1e-9) {
      const double wake = t + (downloaded_ - playhead_) - (prof_.max_buffer - dur);
      t = std::min(wake, next_telemetry);
      continue;
    }
    const std::size_t rung = choose_rung(t);
    const auto& r = prof_.ladder[rung];
    decisions_.push_back({quantize_us(t), r.resolution, r.bitrate_bps, estimate_, video_rate(t)});
    const auto size = static_cast<std::uint64_t>(
        std::llround(r.bitrate_bps * dur / 8.0 * content(rng_)));
    const double requested = t;
    const double done = exchange(video, t, request_size(250, 800), std::max<std::uint64_t>(size, 1),
                                 SynthExchange::Kind::kVideo, r.resolution);
    advance(done);
    segments_.push_back({downloaded_, dur, r.resolution});
    downloaded_ += dur;
    const double sample = static_cast<double>(size) * 8.0 / std::max(done - requested, 1e-6);
    estimate_ = estimate_ <= 0.0 ? sample
                                 : prof_.ewma_weight * sample + (1.0 - prof_.ewma_weight) * estimate_;
    after_download(done);
    pending_duration = next_duration();
    t = done + kClientThink;
  }

  if (!started_ || start_at - t0_ > cfg_.max_startup) {
    throw SessionRejected("session " + id_ + " did not start playback within " +
                          std::to_string(cfg_.max_startup) + " s");
  }
  advance(std::max(t, t_end));

  double last = t0_;
  for (const auto& e : events_) last = std::max(last, e.ts);
  add_cross_traffic(last + cfg_.tail);
  std::stable_sort(events_.begin(), events_.end(),
                   [](const PacketEvent& a, const PacketEvent& b) { return a.ts < b.ts; });

  SynthSession out;
  out.label.session_id = id_;
  out.label.service = prof_.name;
  out.label.start_ts = t0_;
  out.label.end_ts = quantize_us(t_end);
  out.playback_start = quantize_us(start_at);
  out.label.startup_delay = out.playback_start - t0_;
  out.label.bin_resolution = bin_labels();
  out.events = std::move(events_);
  out.exchanges = std::move(exchanges_);
  out.decisions = std::move(decisions_);
  return out;
}

std::vector<Rung> scaled_ladder(double factor) {
  const int res[] = {240, 360, 480, 720, 1080};
  std::vector<Rung> out;
  double rate = 300e3 * factor;
  for (int r : res) {
    out.push_back({r, std::round(rate)});
    rate *= 2.0;
  }
  return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string session_name(const std::string& service, int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", k);
  return service + "-" + buf;
}

}  // namespace

void ServiceProfile::validate() const {
  if (name.empty()) throw DataError("service profile needs a name");
  if (ladder.empty()) throw DataError("service " + name + ": empty bitrate ladder");
  for (std::size_t i = 1; i < ladder.size(); ++i) {
    if (ladder[i].resolution <= ladder[i - 1].resolution ||
        ladder[i].bitrate_bps <= ladder[i - 1].bitrate_bps) {
      throw DataError("service " + name + ": ladder must ascend in resolution and bitrate");
    }
  }
  if (ladder.front().bitrate_bps <= 0.0) throw DataError("service " + name + ": bitrate must be positive");
  if (segment_duration <= 0.0) throw DataError("service " + name + ": segment duration must be positive");
  for (double d : duration_choices) {
    if (d <= 0.0) throw DataError("service " + name + ": segment durations must be positive");
  }
  if (startup_buffer_threshold <= 0.0 || max_buffer < startup_buffer_threshold) {
    throw DataError("service " + name + ": need 0 < startup threshold <= max buffer");
  }
  const double longest = duration_choices.empty()
                              ? segment_duration
                              : *std::max_element(duration_choices.begin(), duration_choices.end());
  if (max_buffer < longest) throw DataError("service " + name + ": max buffer below one segment");
  if (abr_safety <= 0.0 || ewma_weight <= 0.0 || ewma_weight > 1.0) {
    throw DataError("service " + name + ": invalid ABR parameters");
  }
  if (video_domain.find('.') == std::string::npos) {
    throw DataError("service " + name + ": video domain must have a parent domain");
  }
  if (telemetry_interval <= 0.0) throw DataError("service " + name + ": telemetry interval must be positive");
}

double ServiceProfile::bitrate(int resolution) const {
  for (const auto& r : ladder) {
    if (r.resolution == resolution) return r.bitrate_bps;
  }
  throw DataError("service " + name + " has no " + std::to_string(resolution) + "p rung");
}

double NetworkConditions::capacity_at(double since_start) const {
  double c = capacity_bps;
  for (const auto& [at, cap] : schedule) {
    if (since_start >= at) c = cap;
  }
  return c;
}

void SynthConfig::validate() const {
  profile.validate();
  if (network.capacity_bps <= 0.0) throw DataError("capacity must be positive");
  for (const auto& [at, cap] : network.schedule) {
    if (cap <= 0.0 || at < 0.0) throw DataError("capacity schedule entries must be positive");
  }
  if (network.loss_rate < 0.0 || network.loss_rate >= 0.5) throw DataError("loss rate must be in [0, 0.5)");
  if (network.rtt() <= 0.0) throw DataError("round-trip time must be positive");
  if (session_length < kLabelBin) throw DataError("session must last at least one 10 s bin");
  if (lead_in < 0.0 || tail < 0.0 || cross_traffic_rate < 0.0 || size_sigma < 0.0) {
    throw DataError("lead-in, tail, cross traffic and size sigma must be non-negative");
  }
}

SynthSession generate_session(const SynthConfig& cfg, const std::string& session_id) {
  cfg.validate();
  return Simulator(cfg, session_id).run();
}

std::vector<ServiceProfile> builtin_profiles() {
  std::vector<ServiceProfile> out;

  ServiceProfile movie;
  movie.name = "movie";
  movie.segment_duration = 4.0;
  movie.ladder = scaled_ladder(1.4);
  movie.startup_buffer_threshold = 16.0;
  movie.max_buffer = 60.0;
  movie.audio_segment_duration = 16.0;
  movie.video_domain = "video.movie.example";
  movie.page_domain = "www.movie.example";
  movie.server_subnet = "203.0.113.";
  movie.page_bytes = 300e3;
  movie.manifest_bytes = 60e3;
  out.push_back(movie);

  ServiceProfile shortv;
  shortv.name = "shortvideo";
  shortv.segment_duration = 3.5;
  shortv.duration_choices = {2.0, 3.0, 4.0, 5.0};
  shortv.ladder = scaled_ladder(0.7);
  shortv.startup_buffer_threshold = 2.0;
  shortv.max_buffer = 30.0;
  shortv.video_domain = "media.shortvideo.example";
  shortv.page_domain = "www.shortvideo.example";
  shortv.server_subnet = "192.0.2.";
  shortv.page_bytes = 400e3;
  shortv.manifest_bytes = 8e3;
  shortv.telemetry_interval = 10.0;
  out.push_back(shortv);

  ServiceProfile live;
  live.name = "live";
  live.segment_duration = 2.0;
  live.ladder = scaled_ladder(0.35);
  live.startup_buffer_threshold = 4.0;
  live.max_buffer = 8.0;
  live.video_domain = "edge.live.example";
  live.page_domain = "www.live.example";
  live.server_subnet = "198.18.0.";
  live.page_bytes = 200e3;
  live.manifest_bytes = 5e3;
  live.telemetry_interval = 5.0;
  live.telemetry_bytes = 1500.0;
  out.push_back(live);

  ServiceProfile vod;
  vod.name = "vod";
  vod.segment_duration = 6.0;
  vod.ladder = scaled_ladder(2.8);
  vod.startup_buffer_threshold = 12.0;
  vod.max_buffer = 60.0;
  vod.abr_safety = 0.8;
  vod.video_domain = "cdn.vod.example";
  vod.page_domain = "www.vod.example";
  vod.server_subnet = "198.18.1.";
  vod.page_bytes = 150e3;
  vod.manifest_bytes = 25e3;
  vod.telemetry_interval = 20.0;
  out.push_back(vod);

  return out;
}

ServiceProfile builtin_profile(std::string_view name) {
  for (auto& p : builtin_profiles()) {
    if (p.name == name) return p;
  }
  throw DataError("unknown built-in service '" + std::string(name) + "'");
}

SynthConfig sample_config(const CorpusProfile& p, std::mt19937_64& rng) {
  SynthConfig c = p.base;
  if (!p.vary) return c;
  const auto& r = *p.vary;
  auto uni = [&](double lo, double hi) {
    return hi > lo ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
  };
  auto log_uni = [&](double lo, double hi) { return std::exp(uni(std::log(lo), std::log(hi))); };
  c.network.capacity_bps = log_uni(r.capacity_min, r.capacity_max);
  c.network.loss_rate = uni(r.loss_min, r.loss_max);
  c.network.extra_latency = uni(r.latency_min, r.latency_max);
  c.network.base_rtt = uni(r.base_rtt_min, r.base_rtt_max);
  c.session_length = uni(r.length_min, r.length_max);
  c.lead_in = uni(r.lead_in_min, r.lead_in_max);
  c.cross_traffic_rate = uni(r.cross_min, r.cross_max);
  c.network.schedule.clear();
  if (uni(0.0, 1.0) < r.change_probability) {
    const double at = uni(0.3, 0.7) * c.session_length;
    const double cap = std::clamp(c.network.capacity_bps * std::exp(uni(std::log(0.25), std::log(4.0))),
                                  r.capacity_min, r.capacity_max);
    c.network.schedule.emplace_back(at, cap);
  }
  return c;
}

std::pair<CorpusEntry, SynthSession> generate_entry(const std::vector<CorpusProfile>& profiles,
                                                    std::size_t p, int k, std::uint64_t seed) {
  constexpr int kMaxAttempts = 200;
  const auto& prof = profiles.at(p);
  CorpusEntry e;
  e.profile = p;
  e.session_id = session_name(prof.base.profile.name, k);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = mix(mix(mix(seed, p), static_cast<std::uint64_t>(k)),
                                static_cast<std::uint64_t>(attempt));
    std::mt19937_64 rng(s);
    e.config = sample_config(prof, rng);
    e.config.rng_seed = mix(s, 0x5eed);
    try {
      auto session = generate_session(e.config, e.session_id);
      // Video must be recognizable as such by its flow volume.
      std::uint64_t video_bytes = 0;
      for (const auto& x : session.exchanges) {
        if (x.kind == SynthExchange::Kind::kVideo) video_bytes += x.bytes;
      }
      if (video_bytes <= kMinVideoBytes) continue;
      e.rejected_attempts = attempt;
      return {std::move(e), std::move(session)};
    } catch (const SessionRejected&) {
    }
  }
  throw DataError("could not generate a session for " + e.session_id + " in " +
                  std::to_string(kMaxAttempts) + " attempts");
}

std::vector<CorpusEntry> plan_and_generate(
    const std::vector<CorpusProfile>& profiles, int n_per_profile, std::uint64_t seed,
    const std::function<void(const CorpusEntry&, SynthSession&)>& emit) {
  if (n_per_profile < 0) throw DataError("session count must be non-negative");
  for (const auto& p : profiles) p.base.profile.validate();
  std::vector<CorpusEntry> entries;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    for (int k = 0; k < n_per_profile; ++k) {
      auto [e, session] = generate_entry(profiles, p, k, seed);
      if (emit) emit(e, session);
      entries.push_back(std::move(e));
    }
  }
  return entries;
}

namespace {

void write_service_map(const std::filesystem::path& file, const std::vector<ServiceProfile>& profiles) {
  std::vector<ServiceEntry> entries;
  for (const auto& p : profiles) {
    if (std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.service == p.name; })) {
      continue;
    }
    entries.push_back({p.name, {p.video_domain.substr(p.video_domain.find('.') + 1)}, {}});
  }
  std::ofstream out(file);
  ServiceMap(entries).to_json(out);
}

void write_session_files(const std::filesystem::path& dir, const CorpusEntry& e,
                         const SynthSession& s, std::ostream& labels) {
  std::ofstream trace(dir / "traces" / (e.session_id + ".jsonl"));
  write_event_stream(trace, s.events);
  if (!trace) throw DataError("cannot write trace for " + e.session_id);
  labels << label_to_json_line(s.label) << '\n';
}

json manifest_json(const std::vector<CorpusEntry>& entries, std::uint64_t seed, int n) {
  json sessions = json::array();
  for (const auto& e : entries) {
    sessions.push_back({{"session_id", e.session_id},
                        {"profile", e.profile},
                        {"rejected_attempts", e.rejected_attempts},
                        {"config", to_json(e.config)}});
  }
  return {{"format", "vqoe-synth-corpus"}, {"seed", seed}, {"n_per_profile", n}, {"sessions", sessions}};
}

}  // namespace

std::vector<CorpusEntry> generate_corpus(const std::vector<CorpusProfile>& profiles,
                                         int n_per_profile, std::uint64_t seed,
                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "traces");
  std::ofstream labels(dir / "labels.jsonl");
  auto entries = plan_and_generate(profiles, n_per_profile, seed,
                                   [&](const CorpusEntry& e, SynthSession& s) {
                                     write_session_files(dir, e, s, labels);
                                   });
  std::vector<ServiceProfile> used;
  for (const auto& p : profiles) used.push_back(p.base.profile);
  write_service_map(dir / "services.json", used);
  std::ofstream manifest(dir / "manifest.json");
  manifest << manifest_json(entries, seed, n_per_profile).dump(2) << '\n';
  if (!labels || !manifest) throw DataError("failed writing corpus to " + dir.string());
  return entries;
}

void regenerate_corpus(const std::filesystem::path& manifest, const std::filesystem::path& dir) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  std::filesystem::create_directories(dir / "traces");
  std::ofstream labels(dir / "labels.jsonl");
  std::vector<CorpusEntry> entries;
  std::vector<ServiceProfile> used;
  for (const auto& s : m.at("sessions")) {
    CorpusEntry e;
    e.session_id = s.at("session_id").get<std::string>();
    e.profile = s.at("profile").get<std::size_t>();
    e.rejected_attempts = s.value("rejected_attempts", 0);
    e.config = config_from_json(s.at("config"));
    auto session = generate_session(e.config, e.session_id);
    write_session_files(dir, e, session, labels);
    used.push_back(e.config.profile);
    entries.push_back(std::move(e));
  }
  write_service_map(dir / "services.json", used);
  std::ofstream out(dir / "manifest.json");
  out << manifest_json(entries, m.value("seed", std::uint64_t{0}), m.value("n_per_profile", 0)).dump(2)
      << '\n';
}

json to_json(const ServiceProfile& p) {
  json ladder = json::array();
  for (const auto& r : p.ladder) ladder.push_back({{"resolution", r.resolution}, {"bitrate_bps", r.bitrate_bps}});
  return {{"name", p.name},
          {"segment_duration", p.segment_duration},
          {"duration_choices", p.duration_choices},
          {"ladder", ladder},
          {"startup_buffer_threshold", p.startup_buffer_threshold},
          {"max_buffer", p.max_buffer},
          {"abr_policy", p.abr_policy == AbrPolicy::kBufferBased ? "buffer_based" : "throughput_based"},
          {"abr_safety", p.abr_safety},
          {"ewma_weight", p.ewma_weight},
          {"audio_segment_duration", p.audio_segment_duration},
          {"audio_bitrate_bps", p.audio_bitrate_bps},
          {"transport", p.video_transport == Transport::kUdp ? "quic" : "tcp"},
          {"video_domain", p.video_domain},
          {"page_domain", p.page_domain},
          {"server_subnet", p.server_subnet},
          {"page_bytes", p.page_bytes},
          {"manifest_bytes", p.manifest_bytes},
          {"telemetry_interval", p.telemetry_interval},
          {"telemetry_bytes", p.telemetry_bytes}};
}

ServiceProfile profile_from_json(const json& j) {
  ServiceProfile p;
  if (j.contains("base")) p = builtin_profile(j.at("base").get<std::string>());
  p.name = j.value("name", p.name);
  p.segment_duration = j.value("segment_duration", p.segment_duration);
  if (j.contains("duration_choices")) p.duration_choices = j.at("duration_choices").get<std::vector<double>>();
  if (j.contains("ladder")) {
    p.ladder.clear();
    for (const auto& r : j.at("ladder")) {
      p.ladder.push_back({r.at("resolution").get<int>(), r.at("bitrate_bps").get<double>()});
    }
  }
  p.startup_buffer_threshold = j.value("startup_buffer_threshold", p.startup_buffer_threshold);
  p.max_buffer = j.value("max_buffer", p.max_buffer);
  if (j.contains("abr_policy")) {
    const auto s = j.at("abr_policy").get<std::string>();
    if (s == "buffer_based") {
      p.abr_policy = AbrPolicy::kBufferBased;
    } else if (s == "throughput_based") {
      p.abr_policy = AbrPolicy::kThroughputBased;
    } else {
      throw DataError("abr_policy must be throughput_based or buffer_based, got '" + s + "'");
    }
  }
  p.abr_safety = j.value("abr_safety", p.abr_safety);
  p.ewma_weight = j.value("ewma_weight", p.ewma_weight);
  p.audio_segment_duration = j.value("audio_segment_duration", p.audio_segment_duration);
  p.audio_bitrate_bps = j.value("audio_bitrate_bps", p.audio_bitrate_bps);
  if (j.contains("transport")) {
    const auto s = j.at("transport").get<std::string>();
    if (s != "tcp" && s != "quic") throw DataError("transport must be tcp or quic, got '" + s + "'");
    p.video_transport = s == "quic" ? Transport::kUdp : Transport::kTcp;
  }
  p.video_domain = j.value("video_domain", p.video_domain);
  p.page_domain = j.value("page_domain", p.page_domain);
  p.server_subnet = j.value("server_subnet", p.server_subnet);
  p.page_bytes = j.value("page_bytes", p.page_bytes);
  p.manifest_bytes = j.value("manifest_bytes", p.manifest_bytes);
  p.telemetry_interval = j.value("telemetry_interval", p.telemetry_interval);
  p.telemetry_bytes = j.value("telemetry_bytes", p.telemetry_bytes);
  p.validate();
  return p;
}

json to_json(const NetworkConditions& n) {
  json sched = json::array();
  for (const auto& [at, cap] : n.schedule) sched.push_back({{"at", at}, {"capacity_bps", cap}});
  return {{"capacity_bps", n.capacity_bps},
          {"base_rtt", n.base_rtt},
          {"extra_latency", n.extra_latency},
          {"loss_rate", n.loss_rate},
          {"schedule", sched}};
}

NetworkConditions network_from_json(const json& j) {
  NetworkConditions n;
  n.capacity_bps = j.value("capacity_bps", n.capacity_bps);
  n.base_rtt = j.value("base_rtt", n.base_rtt);
  n.extra_latency = j.value("extra_latency", n.extra_latency);
  n.loss_rate = j.value("loss_rate", n.loss_rate);
  if (j.contains("schedule")) {
    for (const auto& s : j.at("schedule")) {
      n.schedule.emplace_back(s.at("at").get<double>(), s.at("capacity_bps").get<double>());
    }
  }
  return n;
}

json to_json(const SynthConfig& c) {
  return {{"profile", to_json(c.profile)},
          {"network", to_json(c.network)},
          {"session_length", c.session_length},
          {"lead_in", c.lead_in},
          {"tail", c.tail},
          {"cross_traffic_rate", c.cross_traffic_rate},
          {"size_sigma", c.size_sigma},
          {"max_startup", c.max_startup},
          {"rng_seed", c.rng_seed}};
}

SynthConfig config_from_json(const json& j) {
  try {
    SynthConfig c;
    const auto& prof = j.at("profile");
    c.profile = prof.is_string() ? builtin_profile(prof.get<std::string>()) : profile_from_json(prof);
    if (j.contains("network")) c.network = network_from_json(j.at("network"));
    c.session_length = j.value("session_length", c.session_length);
    c.lead_in = j.value("lead_in", c.lead_in);
    c.tail = j.value("tail", c.tail);
    c.cross_traffic_rate = j.value("cross_traffic_rate", c.cross_traffic_rate);
    c.size_sigma = j.value("size_sigma", c.size_sigma);
    c.max_startup = j.value("max_startup", c.max_startup);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
}

json to_json(const ConditionRanges& r) {
  return {{"capacity_bps", {r.capacity_min, r.capacity_max}},
          {"loss_rate", {r.loss_min, r.loss_max}},
          {"extra_latency", {r.latency_min, r.latency_max}},
          {"base_rtt", {r.base_rtt_min, r.base_rtt_max}},
          {"session_length", {r.length_min, r.length_max}},
          {"lead_in", {r.lead_in_min, r.lead_in_max}},
          {"cross_traffic_rate", {r.cross_min, r.cross_max}},
          {"change_probability", r.change_probability}};
}

ConditionRanges ranges_from_json(const json& j) {
  ConditionRanges r;
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2 || v[0] > v[1]) throw DataError(std::string("range '") + key + "' must be [lo, hi]");
    lo = v[0];
    hi = v[1];
  };
  try {
    range("capacity_bps", r.capacity_min, r.capacity_max);
    range("loss_rate", r.loss_min, r.loss_max);
    range("extra_latency", r.latency_min, r.latency_max);
    range("base_rtt", r.base_rtt_min, r.base_rtt_max);
    range("session_length", r.length_min, r.length_max);
    range("lead_in", r.lead_in_min, r.lead_in_max);
    range("cross_traffic_rate", r.cross_min, r.cross_max);
    r.change_probability = j.value("change_probability", r.change_probability);
  } catch (const json::exception& e) {
    throw DataError(std::string("ranges: ") + e.what());
  }
  if (r.capacity_min <= 0.0) throw DataError("capacity range must be positive");
  return r;
}

SynthPlan synth_plan_from_json(std::istream& in) {
  SynthPlan plan;
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
  try {
    plan.seed = j.value("seed", plan.seed);
    plan.n_per_profile = j.value("n", plan.n_per_profile);
    if (!j.contains("profiles") || !j.at("profiles").is_array() || j.at("profiles").empty()) {
      throw DataError("synth config needs a non-empty 'profiles' array");
    }
    for (const auto& p : j.at("profiles")) {
      CorpusProfile cp;
      const auto& svc = p.at("service");
      cp.base.profile = svc.is_string() ? builtin_profile(svc.get<std::string>()) : profile_from_json(svc);
      if (p.contains("network")) cp.base.network = network_from_json(p.at("network"));
      cp.base.session_length = p.value("session_length", cp.base.session_length);
      cp.base.lead_in = p.value("lead_in", cp.base.lead_in);
      cp.base.cross_traffic_rate = p.value("cross_traffic_rate", cp.base.cross_traffic_rate);
      cp.base.size_sigma = p.value("size_sigma", cp.base.size_sigma);
      if (p.contains("ranges")) {
        const auto& r = p.at("ranges");
        if (r.is_boolean()) {
          if (r.get<bool>()) cp.vary = ConditionRanges{};
        } else {
          cp.vary = ranges_from_json(r);
        }
      }
      cp.base.validate();
      plan.profiles.push_back(std::move(cp));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
  return plan;
}

std::string label_to_json_line(const GroundTruthLabel& l) {
  json bins = json::array();
  for (std::size_t i = 0; i < l.bin_resolution.size(); ++i) {
    bins.push_back({{"i", i}, {"res", l.bin_resolution[i]}});
  }
  return json{{"session_id", l.session_id},
              {"service", l.service},
              {"start_ts", l.start_ts},
              {"end_ts", l.end_ts},
              {"startup_delay", l.startup_delay},
              {"bins", bins}}
      .dump();
}

void write_labels(std::ostream& out, const std::vector<GroundTruthLabel>& labels) {
  for (const auto& l : labels) out << label_to_json_line(l) << '\n';
}

std::vector<GroundTruthLabel> read_labels(std::istream& in) {
  std::vector<GroundTruthLabel> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      GroundTruthLabel l;
      l.session_id = j.at("session_id").get<std::string>();
      l.service = j.value("service", std::string{});
      l.start_ts = j.value("start_ts", 0.0);
      l.end_ts = j.value("end_ts", 0.0);
      l.startup_delay = j.at("startup_delay").get<double>();
      if (j.contains("bins")) {
        for (const auto& b : j.at("bins")) {
          const auto i = b.at("i").get<std::size_t>();
          if (i >= l.bin_resolution.size()) l.bin_resolution.resize(i + 1, 0);
          l.bin_resolution[i] = b.at("res").get<int>();
        }
      }
      out.push_back(std::move(l));
    } catch (const json::exception& e) {
      throw ParseError(n, std::string("label: ") + e.what());
    }
  }
  return out;
}

}  // namespace vqoe
