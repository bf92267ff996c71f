#include "vqoe/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace vqoe {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void add_stat_names(std::vector<std::string>& names, const std::string& prefix, bool extended) {
  if (extended) {
    for (auto s : kExtendedStatNames) names.push_back(prefix + "_" + std::string(s));
  } else {
    for (auto s : kBasicStatNames) names.push_back(prefix + "_" + std::string(s));
  }
}

std::vector<std::string> build_network_names() {
  std::vector<std::string> n = {
      "net_tput_down_total",    "net_tput_up_total",    "net_tput_down_video",
      "net_tput_up_video",      "net_tput_down_nonvideo", "net_tput_up_nonvideo",
      "net_tput_down_video_diff", "net_pkts_down",      "net_pkts_up",
      "net_bytes_down",         "net_bytes_up"};
  add_stat_names(n, "net_iat_down", false);
  add_stat_names(n, "net_iat_up", false);
  n.push_back("net_parallel_flows");
  return n;
}

constexpr std::array<std::string_view, 5> kFlagNames = {"ack", "syn", "rst", "psh", "urg"};
constexpr std::array<std::uint8_t, 5> kFlagBits = {tcp_flag::kAck, tcp_flag::kSyn, tcp_flag::kRst,
                                                   tcp_flag::kPush, tcp_flag::kUrgent};
constexpr std::array<std::string_view, 2> kDirNames = {"up", "down"};

std::vector<std::string> build_transport_names() {
  std::vector<std::string> n;
  for (auto d : kDirNames) {
    for (auto f : kFlagNames) n.push_back("tran_" + std::string(f) + "_" + std::string(d));
  }
  for (auto metric : {"rwnd", "bpp", "idle", "goodput", "inflight"}) {
    for (auto d : kDirNames) add_stat_names(n, "tran_" + std::string(metric) + "_" + std::string(d), true);
  }
  add_stat_names(n, "tran_rtt", true);
  for (auto d : kDirNames) n.push_back("tran_retx_" + std::string(d));
  for (auto d : kDirNames) n.push_back("tran_ooo_" + std::string(d));
  return n;
}

std::vector<std::string> build_app_names() {
  std::vector<std::string> n;
  add_stat_names(n, "app_size_all", false);
  add_stat_names(n, "app_size_last10", false);
  n.push_back("app_cum_bytes");
  add_stat_names(n, "app_req_iat", false);
  add_stat_names(n, "app_compl_iat", false);
  n.push_back("app_pending");
  n.push_back("app_downloaded");
  n.push_back("app_requested");
  return n;
}

std::vector<std::string> build_names(LayerSet l) {
  std::vector<std::string> n;
  if (has_network(l)) n = network_feature_names();
  if (has_transport(l)) {
    const auto& t = transport_feature_names();
    n.insert(n.end(), t.begin(), t.end());
  }
  if (has_app(l)) {
    const auto& a = app_feature_names();
    n.insert(n.end(), a.begin(), a.end());
  }
  return n;
}

// Packets of `f` with ts in [start, end).
std::span<const PacketEvent> in_window(const FlowRecord& f, double start, double end) {
  auto cmp_lo = [](const PacketEvent& p, double t) { return p.ts < t; };
  const auto lo = std::lower_bound(f.packets.begin(), f.packets.end(), start, cmp_lo);
  const auto hi = std::lower_bound(lo, f.packets.end(), end, cmp_lo);
  return {lo, hi};
}

std::size_t first_index(const FlowRecord& f, double t) {
  auto cmp_lo = [](const PacketEvent& p, double x) { return p.ts < x; };
  return static_cast<std::size_t>(
      std::lower_bound(f.packets.begin(), f.packets.end(), t, cmp_lo) - f.packets.begin());
}

bool is_video_of(const FlowRecord& f, const std::string& service) {
  return f.role == FlowRole::kVideo && f.service == service;
}

}  // namespace

std::string_view to_string(LayerSet l) {
  switch (l) {
    case LayerSet::kNet:
      return "net";
    case LayerSet::kTran:
      return "tran";
    case LayerSet::kApp:
      return "app";
    case LayerSet::kNetTran:
      return "net+tran";
    case LayerSet::kNetApp:
      return "net+app";
    case LayerSet::kAll:
      break;
  }
  return "all";
}

LayerSet layer_set_from_string(std::string_view s) {
  for (auto l : {LayerSet::kNet, LayerSet::kTran, LayerSet::kApp, LayerSet::kNetTran,
                 LayerSet::kNetApp, LayerSet::kAll}) {
    if (to_string(l) == s) return l;
  }
  throw DataError("unknown layer set '" + std::string(s) + "'");
}

bool has_network(LayerSet l) {
  return l == LayerSet::kNet || l == LayerSet::kNetTran || l == LayerSet::kNetApp ||
         l == LayerSet::kAll;
}
bool has_transport(LayerSet l) {
  return l == LayerSet::kTran || l == LayerSet::kNetTran || l == LayerSet::kAll;
}
bool has_app(LayerSet l) {
  return l == LayerSet::kApp || l == LayerSet::kNetApp || l == LayerSet::kAll;
}

const std::vector<std::string>& network_feature_names() {
  static const auto names = build_network_names();
  return names;
}
const std::vector<std::string>& transport_feature_names() {
  static const auto names = build_transport_names();
  return names;
}
const std::vector<std::string>& app_feature_names() {
  static const auto names = build_app_names();
  return names;
}

const std::vector<std::string>& feature_names(LayerSet l) {
  static const std::array<std::vector<std::string>, 6> all = {
      build_names(LayerSet::kNet),     build_names(LayerSet::kTran),
      build_names(LayerSet::kApp),     build_names(LayerSet::kNetTran),
      build_names(LayerSet::kNetApp),  build_names(LayerSet::kAll)};
  return all[static_cast<std::size_t>(l)];
}

// ---------------------------------------------------------------------------
// Network layer

double video_down_throughput(const TimeBin& bin, std::span<const FlowRecord> flows) {
  double bytes = 0.0;
  for (const auto& f : flows) {
    if (!is_video_of(f, bin.service)) continue;
    for (const auto& p : in_window(f, bin.start_ts, bin.end_ts)) {
      if (!p.is_up()) bytes += p.payload_bytes;
    }
  }
  return bytes * 8.0 / bin.duration();
}

FeatureVector network_features(const TimeBin& bin, std::span<const FlowRecord> flows,
                               double prev_bin_video_down_tput) {
  const double dur = bin.duration();
  double total[2] = {0, 0};  // [up, down] payload bytes
  double video[2] = {0, 0};
  double nonvideo[2] = {0, 0};
  double pkts[2] = {0, 0};
  double bytes[2] = {0, 0};
  std::vector<double> times[2];
  int parallel = 0;

  for (const auto& f : flows) {
    const auto pk = in_window(f, bin.start_ts, bin.end_ts);
    if (pk.empty()) continue;
    const bool same_service = !bin.service.empty() && f.service == bin.service;
    const bool is_video = same_service && f.role == FlowRole::kVideo;
    const bool is_nonvideo = same_service && f.role == FlowRole::kServiceNonVideo;
    if (is_video || is_nonvideo) ++parallel;
    for (const auto& p : pk) {
      const int d = p.is_up() ? 0 : 1;
      total[d] += p.payload_bytes;
      if (is_video) {
        video[d] += p.payload_bytes;
        pkts[d] += 1;
        bytes[d] += p.ip_bytes;
        times[d].push_back(p.ts);
      } else if (is_nonvideo) {
        nonvideo[d] += p.payload_bytes;
      }
    }
  }

  FeatureVector v;
  v.layer_set = LayerSet::kNet;
  auto& out = v.values;
  out.reserve(network_feature_names().size());
  const double video_down = video[1] * 8.0 / dur;
  out.insert(out.end(), {total[1] * 8.0 / dur, total[0] * 8.0 / dur, video_down,
                         video[0] * 8.0 / dur, nonvideo[1] * 8.0 / dur, nonvideo[0] * 8.0 / dur,
                         video_down - prev_bin_video_down_tput, pkts[1], pkts[0], bytes[1],
                         bytes[0]});
  for (int d : {1, 0}) {
    auto& t = times[d];
    std::sort(t.begin(), t.end());
    std::vector<double> iat;
    for (std::size_t i = 1; i < t.size(); ++i) iat.push_back(t[i] - t[i - 1]);
    append_stats(summarize(iat), false, out);
  }
  out.push_back(parallel);
  return v;
}

// ---------------------------------------------------------------------------
// Transport layer

TcpFlowAnalysis analyze_tcp_flow(const FlowRecord& flow) {
  if (flow.key.transport != Transport::kTcp) {
    throw DataError("transport features need TCP; flow " + flow.key.str() + " is not");
  }
  const std::size_t n = flow.packets.size();
  TcpFlowAnalysis a;
  a.flow = &flow;
  a.retransmission.assign(n, 0);
  a.out_of_order.assign(n, 0);
  a.in_flight.assign(n, kNaN);
  a.rtt.assign(n, kNaN);
  a.gap_before.assign(n, kNaN);

  struct Outstanding {
    std::int64_t end;
    double ts;
    bool valid;  // false once the range was retransmitted
  };
  struct DirState {
    std::optional<std::uint32_t> base;
    std::int64_t max_start = -1;
    std::int64_t max_end = 0;
    std::int64_t max_acked = 0;  // highest ack received for this direction's data
    std::unordered_set<std::int64_t> seen;
    std::vector<Outstanding> outstanding;
    std::optional<double> last_ts;
  };
  DirState st[2];
  std::optional<double> syn_ts;
  bool handshake_sampled = false;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = flow.packets[i];
    if (!p.tcp) continue;
    const auto& h = *p.tcp;
    const int d = p.is_up() ? 0 : 1;
    const int o = 1 - d;
    auto& me = st[d];
    auto& peer = st[o];

    if (me.last_ts) a.gap_before[i] = p.ts - *me.last_ts;
    me.last_ts = p.ts;
    if (!me.base) me.base = h.seq;

    if (h.has(tcp_flag::kSyn) && !h.has(tcp_flag::kAck) && p.is_up() && !syn_ts) syn_ts = p.ts;
    if (h.has(tcp_flag::kSyn) && h.has(tcp_flag::kAck) && !p.is_up() && syn_ts &&
        !handshake_sampled) {
      a.rtt[i] = p.ts - *syn_ts;
      handshake_sampled = true;
    }

    if (h.has(tcp_flag::kAck) && peer.base) {
      const auto ack_rel = static_cast<std::int64_t>(static_cast<std::uint32_t>(h.ack_no - *peer.base));
      peer.max_acked = std::max(peer.max_acked, ack_rel);
      for (const auto& o_item : peer.outstanding) {
        if (o_item.end == ack_rel && o_item.valid && std::isnan(a.rtt[i])) a.rtt[i] = p.ts - o_item.ts;
      }
      std::erase_if(peer.outstanding, [ack_rel](const Outstanding& x) { return x.end <= ack_rel; });
    }

    if (p.payload_bytes > 0) {
      const auto rel = static_cast<std::int64_t>(static_cast<std::uint32_t>(h.seq - *me.base));
      const std::int64_t end = rel + p.payload_bytes;
      if (me.seen.contains(rel)) {
        a.retransmission[i] = 1;
        for (auto& x : me.outstanding) {
          if (x.end == end) x.valid = false;
        }
      } else {
        if (rel < me.max_start) a.out_of_order[i] = 1;
        me.seen.insert(rel);
        me.outstanding.push_back({end, p.ts, true});
      }
      me.max_start = std::max(me.max_start, rel);
      me.max_end = std::max(me.max_end, end);
      a.in_flight[i] = static_cast<double>(std::max<std::int64_t>(0, me.max_end - me.max_acked));
    }
  }
  return a;
}

FeatureVector transport_features(const TimeBin& bin, std::span<const TcpFlowAnalysis> analyses,
                                 const FeatureConfig& cfg) {
  double flags[2][5] = {};
  std::vector<double> rwnd[2], bpp[2], idle[2], inflight[2], rtt;
  double retx[2] = {0, 0};
  double ooo[2] = {0, 0};
  const auto n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(bin.duration() / cfg.goodput_interval + 1e-9)));
  std::vector<double> goodput[2] = {std::vector<double>(n_sub, 0.0), std::vector<double>(n_sub, 0.0)};

  for (const auto& a : analyses) {
    const auto& f = *a.flow;
    const std::size_t lo = first_index(f, bin.start_ts);
    const std::size_t hi = first_index(f, bin.end_ts);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& p = f.packets[i];
      const int d = p.is_up() ? 0 : 1;
      if (p.tcp) {
        for (std::size_t k = 0; k < kFlagBits.size(); ++k) {
          if (p.tcp->has(kFlagBits[k])) flags[d][k] += 1;
        }
        rwnd[d].push_back(p.tcp->recv_window);
      }
      bpp[d].push_back(p.ip_bytes);
      if (!std::isnan(a.gap_before[i]) && a.gap_before[i] > cfg.idle_gap) idle[d].push_back(a.gap_before[i]);
      if (!std::isnan(a.in_flight[i])) inflight[d].push_back(a.in_flight[i]);
      if (!std::isnan(a.rtt[i])) rtt.push_back(a.rtt[i]);
      retx[d] += a.retransmission[i];
      ooo[d] += a.out_of_order[i];
      const auto k = std::min(
          n_sub - 1, static_cast<std::size_t>((p.ts - bin.start_ts) / cfg.goodput_interval));
      goodput[d][k] += p.payload_bytes * 8.0;
    }
  }
  for (int d = 0; d < 2; ++d) {
    for (auto& g : goodput[d]) g /= cfg.goodput_interval;
  }

  FeatureVector v;
  v.layer_set = LayerSet::kTran;
  auto& out = v.values;
  out.reserve(transport_feature_names().size());
  for (int d = 0; d < 2; ++d) {
    for (double c : flags[d]) out.push_back(c);
  }
  for (auto* metric : {rwnd, bpp, idle, goodput, inflight}) {
    for (int d = 0; d < 2; ++d) append_stats(summarize(metric[d], true), true, out);
  }
  append_stats(summarize(rtt, true), true, out);
  out.insert(out.end(), {retx[0], retx[1], ooo[0], ooo[1]});
  return v;
}

FeatureVector transport_features(const TimeBin& bin, std::span<const FlowRecord> video_flows,
                                 const FeatureConfig& cfg) {
  std::vector<TcpFlowAnalysis> analyses;
  analyses.reserve(video_flows.size());
  for (const auto& f : video_flows) analyses.push_back(analyze_tcp_flow(f));
  return transport_features(bin, analyses, cfg);
}

// ---------------------------------------------------------------------------
// Application layer

FeatureVector app_features(const TimeBin& bin, std::span<const SegmentDownload> segments) {
  std::vector<double> sizes;
  std::vector<double> requests;
  std::vector<double> completions;
  double cum = 0.0;
  for (const auto& s : segments) {
    if (s.request_ts < bin.session_start || s.request_ts >= bin.end_ts) continue;
    requests.push_back(s.request_ts);
    if (s.completion_ts < bin.end_ts) {
      sizes.push_back(static_cast<double>(s.size_bytes));
      completions.push_back(s.completion_ts);
      cum += static_cast<double>(s.size_bytes);
    }
  }
  // Inter-arrival sequences are anchored at the session start, so the first
  // element is the delay of the first request / completion.
  auto inter_arrivals = [&](std::vector<double>& t) {
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    double prev = bin.session_start;
    for (double x : t) {
      out.push_back(x - prev);
      prev = x;
    }
    return out;
  };

  // Completion order of sizes: the last ten completed segments.
  std::vector<std::pair<double, double>> by_completion;
  for (std::size_t i = 0; i < sizes.size(); ++i) by_completion.emplace_back(completions[i], sizes[i]);
  std::stable_sort(by_completion.begin(), by_completion.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> last10;
  for (std::size_t i = by_completion.size() > 10 ? by_completion.size() - 10 : 0;
       i < by_completion.size(); ++i) {
    last10.push_back(by_completion[i].second);
  }

  FeatureVector v;
  v.layer_set = LayerSet::kApp;
  auto& out = v.values;
  out.reserve(app_feature_names().size());
  append_stats(summarize(sizes), false, out);
  append_stats(summarize(last10), false, out);
  out.push_back(cum);
  const auto n_requested = static_cast<double>(requests.size());
  const auto n_downloaded = static_cast<double>(completions.size());
  append_stats(summarize(inter_arrivals(requests)), false, out);
  append_stats(summarize(inter_arrivals(completions)), false, out);
  out.push_back(n_requested - n_downloaded);
  out.push_back(n_downloaded);
  out.push_back(n_requested);
  return v;
}

// ---------------------------------------------------------------------------
// Session windows

SessionFeatures::SessionFeatures(const VideoSession& session, std::span<const FlowRecord> flows,
                                 FeatureConfig cfg)
    : session_(session), flows_(flows), cfg_(cfg) {
  for (const auto& f : flows_) {
    if (!is_video_of(f, session_.service)) continue;
    if (f.last_ts < session_.start_ts || f.first_ts > session_.end_ts) continue;
    if (f.key.transport != Transport::kTcp) {
      all_tcp_ = false;
      continue;
    }
    tcp_.push_back(analyze_tcp_flow(f));
  }
}

TimeBin SessionFeatures::make_bin(int index, double start, double end) const {
  return TimeBin{session_.service, session_.start_ts, index, start, end};
}

FeatureVector SessionFeatures::window(int index, double start, double end,
                                      double prev_video_down_tput, LayerSet layers,
                                      Window kind) const {
  const TimeBin bin = make_bin(index, start, end);
  FeatureVector v;
  v.layer_set = layers;
  v.window = kind;
  v.values.reserve(feature_names(layers).size());
  if (has_network(layers)) {
    const auto net = network_features(bin, flows_, prev_video_down_tput);
    v.values.insert(v.values.end(), net.values.begin(), net.values.end());
  }
  if (has_transport(layers)) {
    if (!all_tcp_) {
      throw DataError("session " + session_.id +
                      " has non-TCP video flows; transport features are unavailable");
    }
    const auto tran = transport_features(bin, tcp_, cfg_);
    v.values.insert(v.values.end(), tran.values.begin(), tran.values.end());
  }
  if (has_app(layers)) {
    const auto app = app_features(bin, session_.segments);
    v.values.insert(v.values.end(), app.values.begin(), app.values.end());
  }
  return v;
}

FeatureVector SessionFeatures::startup(LayerSet layers, double window_seconds) const {
  if (session_.end_ts - session_.start_ts < window_seconds) {
    throw DataError("session " + session_.id + " is shorter than the startup window");
  }
  return window(0, session_.start_ts, session_.start_ts + window_seconds, 0.0, layers,
                Window::kStartup);
}

std::vector<FeatureVector> SessionFeatures::bins(LayerSet layers, double bin_seconds) const {
  const auto n = static_cast<int>(
      std::floor((session_.end_ts - session_.start_ts) / bin_seconds + 1e-9));
  std::vector<FeatureVector> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = session_.start_ts + i * bin_seconds;
    const double b = a + bin_seconds;
    out.push_back(window(i, a, b, prev, layers, Window::kBin));
    prev = video_down_throughput(make_bin(i, a, b), flows_);
  }
  return out;
}

FeatureVector startup_features(const VideoSession& session, std::span<const FlowRecord> flows,
                               LayerSet layers) {
  return SessionFeatures(session, flows).startup(layers);
}

std::vector<FeatureVector> bin_features(const VideoSession& session,
                                        std::span<const FlowRecord> flows, LayerSet layers,
                                        double bin_seconds) {
  return SessionFeatures(session, flows).bins(layers, bin_seconds);
}

FeatureVector project(const FeatureVector& v, LayerSet to) {
  const auto& from_names = v.names();
  const auto& to_names = feature_names(to);
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < from_names.size(); ++i) pos.emplace(from_names[i], i);
  FeatureVector out;
  out.layer_set = to;
  out.window = v.window;
  out.values.reserve(to_names.size());
  for (const auto& name : to_names) {
    const auto it = pos.find(name);
    if (it == pos.end()) {
      throw DataError("cannot project " + std::string(to_string(v.layer_set)) + " onto " +
                      std::string(to_string(to)) + ": missing column " + name);
    }
    out.values.push_back(v.values[it->second]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV + manifest

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  const auto& names = feature_names(table.layer_set);
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  char buf[32];
  for (const auto& row : table.values) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_feature_manifest(std::ostream& out, const FeatureTable& table) {
  json j;
  j["layer_set"] = to_string(table.layer_set);
  j["window"] = table.window == Window::kStartup ? "startup" : "bins";
  j["bin_seconds"] = table.bin_seconds;
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"session_id", r.session_id}, {"service", r.service}, {"bin", r.bin},
                    {"offset", r.offset}, {"start_ts", r.start_ts}});
  }
  j["rows"] = std::move(rows);
  out << j.dump(1) << '\n';
}

FeatureTable read_feature_table(std::istream& csv, std::istream& manifest) {
  FeatureTable t;
  json m;
  try {
    m = json::parse(manifest);
    t.layer_set = layer_set_from_string(m.at("layer_set").get<std::string>());
    t.window = m.at("window").get<std::string>() == "startup" ? Window::kStartup : Window::kBin;
    t.bin_seconds = m.at("bin_seconds").get<double>();
    for (const auto& r : m.at("rows")) {
      t.rows.push_back({r.at("session_id").get<std::string>(), r.value("service", ""),
                        r.at("bin").get<int>(), r.value("offset", 0.0),
                        r.value("start_ts", 0.0)});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("feature manifest: ") + e.what());
  }

  const auto& names = feature_names(t.layer_set);
  std::string line;
  if (!std::getline(csv, line)) throw ParseError(1, "feature CSV has no header");
  {
    std::stringstream ss(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= names.size() || cell != names[i]) {
        throw ParseError(1, "feature CSV column " + std::to_string(i) + " is '" + cell +
                                "', expected '" + (i < names.size() ? names[i] : "<none>") + "'");
      }
      ++i;
    }
    if (i != names.size()) throw ParseError(1, "feature CSV header is missing columns");
  }
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(names.size());
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      if (end == p) throw ParseError(lineno, "non-numeric feature value");
      p = end;
      if (*p == ',') ++p;
    }
    if (row.size() != names.size()) {
      throw ParseError(lineno, "expected " + std::to_string(names.size()) + " values, got " +
                                   std::to_string(row.size()));
    }
    t.values.push_back(std::move(row));
  }
  if (t.values.size() != t.rows.size()) {
    throw DataError("feature CSV has " + std::to_string(t.values.size()) +
                    " rows but the manifest lists " + std::to_string(t.rows.size()));
  }
  return t;
}

}  // namespace vqoe
