#include "vqoe/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

namespace vqoe {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool suffix_match(std::string_view name, std::string_view suffix) {
  if (suffix.empty() || name.size() < suffix.size()) return false;
  if (name.substr(name.size() - suffix.size()) != suffix) return false;
  return name.size() == suffix.size() || name[name.size() - suffix.size() - 1] == '.';
}

std::optional<std::uint32_t> parse_ipv4(std::string_view s) {
  std::uint32_t addr = 0;
  int parts = 0;
  std::size_t i = 0;
  while (parts < 4) {
    std::size_t j = i;
    std::uint32_t octet = 0;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
      octet = octet * 10 + static_cast<std::uint32_t>(s[j] - '0');
      if (octet > 255) return std::nullopt;
      ++j;
    }
    if (j == i) return std::nullopt;
    addr = (addr << 8) | octet;
    ++parts;
    if (parts < 4) {
      if (j >= s.size() || s[j] != '.') return std::nullopt;
      ++j;
    } else if (j != s.size()) {
      return std::nullopt;
    }
    i = j;
  }
  return addr;
}

bool prefix_match(std::string_view addr, std::string_view prefix) {
  const auto slash = prefix.find('/');
  if (slash == std::string_view::npos) return addr.starts_with(prefix);
  const auto net = parse_ipv4(prefix.substr(0, slash));
  const auto host = parse_ipv4(addr);
  if (!net || !host) return false;
  int bits = 0;
  for (char c : prefix.substr(slash + 1)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    bits = bits * 10 + (c - '0');
  }
  if (bits > 32) return false;
  const std::uint32_t mask = bits == 0 ? 0 : ~std::uint32_t{0} << (32 - bits);
  return (*net & mask) == (*host & mask);
}

}  // namespace

ServiceMap::ServiceMap(std::vector<ServiceEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (auto& e : entries_) {
    if (!seen.insert(e.service).second) throw DataError("duplicate service '" + e.service + "'");
    for (auto& s : e.domain_suffixes) s = lower(s);
  }
}

ServiceMap ServiceMap::from_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("service map: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("service map must be a JSON array");
  std::vector<ServiceEntry> entries;
  for (const auto& rec : doc) {
    ServiceEntry e;
    try {
      e.service = rec.at("service").get<std::string>();
      e.domain_suffixes = rec.value("suffixes", std::vector<std::string>{});
      e.server_prefixes = rec.value("prefixes", std::vector<std::string>{});
    } catch (const json::exception& ex) {
      throw DataError(std::string("service map entry: ") + ex.what());
    }
    entries.push_back(std::move(e));
  }
  return ServiceMap(std::move(entries));
}

void ServiceMap::to_json(std::ostream& out) const {
  json doc = json::array();
  for (const auto& e : entries_) {
    doc.push_back({{"service", e.service},
                   {"suffixes", e.domain_suffixes},
                   {"prefixes", e.server_prefixes}});
  }
  out << doc.dump(2) << '\n';
}

std::string ServiceMap::match(std::string_view server_name, std::string_view server_addr) const {
  const std::string name = lower(server_name);
  if (!name.empty()) {
    for (const auto& e : entries_) {
      for (const auto& s : e.domain_suffixes) {
        if (suffix_match(name, s)) return e.service;
      }
    }
  }
  for (const auto& e : entries_) {
    for (const auto& p : e.server_prefixes) {
      if (prefix_match(server_addr, p)) return e.service;
    }
  }
  return {};
}

void classify_flows(std::span<FlowRecord> flows, const ServiceMap& map,
                    std::uint64_t video_payload_threshold) {
  if (map.empty()) throw DataError("service map is empty");
  for (auto& f : flows) {
    f.service = map.match(f.server_name, f.key.server_addr);
    if (f.service.empty()) {
      f.role = FlowRole::kOther;
    } else if (f.payload_bytes(Direction::kDown) > video_payload_threshold) {
      f.role = FlowRole::kVideo;
    } else {
      f.role = FlowRole::kServiceNonVideo;
    }
  }
}

std::vector<SegmentDownload> detect_segments(const FlowRecord& flow,
                                             std::uint32_t quic_request_threshold) {
  const bool udp = flow.key.transport == Transport::kUdp;
  std::vector<SegmentDownload> out;
  std::optional<SegmentDownload> open;
  for (const auto& p : flow.packets) {
    if (p.is_up()) {
      const bool opens = udp ? p.payload_bytes > quic_request_threshold : p.payload_bytes > 0;
      // Two qualifying packets at the same instant are one request.
      if (opens && !(open && open->request_ts == p.ts)) {
        if (open) out.push_back(*open);
        open = SegmentDownload{p.ts, p.ts, 0, flow.key};
      }
    } else if (open && p.payload_bytes > 0) {
      open->size_bytes += p.payload_bytes;
      open->completion_ts = p.ts;
    }
  }
  if (open) out.push_back(*open);
  return out;
}

std::vector<SegmentDownload> collect_segments(std::span<const FlowRecord> flows,
                                              const std::string& service, double start,
                                              double end, std::uint32_t quic_request_threshold) {
  std::vector<SegmentDownload> segs;
  for (const auto& f : flows) {
    if (f.role != FlowRole::kVideo || f.service != service) continue;
    if (f.last_ts < start || f.first_ts > end) continue;
    for (auto& s : detect_segments(f, quic_request_threshold)) {
      if (s.request_ts >= start && s.request_ts <= end) segs.push_back(std::move(s));
    }
  }
  std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
    return a.request_ts < b.request_ts;
  });
  return segs;
}

std::vector<std::size_t> session_flows(std::span<const FlowRecord> flows,
                                       const std::string& service, double start, double end) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto& f = flows[i];
    if (f.service == service && f.role != FlowRole::kOther && f.last_ts >= start &&
        f.first_ts <= end) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<VideoSession> detect_sessions(std::span<const FlowRecord> flows,
                                          const DetectionParams& params) {
  // Video downstream payload packets per service, in time order.
  std::map<std::string, std::vector<std::pair<double, std::uint32_t>>> video_down;
  for (const auto& f : flows) {
    if (f.role != FlowRole::kVideo) continue;
    auto& v = video_down[f.service];
    for (const auto& p : f.packets) {
      if (!p.is_up() && p.payload_bytes > 0) v.emplace_back(p.ts, p.payload_bytes);
    }
  }

  std::vector<VideoSession> sessions;
  for (auto& [service, pkts] : video_down) {
    std::stable_sort(pkts.begin(), pkts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const double bin = params.collection_bin;
    const double spike_bytes = params.spike_bps * bin / 8.0;
    std::size_t pos = 0;
    double prev_end = -1.0;
    while (pos < pkts.size()) {
      // First collection bin (counting only packets after the previous
      // session) whose volume reaches the spike threshold.
      std::size_t spike_first = pkts.size();
      double spike_bin = 0.0;
      for (std::size_t i = pos; i < pkts.size();) {
        const double b = std::floor(pkts[i].first / bin);
        double bytes = 0.0;
        std::size_t j = i;
        while (j < pkts.size() && std::floor(pkts[j].first / bin) == b) bytes += pkts[j++].second;
        if (bytes >= spike_bytes) {
          spike_first = i;
          spike_bin = b;
          break;
        }
        i = j;
      }
      if (spike_first == pkts.size()) break;

      std::size_t last = spike_first;
      while (last + 1 < pkts.size() &&
             pkts[last + 1].first - pkts[last].first < params.silence_gap) {
        ++last;
      }
      double start = spike_bin * bin;
      if (start <= prev_end) start = std::nextafter(prev_end, INFINITY);
      const double end = pkts[last].first;
      pos = last + 1;
      if (!(start < end)) continue;
      prev_end = end;

      VideoSession s;
      s.service = service;
      s.start_ts = start;
      s.end_ts = end;
      s.flows = session_flows(flows, service, start, end);
      s.segments = collect_segments(flows, service, start, end, params.quic_request_threshold);
      sessions.push_back(std::move(s));
    }
  }
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const auto& a, const auto& b) { return a.start_ts < b.start_ts; });
  return sessions;
}

void write_sessions(std::ostream& out, std::span<const VideoSession> sessions,
                    std::span<const FlowRecord> flows) {
  for (const auto& s : sessions) {
    json j;
    j["session_id"] = s.id;
    j["service"] = s.service;
    j["start_ts"] = s.start_ts;
    j["end_ts"] = s.end_ts;
    json fl = json::array();
    for (auto idx : s.flows) {
      const auto& f = flows[idx];
      fl.push_back({{"index", idx}, {"key", f.key.str()}, {"role", to_string(f.role)}});
    }
    j["flows"] = std::move(fl);
    json segs = json::array();
    for (const auto& g : s.segments) {
      segs.push_back({{"request_ts", g.request_ts},
                      {"completion_ts", g.completion_ts},
                      {"size_bytes", g.size_bytes},
                      {"flow", g.flow.str()}});
    }
    j["segments"] = std::move(segs);
    out << j.dump() << '\n';
  }
}

std::vector<VideoSession> read_sessions(std::istream& in) {
  std::vector<VideoSession> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      VideoSession s;
      s.id = j.value("session_id", "");
      s.service = j.at("service").get<std::string>();
      s.start_ts = j.at("start_ts").get<double>();
      s.end_ts = j.at("end_ts").get<double>();
      for (const auto& f : j.at("flows")) s.flows.push_back(f.at("index").get<std::size_t>());
      // Segments are re-derived from the flows when features are computed;
      // only their timing and sizes are kept here.
      for (const auto& g : j.at("segments")) {
        SegmentDownload d;
        d.request_ts = g.at("request_ts").get<double>();
        d.completion_ts = g.at("completion_ts").get<double>();
        d.size_bytes = g.at("size_bytes").get<std::uint64_t>();
        s.segments.push_back(d);
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(line, std::string("malformed session record: ") + e.what());
    }
  }
  return out;
}

}  // namespace vqoe
