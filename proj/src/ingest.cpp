#include "vqoe/ingest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>

#include "json.hpp"

namespace vqoe {

using nlohmann::json;

std::string_view to_string(Direction d) { return d == Direction::kUp ? "up" : "down"; }
std::string_view to_string(Transport t) { return t == Transport::kTcp ? "tcp" : "udp"; }

std::string_view to_string(FlowRole r) {
  switch (r) {
    case FlowRole::kVideo:
      return "video";
    case FlowRole::kServiceNonVideo:
      return "service_non_video";
    case FlowRole::kOther:
      return "other";
    case FlowRole::kUnlabeled:
      break;
  }
  return "unlabeled";
}

FlowRole flow_role_from_string(std::string_view s) {
  if (s == "video") return FlowRole::kVideo;
  if (s == "service_non_video") return FlowRole::kServiceNonVideo;
  if (s == "other") return FlowRole::kOther;
  return FlowRole::kUnlabeled;
}

namespace {
constexpr std::string_view kFlagLetters = "ASRPU";
}

std::string flags_to_string(std::uint8_t flags) {
  std::string out;
  for (std::size_t i = 0; i < kFlagLetters.size(); ++i) {
    if (flags & (1u << i)) out.push_back(kFlagLetters[i]);
  }
  return out;
}

std::optional<std::uint8_t> flags_from_string(std::string_view s) {
  std::uint8_t flags = 0;
  for (char c : s) {
    const auto pos = kFlagLetters.find(c);
    if (pos == std::string_view::npos) return std::nullopt;
    flags |= static_cast<std::uint8_t>(1u << pos);
  }
  return flags;
}

std::string FlowKey::str() const {
  return std::string(to_string(transport)) + " " + client_addr + ":" +
         std::to_string(client_port) + " > " + server_addr + ":" +
         std::to_string(server_port);
}

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
  std::size_t h = std::hash<std::string>{}(k.client_addr);
  auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
  mix(k.client_port);
  mix(std::hash<std::string>{}(k.server_addr));
  mix(k.server_port);
  mix(static_cast<std::size_t>(k.transport));
  return h;
}

std::uint64_t FlowRecord::payload_bytes(Direction d) const {
  std::uint64_t total = 0;
  for (const auto& p : packets) {
    if (p.dir == d) total += p.payload_bytes;
  }
  return total;
}

double quantize_us(double seconds) { return std::round(seconds * 1e6) / 1e6; }

namespace {

// Endpoint pair ordered so both directions of a conversation map to one key.
FlowKey unordered_key(const std::string& a, std::uint16_t ap, const std::string& b,
                      std::uint16_t bp, Transport t) {
  if (std::tie(a, ap) <= std::tie(b, bp)) return {a, ap, b, bp, t};
  return {b, bp, a, ap, t};
}

template <typename T>
T require(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(line, std::string("missing required field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line, std::string("field '") + key + "' has the wrong type");
  }
}

std::uint16_t require_port(const json& obj, const char* key, std::size_t line) {
  const auto v = require<std::int64_t>(obj, key, line);
  if (v < 0 || v > 65535) throw ParseError(line, std::string("field '") + key + "' out of range");
  return static_cast<std::uint16_t>(v);
}

template <typename T>
std::optional<T> optional_field(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line, std::string("field '") + key + "' has the wrong type");
  }
}

std::uint32_t as_u32(std::int64_t v, const char* key, std::size_t line) {
  if (v < 0 || v > static_cast<std::int64_t>(UINT32_MAX)) {
    throw ParseError(line, std::string("field '") + key + "' out of range");
  }
  return static_cast<std::uint32_t>(v);
}

class Canonicalizer {
 public:
  // Returns the canonical key and the direction of a packet sent from src.
  std::pair<FlowKey, Direction> orient(const std::string& src, std::uint16_t sport,
                                       const std::string& dst, std::uint16_t dport,
                                       Transport t, std::optional<Direction> dir,
                                       std::uint8_t tcp_flags) {
    if (dir) {
      if (*dir == Direction::kUp) return {FlowKey{src, sport, dst, dport, t}, *dir};
      return {FlowKey{dst, dport, src, sport, t}, *dir};
    }
    auto ukey = unordered_key(src, sport, dst, dport, t);
    auto it = client_side_.find(ukey);
    if (it == client_side_.end()) {
      bool src_is_client = true;
      if (t == Transport::kTcp && (tcp_flags & tcp_flag::kSyn) && (tcp_flags & tcp_flag::kAck)) {
        src_is_client = false;  // SYN-ACK: the receiver initiated
      }
      const bool client_is_first = src_is_client == (std::tie(src, sport) == std::tie(ukey.client_addr, ukey.client_port));
      it = client_side_.emplace(std::move(ukey), client_is_first).first;
    }
    const bool src_is_first =
        std::tie(src, sport) == std::tie(it->first.client_addr, it->first.client_port);
    const bool src_is_client = src_is_first == it->second;
    if (src_is_client) return {FlowKey{src, sport, dst, dport, t}, Direction::kUp};
    return {FlowKey{dst, dport, src, sport, t}, Direction::kDown};
  }

 private:
  // unordered key -> whether its first endpoint is the client
  std::unordered_map<FlowKey, bool, FlowKeyHash> client_side_;
};

PacketEvent parse_line(const std::string& text, std::size_t line, Canonicalizer& canon) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(line, "expected a JSON object");

  PacketEvent e;
  e.ts = require<double>(obj, "ts", line);
  if (!(e.ts >= 0.0) || !std::isfinite(e.ts)) throw ParseError(line, "field 'ts' must be >= 0");
  const auto src = require<std::string>(obj, "src", line);
  const auto dst = require<std::string>(obj, "dst", line);
  const auto sport = require_port(obj, "sport", line);
  const auto dport = require_port(obj, "dport", line);
  const auto proto = require<std::string>(obj, "proto", line);
  Transport transport;
  if (proto == "tcp") {
    transport = Transport::kTcp;
  } else if (proto == "udp") {
    transport = Transport::kUdp;
  } else {
    throw ParseError(line, "field 'proto' must be \"tcp\" or \"udp\"");
  }
  e.ip_bytes = as_u32(require<std::int64_t>(obj, "ip_len", line), "ip_len", line);
  e.payload_bytes = as_u32(require<std::int64_t>(obj, "payload_len", line), "payload_len", line);
  if (e.payload_bytes > e.ip_bytes) throw ParseError(line, "field 'payload_len' exceeds 'ip_len'");

  std::optional<Direction> dir;
  if (auto d = optional_field<std::string>(obj, "dir", line)) {
    if (*d == "up") {
      dir = Direction::kUp;
    } else if (*d == "down") {
      dir = Direction::kDown;
    } else {
      throw ParseError(line, "field 'dir' must be \"up\" or \"down\"");
    }
  }

  const auto flags = optional_field<std::string>(obj, "flags", line);
  const auto seq = optional_field<std::int64_t>(obj, "seq", line);
  const auto ack = optional_field<std::int64_t>(obj, "ack", line);
  const auto rwnd = optional_field<std::int64_t>(obj, "rwnd", line);
  if (transport == Transport::kTcp) {
    TcpHeader h;
    if (flags) {
      const auto parsed = flags_from_string(*flags);
      if (!parsed) throw ParseError(line, "field 'flags' must be a subset of \"ASRPU\"");
      h.flags = *parsed;
    }
    if (seq) h.seq = as_u32(*seq, "seq", line);
    if (ack) h.ack_no = as_u32(*ack, "ack", line);
    if (rwnd) h.recv_window = as_u32(*rwnd, "rwnd", line);
    e.tcp = h;
  } else if (flags || seq || ack || rwnd) {
    throw ParseError(line, "TCP header fields present on a udp packet");
  }
  if (auto sni = optional_field<std::string>(obj, "sni", line)) e.sni = std::move(*sni);

  auto [key, direction] =
      canon.orient(src, sport, dst, dport, transport, dir, e.tcp ? e.tcp->flags : 0);
  e.flow = std::move(key);
  e.dir = direction;
  return e;
}

}  // namespace

std::vector<PacketEvent> parse_event_stream(std::istream& in) {
  struct Pending {
    double ts;
    std::size_t order;
    PacketEvent event;
  };
  auto later = [](const Pending& a, const Pending& b) {
    return a.ts != b.ts ? a.ts > b.ts : a.order > b.order;
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(later)> buffer(later);

  std::vector<PacketEvent> out;
  Canonicalizer canon;
  std::string text;
  std::size_t line = 0;
  double max_ts = 0.0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    PacketEvent e = parse_line(text, line, canon);
    if (e.ts < max_ts - kReorderWindowSeconds) {
      throw ParseError(line, "timestamp " + std::to_string(e.ts) +
                                 " is more than the 1 s reordering buffer behind " +
                                 std::to_string(max_ts));
    }
    max_ts = std::max(max_ts, e.ts);
    const double ts = e.ts;
    buffer.push(Pending{ts, line, std::move(e)});
    while (!buffer.empty() && buffer.top().ts < max_ts - kReorderWindowSeconds) {
      out.push_back(buffer.top().event);
      buffer.pop();
    }
  }
  while (!buffer.empty()) {
    out.push_back(buffer.top().event);
    buffer.pop();
  }
  return out;
}

std::string event_to_json_line(const PacketEvent& e) {
  const bool up = e.dir == Direction::kUp;
  const auto& src = up ? e.flow.client_addr : e.flow.server_addr;
  const auto& dst = up ? e.flow.server_addr : e.flow.client_addr;
  const auto sport = up ? e.flow.client_port : e.flow.server_port;
  const auto dport = up ? e.flow.server_port : e.flow.client_port;

  // Hand-formatted so the timestamp keeps exactly six decimals.
  char head[64];
  std::snprintf(head, sizeof head, "{\"ts\":%.6f,", e.ts);
  std::string s = head;
  s += "\"src\":" + json(src).dump() + ",\"sport\":" + std::to_string(sport);
  s += ",\"dst\":" + json(dst).dump() + ",\"dport\":" + std::to_string(dport);
  s += ",\"proto\":\"" + std::string(to_string(e.flow.transport)) + "\"";
  s += ",\"dir\":\"" + std::string(to_string(e.dir)) + "\"";
  s += ",\"ip_len\":" + std::to_string(e.ip_bytes);
  s += ",\"payload_len\":" + std::to_string(e.payload_bytes);
  if (e.tcp) {
    s += ",\"flags\":\"" + flags_to_string(e.tcp->flags) + "\"";
    s += ",\"seq\":" + std::to_string(e.tcp->seq);
    s += ",\"ack\":" + std::to_string(e.tcp->ack_no);
    s += ",\"rwnd\":" + std::to_string(e.tcp->recv_window);
  }
  if (!e.sni.empty()) s += ",\"sni\":" + json(e.sni).dump();
  s += "}";
  return s;
}

void write_event_stream(std::ostream& out, std::span<const PacketEvent> events) {
  for (const auto& e : events) out << event_to_json_line(e) << '\n';
}

std::vector<FlowRecord> assemble_flows(std::span<const PacketEvent> events, double idle_timeout) {
  std::vector<FlowRecord> flows;
  std::unordered_map<FlowKey, std::size_t, FlowKeyHash> open;
  for (const auto& e : events) {
    auto it = open.find(e.flow);
    if (it != open.end() && e.ts - flows[it->second].last_ts > idle_timeout) {
      open.erase(it);
      it = open.end();
    }
    if (it == open.end()) {
      FlowRecord rec;
      rec.key = e.flow;
      rec.first_ts = e.ts;
      rec.last_ts = e.ts;
      flows.push_back(std::move(rec));
      it = open.emplace(e.flow, flows.size() - 1).first;
    }
    auto& rec = flows[it->second];
    rec.packets.push_back(e);
    rec.last_ts = e.ts;
    if (rec.server_name.empty() && !e.sni.empty()) rec.server_name = e.sni;
  }
  return flows;
}

void write_flows(std::ostream& out, std::span<const FlowRecord> flows) {
  for (const auto& f : flows) {
    json j;
    j["client"] = f.key.client_addr;
    j["cport"] = f.key.client_port;
    j["server"] = f.key.server_addr;
    j["sport"] = f.key.server_port;
    j["proto"] = to_string(f.key.transport);
    j["first_ts"] = f.first_ts;
    j["last_ts"] = f.last_ts;
    j["sni"] = f.server_name;
    j["role"] = to_string(f.role);
    j["service"] = f.service;
    json pkts = json::array();
    for (const auto& p : f.packets) {
      json row = json::array({p.ts, p.is_up() ? "u" : "d", p.ip_bytes, p.payload_bytes});
      if (p.tcp) {
        row.push_back(flags_to_string(p.tcp->flags));
        row.push_back(p.tcp->seq);
        row.push_back(p.tcp->ack_no);
        row.push_back(p.tcp->recv_window);
      }
      if (!p.sni.empty()) {
        if (!p.tcp) row.insert(row.end(), {nullptr, nullptr, nullptr, nullptr});
        row.push_back(p.sni);
      }
      pkts.push_back(std::move(row));
    }
    j["packets"] = std::move(pkts);
    out << j.dump() << '\n';
  }
}

std::vector<FlowRecord> read_flows(std::istream& in) {
  std::vector<FlowRecord> flows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      FlowRecord f;
      f.key.client_addr = j.at("client").get<std::string>();
      f.key.client_port = j.at("cport").get<std::uint16_t>();
      f.key.server_addr = j.at("server").get<std::string>();
      f.key.server_port = j.at("sport").get<std::uint16_t>();
      const auto proto = j.at("proto").get<std::string>();
      if (proto != "tcp" && proto != "udp") throw ParseError(line, "bad proto");
      f.key.transport = proto == "tcp" ? Transport::kTcp : Transport::kUdp;
      f.first_ts = j.at("first_ts").get<double>();
      f.last_ts = j.at("last_ts").get<double>();
      f.server_name = j.value("sni", "");
      f.role = flow_role_from_string(j.value("role", "unlabeled"));
      f.service = j.value("service", "");
      for (const auto& row : j.at("packets")) {
        PacketEvent p;
        p.ts = row.at(0).get<double>();
        p.flow = f.key;
        p.dir = row.at(1).get<std::string>() == "u" ? Direction::kUp : Direction::kDown;
        p.ip_bytes = row.at(2).get<std::uint32_t>();
        p.payload_bytes = row.at(3).get<std::uint32_t>();
        if (f.key.transport == Transport::kTcp) {
          TcpHeader h;
          h.flags = flags_from_string(row.at(4).get<std::string>()).value_or(0);
          h.seq = row.at(5).get<std::uint32_t>();
          h.ack_no = row.at(6).get<std::uint32_t>();
          h.recv_window = row.at(7).get<std::uint32_t>();
          p.tcp = h;
        }
        if (row.size() > 8) p.sni = row.at(8).get<std::string>();
        f.packets.push_back(std::move(p));
      }
      flows.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw ParseError(line, std::string("malformed flow record: ") + e.what());
    }
  }
  return flows;
}

}  // namespace vqoe
