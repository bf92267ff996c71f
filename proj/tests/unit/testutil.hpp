// Small builders shared by the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oracle.hpp"
#include "vqoe/corpus.hpp"
#include "vqoe/features.hpp"
#include "vqoe/synth.hpp"
#include "vqoe/types.hpp"

namespace tu {

inline vqoe::FlowKey key(std::uint16_t client_port = 50000,
                         vqoe::Transport t = vqoe::Transport::kTcp,
                         std::string server = "198.51.100.10") {
  return {"10.0.0.2", client_port, std::move(server), 443, t};
}

inline vqoe::FlowRecord flow(vqoe::FlowKey k, std::vector<vqoe::PacketEvent> packets,
                             vqoe::FlowRole role = vqoe::FlowRole::kVideo,
                             std::string service = "svc") {
  vqoe::FlowRecord f;
  f.key = std::move(k);
  std::stable_sort(packets.begin(), packets.end(),
                   [](const auto& a, const auto& b) { return a.ts < b.ts; });
  f.packets = std::move(packets);
  if (!f.packets.empty()) {
    f.first_ts = f.packets.front().ts;
    f.last_ts = f.packets.back().ts;
  }
  f.role = role;
  f.service = std::move(service);
  return f;
}

// Steady downstream transfer: one packet of `payload` bytes every `step`
// seconds in [from, to), plus a request upstream at `from`.
inline std::vector<vqoe::PacketEvent> transfer(const vqoe::FlowKey& k, double from, double to,
                                               double step, std::uint32_t payload,
                                               std::uint32_t seq0 = 1000) {
  std::vector<vqoe::PacketEvent> out;
  out.push_back(oracle::packet(k, from, vqoe::Direction::kUp, 400, vqoe::tcp_flag::kAck, 1, seq0));
  std::uint32_t seq = seq0;
  const auto n = static_cast<long>(std::llround((to - from) / step));
  for (long i = 0; i < n; ++i) {
    out.push_back(oracle::packet(k, vqoe::quantize_us(from + static_cast<double>(i) * step),
                                 vqoe::Direction::kDown, payload,
                                 vqoe::tcp_flag::kAck, seq, 401));
    seq += payload;
  }
  return out;
}

inline double col(const vqoe::FeatureVector& v, std::string_view name) {
  const auto& names = v.names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no feature " + std::string(name));
  return v.values[static_cast<std::size_t>(it - names.begin())];
}

// Suffix map covering the built-in services.
inline vqoe::ServiceMap builtin_map() {
  std::vector<vqoe::ServiceEntry> e;
  for (const auto& p : vqoe::builtin_profiles()) {
    e.push_back({p.name, {p.video_domain.substr(p.video_domain.find('.') + 1)}, {}});
  }
  return vqoe::ServiceMap(std::move(e));
}

inline vqoe::SynthConfig synth_config(std::string_view service, double capacity,
                                      std::uint64_t seed, double length = 60.0) {
  vqoe::SynthConfig c;
  c.profile = vqoe::builtin_profile(service);
  c.network.capacity_bps = capacity;
  c.session_length = length;
  c.cross_traffic_rate = 50e3;
  c.rng_seed = seed;
  return c;
}

}  // namespace tu
