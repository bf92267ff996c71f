#include <random>
#include <sstream>

#include "doctest.h"
#include "testutil.hpp"
#include "vqoe/session.hpp"

using namespace vqoe;

namespace {

ServiceMap example_map() {
  return ServiceMap({{"tube", {"googlevideo.example"}, {}}, {"flix", {}, {"203.0.113.0/24"}}});
}

// 5 Mb/s of downstream payload for `len` seconds starting at `t`.
std::vector<PacketEvent> burst(const FlowKey& k, double t, double len) {
  return tu::transfer(k, t, t + len, 0.01, 6250);
}

}  // namespace

TEST_SUITE("session") {
  TEST_CASE("service map: suffix on a label boundary, then CIDR") {
    const auto map = example_map();
    CHECK(map.match("r3---x.googlevideo.example", "1.1.1.1") == "tube");
    CHECK(map.match("googlevideo.example", "1.1.1.1") == "tube");
    CHECK(map.match("xgooglevideo.example", "1.1.1.1").empty());
    CHECK(map.match("", "203.0.113.77") == "flix");
    CHECK(map.match("", "203.0.114.1").empty());
    CHECK_THROWS_AS(ServiceMap({{"a", {}, {}}, {"a", {}, {}}}), DataError);

    std::stringstream io;
    map.to_json(io);
    const auto back = ServiceMap::from_json(io);
    CHECK(back.match("r3---x.googlevideo.example", "") == "tube");
    CHECK(back.match("", "203.0.113.1") == "flix");
  }

  TEST_CASE("classification: video, service non-video, other") {
    std::vector<FlowRecord> flows;
    auto big = tu::flow(tu::key(1), tu::transfer(tu::key(1), 0, 50, 0.001, 1000), FlowRole::kUnlabeled, "");
    big.server_name = "r3---x.googlevideo.example";
    auto small = tu::flow(tu::key(2), tu::transfer(tu::key(2), 0, 1, 0.01, 1000), FlowRole::kUnlabeled, "");
    small.server_name = "www.googlevideo.example";
    auto stranger = tu::flow(tu::key(3, Transport::kTcp, "8.8.8.8"),
                             tu::transfer(tu::key(3, Transport::kTcp, "8.8.8.8"), 0, 50, 0.001, 1000),
                             FlowRole::kUnlabeled, "");
    flows = {big, small, stranger};
    classify_flows(flows, example_map());
    CHECK(flows[0].payload_bytes(Direction::kDown) == 50'000'000);
    CHECK(flows[0].role == FlowRole::kVideo);
    CHECK(flows[0].service == "tube");
    CHECK(flows[1].role == FlowRole::kServiceNonVideo);
    CHECK(flows[2].role == FlowRole::kOther);
    CHECK_THROWS_AS(classify_flows(flows, ServiceMap{}), DataError);
  }

  TEST_CASE("segments: the three-request example") {
    const auto built = oracle::build_flow(
        {{0.0, 300, {{0.5, 250'000}, {1.5, 250'000}}},
         {2.0, 300, {{2.5, 350'000}, {3.5, 350'000}}},
         {4.0, 300, {{4.5, 300'000}, {6.0, 300'000}}}},
        Transport::kTcp, true);
    const auto segs = detect_segments(built.flow);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].size_bytes == 500'000);
    CHECK(segs[1].size_bytes == 700'000);
    CHECK(segs[2].size_bytes == 600'000);
    CHECK(segs[2].request_ts == 4.0);
    CHECK(segs[2].completion_ts == 6.0);
    CHECK(segs == built.expected);
  }

  TEST_CASE("segments: QUIC threshold and silent uplink") {
    const auto k = tu::key(7, Transport::kUdp);
    auto f = tu::flow(k, {oracle::packet(k, 0.0, Direction::kUp, 100),
                          oracle::packet(k, 0.1, Direction::kDown, 1200)});
    CHECK(detect_segments(f).empty());
    f = tu::flow(k, {oracle::packet(k, 0.0, Direction::kUp, 151),
                     oracle::packet(k, 0.1, Direction::kDown, 1200)});
    REQUIRE(detect_segments(f).size() == 1);
    CHECK(detect_segments(f, 200).empty());

    const auto t = tu::key(8);
    f = tu::flow(t, {oracle::packet(t, 0.0, Direction::kUp, 0), oracle::packet(t, 0.1, Direction::kDown, 1200)});
    CHECK(detect_segments(f).empty());
  }

  TEST_CASE("property: segments match brute-force attribution") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
      const auto f = oracle::random_flow(rng, i % 2 ? Transport::kUdp : Transport::kTcp);
      const auto segs = detect_segments(f);
      CHECK(segs == oracle::segments(f));
      std::uint64_t up_to = 0, total = 0;
      for (std::size_t j = 0; j < segs.size(); ++j) {
        CHECK(segs[j].request_ts <= segs[j].completion_ts);
        if (j) CHECK(segs[j - 1].request_ts < segs[j].request_ts);
        total += segs[j].size_bytes;
      }
      // every downstream byte after the first request is attributed
      if (!segs.empty()) {
        for (const auto& p : f.packets) {
          if (!p.is_up() && p.ts >= segs.front().request_ts) up_to += p.payload_bytes;
        }
        CHECK(total <= up_to);
      }
    }
  }

  TEST_CASE("sessions: silence, one burst, two bursts") {
    CHECK(detect_sessions(std::vector<FlowRecord>{}).empty());

    const auto k = tu::key(9);
    const std::vector<FlowRecord> idle = {tu::flow(k, {oracle::packet(k, 0.0, Direction::kDown, 100)})};
    CHECK(detect_sessions(idle).empty());

    std::vector<FlowRecord> one = {tu::flow(k, burst(k, 100.0, 10.0))};
    auto s = detect_sessions(one);
    REQUIRE(s.size() == 1);
    CHECK(s[0].service == "svc");
    CHECK(s[0].start_ts <= 100.0);
    CHECK(s[0].start_ts > 94.9);
    CHECK(s[0].end_ts >= 110.0 - 0.02);
    CHECK(s[0].end_ts <= 115.0);
    CHECK(s[0].segments.size() == 1);
    CHECK(s[0].flows == std::vector<std::size_t>{0});

    auto pk = burst(k, 100.0, 10.0);
    const auto second = burst(k, 150.0, 10.0);
    pk.insert(pk.end(), second.begin(), second.end());
    const std::vector<FlowRecord> two = {tu::flow(k, pk)};
    s = detect_sessions(two);
    REQUIRE(s.size() == 2);
    CHECK(s[0].end_ts < s[1].start_ts);
    CHECK(s[1].start_ts > 140.0);

    // a gap shorter than the silence threshold does not split
    pk = burst(k, 100.0, 10.0);
    const auto close = burst(k, 125.0, 10.0);
    pk.insert(pk.end(), close.begin(), close.end());
    CHECK(detect_sessions(std::vector<FlowRecord>{tu::flow(k, pk)}).size() == 1);
  }

  TEST_CASE("sessions are per service and ignore non-video flows") {
    const auto a = tu::key(10), b = tu::key(11, Transport::kTcp, "198.51.100.99");
    std::vector<FlowRecord> flows = {tu::flow(a, burst(a, 10.0, 10.0)),
                                     tu::flow(b, burst(b, 10.0, 10.0), FlowRole::kVideo, "other"),
                                     tu::flow(tu::key(12), burst(tu::key(12), 80.0, 10.0),
                                              FlowRole::kServiceNonVideo)};
    const auto s = detect_sessions(flows);
    REQUIRE(s.size() == 2);
    CHECK(s[0].service != s[1].service);
  }

  TEST_CASE("session files round trip") {
    const auto k = tu::key(13);
    const std::vector<FlowRecord> flows = {tu::flow(k, burst(k, 5.0, 12.0))};
    const auto sessions = detect_sessions(flows);
    std::stringstream io;
    write_sessions(io, sessions, flows);
    const auto back = read_sessions(io);
    REQUIRE(back.size() == sessions.size());
    CHECK(back[0].id == sessions[0].id);
    CHECK(back[0].start_ts == sessions[0].start_ts);
    CHECK(back[0].end_ts == sessions[0].end_ts);
    // segments keep timing and size; the flow is re-derived from the flow file
    REQUIRE(back[0].segments.size() == sessions[0].segments.size());
    for (std::size_t i = 0; i < back[0].segments.size(); ++i) {
      CHECK(back[0].segments[i].request_ts == sessions[0].segments[i].request_ts);
      CHECK(back[0].segments[i].completion_ts == sessions[0].segments[i].completion_ts);
      CHECK(back[0].segments[i].size_bytes == sessions[0].segments[i].size_bytes);
    }
  }
}
