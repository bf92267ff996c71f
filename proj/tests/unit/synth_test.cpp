#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "testutil.hpp"
#include "vqoe/ingest.hpp"
#include "vqoe/synth.hpp"

using namespace vqoe;
namespace fs = std::filesystem;

namespace {

ServiceProfile plain_profile(double b480) {
  ServiceProfile p;
  p.name = "plain";
  p.segment_duration = 4.0;
  p.ladder = {{240, b480 / 4}, {360, b480 / 2}, {480, b480}, {720, 2 * b480}, {1080, 4 * b480}};
  p.startup_buffer_threshold = 4.0;
  p.max_buffer = 60.0;
  p.abr_safety = 1.0;
  p.video_domain = "v.plain.example";
  p.page_domain = "www.plain.example";
  p.server_subnet = "203.0.113.";
  p.telemetry_interval = 1e6;
  return p;
}

SynthConfig plain_config(double capacity, double b480 = 1e6) {
  SynthConfig c;
  c.profile = plain_profile(b480);
  c.network.capacity_bps = capacity;
  c.session_length = 120.0;
  c.size_sigma = 0.0;
  c.rng_seed = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vqoe_unit_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("an almost infinite link starts playback after the first segment") {
    auto c = plain_config(1e11);
    c.network.base_rtt = 1e-4;
    const auto s = generate_session(c);
    CHECK(s.label.startup_delay > 0.0);
    CHECK(s.label.startup_delay < 0.05);
    double first_video = 0.0;
    for (const auto& e : s.exchanges) {
      if (e.kind == SynthExchange::Kind::kVideo) {
        first_video = e.completion_ts;
        break;
      }
    }
    CHECK(s.playback_start >= first_video);
    CHECK(s.playback_start - first_video < 1e-3);
  }

  TEST_CASE("throughput rule settles on 480p at twice its bitrate") {
    const auto s = generate_session(plain_config(2e6, 1e6));
    REQUIRE(s.decisions.size() > 10);
    CHECK(s.decisions.front().resolution == 240);
    for (std::size_t i = s.decisions.size() / 2; i < s.decisions.size(); ++i) {
      CHECK(s.decisions[i].resolution == 480);
    }
  }

  TEST_CASE("same seed, same bytes; different seed, different bytes") {
    auto c = tu::synth_config("movie", 3e6, 9);
    const auto a = generate_session(c);
    const auto b = generate_session(c);
    CHECK(a.events == b.events);
    CHECK(label_to_json_line(a.label) == label_to_json_line(b.label));
    c.rng_seed = 10;
    CHECK_FALSE(generate_session(c).events == a.events);
  }

  TEST_CASE("property: labels, byte conservation and ABR sanity") {
    const char* services[] = {"movie", "shortvideo", "live", "vod"};
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
      auto c = tu::synth_config(services[seed % 4], 1e6 * static_cast<double>(1 + seed % 6), seed);
      c.network.loss_rate = seed % 3 == 0 ? 0.005 : 0.0;
      const auto s = generate_session(c);

      CHECK(s.label.startup_delay == doctest::Approx(s.playback_start - s.label.start_ts).epsilon(1e-12));
      CHECK(s.label.startup_delay > 0.0);
      CHECK(s.label.startup_delay <= c.max_startup);
      CHECK(s.label.bin_resolution.size() == static_cast<std::size_t>(c.session_length / 10.0));
      for (int r : s.label.bin_resolution) CHECK(c.profile.bitrate(r) > 0.0);

      for (std::size_t i = 1; i < s.events.size(); ++i) CHECK(s.events[i - 1].ts <= s.events[i].ts);

      // bytes per exchange equal what segment detection recovers on its flow
      const auto flows = assemble_flows(s.events);
      std::map<FlowKey, std::vector<SegmentDownload>> detected;
      for (const auto& f : flows) detected[f.key] = detect_segments(f);
      std::map<FlowKey, std::vector<std::uint64_t>> sent;
      for (const auto& e : s.exchanges) {
        if (e.kind == SynthExchange::Kind::kVideo || e.kind == SynthExchange::Kind::kAudio) {
          sent[e.flow].push_back(e.bytes);
        }
      }
      for (const auto& [key, sizes] : sent) {
        std::vector<std::uint64_t> got;
        for (const auto& d : detected[key]) got.push_back(d.size_bytes);
        // detection also sees the handshake and manifest exchanges on the flow
        REQUIRE(got.size() >= sizes.size());
        CHECK(std::equal(sizes.rbegin(), sizes.rend(), got.rbegin()));
      }

      if (c.profile.abr_policy == AbrPolicy::kThroughputBased && c.network.schedule.empty()) {
        for (std::size_t i = 1; i < s.decisions.size(); ++i) {
          CHECK(s.decisions[i].bitrate_bps <= s.decisions[i].capacity_bps);
        }
      }
    }
  }

  TEST_CASE("services differ in segment counts and sizes") {
    std::map<std::string, std::pair<double, double>> shape;  // pre-playback count, mean size
    for (const auto& p : builtin_profiles()) {
      double count = 0, bytes = 0, n = 0;
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto s = generate_session(tu::synth_config(p.name, 5e6, seed));
        for (const auto& e : s.exchanges) {
          if (e.kind != SynthExchange::Kind::kVideo) continue;
          if (e.completion_ts <= s.playback_start) ++count;
          bytes += static_cast<double>(e.bytes);
          ++n;
        }
      }
      shape[p.name] = {count / 4, bytes / n};
    }
    for (auto a = shape.begin(); a != shape.end(); ++a) {
      for (auto b = std::next(a); b != shape.end(); ++b) {
        const bool counts_differ = std::abs(a->second.first - b->second.first) >= 1.0;
        const bool sizes_differ = std::abs(a->second.second / b->second.second - 1.0) > 0.2;
        const bool differ = counts_differ || sizes_differ;
        CHECK_MESSAGE(differ, a->first << " vs " << b->first);
      }
    }
    CHECK(shape["movie"].first > shape["shortvideo"].first);
  }

  TEST_CASE("slow links are rejected") {
    auto c = tu::synth_config("vod", 60e3, 2);
    CHECK_THROWS_AS(generate_session(c), SessionRejected);
  }

  TEST_CASE("config validation") {
    auto c = plain_config(1e6);
    c.profile.ladder = {{480, 1e6}, {360, 2e6}};
    CHECK_THROWS_AS(generate_session(c), DataError);
    c = plain_config(1e6);
    c.network.loss_rate = 0.7;
    CHECK_THROWS_AS(generate_session(c), DataError);
    c = plain_config(-1);
    CHECK_THROWS_AS(generate_session(c), DataError);
    CHECK_THROWS_AS(builtin_profile("nope"), DataError);
  }

  TEST_CASE("profiles, configs and labels round trip through JSON") {
    for (const auto& p : builtin_profiles()) CHECK(to_json(profile_from_json(to_json(p))) == to_json(p));
    auto c = tu::synth_config("live", 2e6, 4);
    c.network.schedule = {{30.0, 1e6}};
    CHECK(to_json(config_from_json(to_json(c))) == to_json(c));

    const auto s = generate_session(c);
    std::stringstream io;
    write_labels(io, {s.label});
    const auto back = read_labels(io);
    REQUIRE(back.size() == 1);
    CHECK(label_to_json_line(back[0]) == label_to_json_line(s.label));

    std::istringstream plan(R"({"seed": 3, "n": 2, "profiles": [{"service": "movie", "ranges": true}]})");
    const auto sp = synth_plan_from_json(plan);
    CHECK(sp.n_per_profile == 2);
    CHECK(sp.seed == 3);
    REQUIRE(sp.profiles.size() == 1);
    CHECK(sp.profiles[0].vary.has_value());
    std::istringstream empty(R"({"profiles": []})");
    CHECK_THROWS_AS(synth_plan_from_json(empty), DataError);
  }

  TEST_CASE("corpus files and regeneration") {
    std::vector<CorpusProfile> profiles;
    for (const char* s : {"live", "shortvideo"}) {
      CorpusProfile p;
      p.base = tu::synth_config(s, 3e6, 1);
      p.vary = ConditionRanges{};
      p.vary->capacity_min = 1e6;
      p.vary->length_min = 40.0;
      p.vary->length_max = 50.0;
      profiles.push_back(p);
    }

    const auto none = scratch("empty");
    CHECK(generate_corpus(profiles, 0, 1, none).empty());
    CHECK(fs::exists(none / "manifest.json"));
    CHECK(slurp(none / "labels.jsonl").empty());

    const auto a = scratch("a"), b = scratch("b");
    const auto entries = generate_corpus(profiles, 5, 7, a);
    CHECK(entries.size() == 10);
    int traces = 0;
    for (const auto& f : fs::directory_iterator(a / "traces")) traces += f.path().extension() == ".jsonl";
    CHECK(traces == 10);
    std::ifstream labels(a / "labels.jsonl");
    CHECK(read_labels(labels).size() == 10);

    regenerate_corpus(a / "manifest.json", b);
    CHECK(slurp(a / "labels.jsonl") == slurp(b / "labels.jsonl"));
    for (const auto& e : entries) {
      const auto name = fs::path("traces") / (e.session_id + ".jsonl");
      CHECK(slurp(a / name) == slurp(b / name));
    }
    for (const auto& d : {none, a, b}) fs::remove_all(d);
  }
}
