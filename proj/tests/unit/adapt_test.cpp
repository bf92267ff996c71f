#include "doctest.h"
#include "testutil.hpp"
#include "vqoe/adapt.hpp"

using namespace vqoe;

namespace {

struct Fixture {
  std::vector<FlowRecord> flows;
  VideoSession session;
};

// Dense video transfer from t = 20 s to 80 s; a keep-alive packet at t = 0
// keeps the trace long enough for negative offsets.
Fixture fixture() {
  const auto k = tu::key();
  auto pk = tu::transfer(k, 20.0, 80.0, 0.01, 1000);
  pk.push_back(oracle::packet(k, 0.0, Direction::kUp, 0));
  Fixture f;
  f.flows = {tu::flow(k, pk)};
  f.session = {"s", "svc", 20.0, 80.0, {0}, detect_segments(f.flows[0])};
  return f;
}

}  // namespace

TEST_SUITE("adapt") {
  TEST_CASE("offset grid") {
    const auto o = adapt_offsets();
    REQUIRE(o.size() == 21);
    CHECK(o.front() == -5.0);
    CHECK(o.back() == 5.0);
    CHECK(std::count(o.begin(), o.end(), 0.0) == 1);
    for (std::size_t i = 1; i < o.size(); ++i) CHECK(o[i] - o[i - 1] == doctest::Approx(0.5));
    CHECK(adapt_offsets({2.0, 1.0}).size() == 5);
  }

  TEST_CASE("zero offset reproduces the unshifted vector") {
    const auto f = fixture();
    const auto a = domain_adapt(f.session, f.flows, LayerSet::kAll);
    REQUIRE(a.offsets.size() == 21);
    CHECK(a.skipped.empty());
    const auto zero = std::find(a.offsets.begin(), a.offsets.end(), 0.0) - a.offsets.begin();
    CHECK(a.vectors[static_cast<std::size_t>(zero)].values ==
          SessionFeatures(f.session, f.flows).startup(LayerSet::kAll).values);
  }

  TEST_CASE("an early start sees fewer bytes when traffic begins at the start") {
    const auto f = fixture();
    const auto a = domain_adapt(f.session, f.flows, LayerSet::kNet);
    const double early = tu::col(a.vectors.front(), "net_bytes_down");
    const double exact = tu::col(a.vectors[10], "net_bytes_down");
    CHECK(a.offsets.front() == -5.0);
    CHECK(early < exact);
    CHECK(early == doctest::Approx(exact / 2).epsilon(0.01));
  }

  TEST_CASE("offsets leaving the trace are skipped and reported") {
    auto f = fixture();
    f.session.start_ts = 2.0;
    const auto a = domain_adapt(f.session, f.flows, LayerSet::kNet);
    CHECK(a.offsets.size() + a.skipped.size() == 21);
    CHECK(a.skipped.size() == 6);  // -5 .. -2.5 start before t = 0
    CHECK(a.skipped.front() == -5.0);
  }

  TEST_CASE("shifted sessions re-collect their segments") {
    const auto k = tu::key();
    std::vector<PacketEvent> pk;
    for (int i = 0; i < 6; ++i) {
      const auto part = tu::transfer(k, 10.0 + 2.0 * i, 11.0 + 2.0 * i, 0.01, 1000,
                                     1000 + static_cast<std::uint32_t>(i) * 100'000);
      pk.insert(pk.end(), part.begin(), part.end());
    }
    const std::vector<FlowRecord> flows = {tu::flow(k, pk)};
    const VideoSession s{"s", "svc", 12.0, 40.0, {0}, collect_segments(flows, "svc", 12.0, 40.0, 150)};
    CHECK(s.segments.size() == 5);
    const auto earlier = shift_session(s, flows, -3.0);
    CHECK(earlier.start_ts == 9.0);
    CHECK(earlier.end_ts == s.end_ts);
    CHECK(earlier.segments.size() == 6);
    CHECK(shift_session(s, flows, 1.0).segments.size() == 4);
  }

  TEST_CASE("per-bin adaptation: labels follow the bin midpoint") {
    const auto f = fixture();
    const std::vector<int> labels = {240, 360, 480, 720, 1080, 1080};
    const auto bins = domain_adapt_bins(f.session, f.flows, LayerSet::kNet, labels);
    REQUIRE_FALSE(bins.empty());
    for (const auto& b : bins) {
      const double mid = b.offset + 10.0 * b.bin + 5.0;
      const auto original = static_cast<std::size_t>(std::floor(mid / 10.0));
      REQUIRE(original < labels.size());
      CHECK(b.label == labels[original]);
    }
  }
}
