// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is the number of failed criteria (capped at 10).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracle.hpp"
#include "vqoe/corpus.hpp"
#include "vqoe/features.hpp"
#include "vqoe/forest.hpp"
#include "vqoe/ingest.hpp"
#include "vqoe/metrics.hpp"
#include "vqoe/selection.hpp"
#include "vqoe/session.hpp"
#include "vqoe/synth.hpp"

namespace fs = std::filesystem;
using namespace vqoe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  C%-2d %-34s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

std::vector<CorpusProfile> varied_profiles(const ConditionRanges& r = {}) {
  std::vector<CorpusProfile> out;
  for (auto& p : builtin_profiles()) {
    CorpusProfile cp;
    cp.base.profile = p;
    cp.vary = r;
    out.push_back(std::move(cp));
  }
  return out;
}

ServiceMap map_of(const std::vector<CorpusProfile>& profiles) {
  std::vector<ServiceEntry> e;
  for (const auto& p : profiles) {
    const auto& d = p.base.profile.video_domain;
    e.push_back({p.base.profile.name, {d.substr(d.find('.') + 1)}, {}});
  }
  return ServiceMap(std::move(e));
}

bool same_segments(const std::vector<SegmentDownload>& a, const std::vector<SegmentDownload>& b) {
  return a == b;
}

// ---------------------------------------------------------------------------
// C1

std::vector<oracle::BuiltFlow> hand_built_flows() {
  using oracle::Exchange;
  std::vector<oracle::BuiltFlow> out;
  auto burst = [](double from, double to, std::uint32_t total, int packets) {
    std::vector<std::pair<double, std::uint32_t>> r;
    for (int i = 0; i < packets; ++i) {
      const double ts = quantize_us(from + (to - from) * (i + 1) / packets);
      r.emplace_back(ts, total / packets + (i == packets - 1 ? total % packets : 0));
    }
    return r;
  };
  std::uint16_t port = 50000;
  for (int variant = 0; variant < 5; ++variant) {
    const double t0 = 3.0 * variant;
    const Transport tr = variant % 2 ? Transport::kUdp : Transport::kTcp;
    const std::uint32_t req = tr == Transport::kUdp ? 151 + 40 * variant : 1 + 100 * variant;
    // Three requests with 500, 700 and 600 KB responses.
    out.push_back(oracle::build_flow({{t0, req, burst(t0, t0 + 1.9, 500'000, 40)},
                                      {t0 + 2, req, burst(t0 + 2, t0 + 3.9, 700'000, 50)},
                                      {t0 + 4, req, burst(t0 + 4, t0 + 6, 600'000, 45)}},
                                     tr, variant >= 2, port++));
    // A request that gets no response.
    out.push_back(oracle::build_flow({{t0, req, burst(t0, t0 + 1, 90'000, 9)},
                                      {t0 + 1.5, req, {}},
                                      {t0 + 2, req, burst(t0 + 2, t0 + 2.5, 30'000, 3)}},
                                     tr, true, port++));
    // Back-to-back requests: the next request follows the last byte closely.
    std::vector<Exchange> chain;
    double t = t0;
    for (int k = 0; k < 12; ++k) {
      chain.push_back({t, req, burst(t, t + 0.4 + 0.05 * k, 40'000 + 7'000u * k, 6 + k)});
      t = quantize_us(t + 0.4 + 0.05 * k + 0.001);
    }
    out.push_back(oracle::build_flow(chain, tr, true, port++));
    // Single request, single packet.
    out.push_back(oracle::build_flow({{t0 + 0.5, req, {{t0 + 0.6, 1200}}}}, tr, false, port++));
    // Long idle periods between requests.
    out.push_back(oracle::build_flow({{t0, req, burst(t0, t0 + 2, 1'000'000, 100)},
                                      {t0 + 30, req, burst(t0 + 30, t0 + 31, 250'000, 20)},
                                      {t0 + 90, req, burst(t0 + 90, t0 + 91, 10'000, 2)}},
                                     tr, variant % 3 == 0, port++));
    // Tiny request payloads (1 byte over TCP, just above the threshold over UDP).
    const std::uint32_t tiny = tr == Transport::kUdp ? 151 : 1;
    out.push_back(oracle::build_flow({{t0, tiny, burst(t0, t0 + 0.2, 5'000, 4)},
                                      {t0 + 0.3, tiny, burst(t0 + 0.3, t0 + 0.5, 5'000, 4)}},
                                     tr, true, port++));
    // Response packets with zero payload between data packets.
    {
      auto r = burst(t0, t0 + 1, 60'000, 10);
      r.insert(r.begin() + 3, {quantize_us(t0 + 0.31), 0});
      out.push_back(oracle::build_flow({{t0, req, r}, {t0 + 2, req, burst(t0 + 2, t0 + 3, 10'000, 2)}},
                                       tr, false, port++));
    }
    // Many segments with varying sizes.
    {
      std::vector<Exchange> ex;
      for (int k = 0; k < 25; ++k) {
        const double s = t0 + 4.0 * k;
        ex.push_back({s, req, burst(s, s + 0.5 + 0.1 * (k % 7), 100'000 + 37'000u * (k % 11), 20)});
      }
      out.push_back(oracle::build_flow(ex, tr, variant != 1, port++));
    }
    // Upstream-only flow: requests without any response.
    out.push_back(oracle::build_flow({{t0, req, {}}, {t0 + 1, req, {}}}, tr, false, port++));
    // Empty flow apart from the handshake-free first response packet that
    // precedes any request: no segments at all.
    {
      oracle::BuiltFlow b;
      b.flow.key = {"10.0.0.2", port++, "192.0.2.10", 443, tr};
      b.flow.packets.push_back(oracle::packet(b.flow.key, t0, Direction::kDown, 1000));
      b.flow.first_ts = b.flow.last_ts = t0;
      b.flow.role = FlowRole::kVideo;
      out.push_back(std::move(b));
    }
  }
  return out;
}

void criterion1() {
  const auto t0 = Clock::now();
  int bad_hand = 0, bad_rand = 0, checked_segments = 0;
  const auto hand = hand_built_flows();
  for (const auto& b : hand) {
    const auto got = detect_segments(b.flow);
    checked_segments += static_cast<int>(got.size());
    if (!same_segments(got, b.expected) || !same_segments(got, oracle::segments(b.flow))) ++bad_hand;
  }
  std::mt19937_64 rng(20240601);
  const int n_random = 500;
  for (int i = 0; i < n_random; ++i) {
    const auto f = oracle::random_flow(rng, i % 2 ? Transport::kUdp : Transport::kTcp);
    const auto got = detect_segments(f);
    checked_segments += static_cast<int>(got.size());
    if (!same_segments(got, oracle::segments(f))) ++bad_rand;
  }
  const double secs = seconds_since(t0);
  report(1, "segment detection oracle",
         hand.size() >= 50 && bad_hand == 0 && bad_rand == 0 && secs < 10.0,
         fmt("%zu hand-built (%d mismatched), %d random (%d mismatched), %d segments, %.2f s",
             hand.size(), bad_hand, n_random, bad_rand, checked_segments, secs));
}

// ---------------------------------------------------------------------------
// C2

void criterion2() {
  const auto t0 = Clock::now();
  ConditionRanges r;
  r.capacity_min = 500e3;
  r.capacity_max = 8e6;
  r.length_min = 100;
  r.length_max = 130;
  const auto profiles = varied_profiles(r);
  const auto map = map_of(profiles);
  std::size_t bins = 0, values = 0, mismatched = 0;
  double worst = 0.0;
  std::string first_bad;
  for (int k = 0; bins < 1000; ++k) {
    auto [entry, s] = generate_entry(profiles, static_cast<std::size_t>(k % 4), k / 4, 99);
    const auto ls = lab_session(s.events, map, s.label);
    const SessionFeatures sf(ls.session, ls.flows);
    const auto got = sf.bins(LayerSet::kAll, 10.0);
    const auto& names = feature_names(LayerSet::kAll);
    double prev = 0.0;
    for (std::size_t i = 0; i < got.size() && bins < 1000; ++i, ++bins) {
      const double a = ls.session.start_ts + 10.0 * static_cast<double>(i);
      const auto want = oracle::all_features(ls.session, ls.flows, a, a + 10.0, prev);
      prev = oracle::video_down_bps(ls.session, ls.flows, a, a + 10.0);
      if (want.size() != got[i].values.size()) {
        ++mismatched;
        first_bad = "width";
        continue;
      }
      for (std::size_t j = 0; j < want.size(); ++j, ++values) {
        const double x = got[i].values[j], y = want[j];
        const double err = std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)});
        worst = std::max(worst, err);
        if (!oracle::close(x, y, 1e-9)) {
          if (first_bad.empty()) first_bad = entry.session_id + " bin " + std::to_string(i) + " " + names[j];
          ++mismatched;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  report(2, "feature oracle", bins >= 1000 && mismatched == 0 && secs < 30.0,
         fmt("%zu bins, %zu values, %zu mismatched%s%s, worst rel err %.1e, %.2f s", bins, values,
             mismatched, first_bad.empty() ? "" : " first: ", first_bad.c_str(), worst, secs));
}

// ---------------------------------------------------------------------------
// C3

void criterion3() {
  std::vector<std::string> problems;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Constant target: every tree is a single leaf with that value.
  {
    Dataset d;
    d.feature_names = {"a", "b"};
    for (int i = 0; i < 50; ++i) d.add_row(std::vector<double>{u(rng), u(rng)}, 4.25, "g" + std::to_string(i), "s");
    const auto m = train(d, ModelKind::kRegressor, Hyperparams{20, std::nullopt, 1, MaxFeatures::kAll, 3});
    for (const auto& t : m.trees) {
      if (t.nodes() != 1) problems.push_back("constant target grew a split");
    }
    if (m.predict_value(std::vector<double>{0.3, 0.9}) != 4.25) problems.push_back("single-leaf value");
  }

  // XOR of two binary features, with noise columns.
  {
    Dataset d;
    d.feature_names = {"x1", "x2", "noise"};
    for (int i = 0; i < 400; ++i) {
      const int a = i % 2, b = (i / 2) % 2;
      d.add_row(std::vector<double>{a + 0.2 * u(rng), b + 0.2 * u(rng), u(rng)}, (a ^ b) ? 360 : 240,
                "g" + std::to_string(i), "s");
    }
    const auto m = train(d, ModelKind::kClassifier, Hyperparams{50, std::nullopt, 1, MaxFeatures::kAll, 5});
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const auto p = m.predict_class(std::vector<double>{a + 0.1, b + 0.1, 0.5});
        if (p.label != ((a ^ b) ? 360 : 240)) problems.push_back("xor quadrant misclassified");
      }
    }
  }

  // Averaging and importances on random data.
  Dataset reg, cls;
  reg.feature_names = cls.feature_names = {"f0", "f1", "f2", "f3", "f4"};
  for (int i = 0; i < 300; ++i) {
    std::vector<double> x(5);
    for (auto& v : x) v = u(rng);
    reg.add_row(x, 3 * x[0] + std::sin(6 * x[1]) + 0.1 * u(rng), "g" + std::to_string(i / 3), "s");
    const int c = x[0] + x[2] > 1.2 ? 720 : (x[3] > 0.5 ? 480 : 240);
    cls.add_row(x, c, "g" + std::to_string(i / 3), "s");
  }
  const Hyperparams hp{40, 8, 2, MaxFeatures::kSqrt, 11};
  const auto mr = train(reg, ModelKind::kRegressor, hp, Execution::kSerial);
  const auto mc = train(cls, ModelKind::kClassifier, hp, Execution::kSerial);
  double worst_mean = 0.0, worst_prob = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto x = reg.row(i);
    double mean = 0.0;
    for (const auto& t : mr.trees) mean += t.leaf_output(x)[0];
    mean /= static_cast<double>(mr.trees.size());
    worst_mean = std::max(worst_mean, std::abs(mean - mr.predict_value(x)));

    std::vector<double> avg(mc.classes.size(), 0.0);
    for (const auto& t : mc.trees) {
      const auto leaf = t.leaf_output(x);
      double tot = 0.0;
      for (double v : leaf) tot += v;
      for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += leaf[c] / tot;
    }
    const auto p = mc.predict_class(x);
    for (std::size_t c = 0; c < avg.size(); ++c) {
      worst_prob = std::max(worst_prob, std::abs(avg[c] / static_cast<double>(mc.trees.size()) - p.probabilities[c]));
    }
    std::vector<double> scaled(avg);
    if (p.label != mc.classes[argmax_low_tie(scaled)]) problems.push_back("class is not the probability argmax");
  }
  if (worst_mean > 1e-9) problems.push_back("regression is not the tree mean");
  if (worst_prob > 1e-9) problems.push_back("probabilities are not the tree average");
  double imp_r = 0.0, imp_c = 0.0;
  for (double v : mr.importances) imp_r += v;
  for (double v : mc.importances) imp_c += v;
  if (std::abs(imp_r - 1.0) > 1e-9 || std::abs(imp_c - 1.0) > 1e-9) problems.push_back("importances do not sum to 1");

  const auto pr = train(reg, ModelKind::kRegressor, hp, Execution::kParallel);
  const auto pc = train(cls, ModelKind::kClassifier, hp, Execution::kParallel);
  if (!(pr == mr) || !(pc == mc)) problems.push_back("serial and parallel forests differ");
  const auto vs = mr.predict_values(reg.feature_names, reg.features, Execution::kSerial);
  const auto vp = mr.predict_values(reg.feature_names, reg.features, Execution::kParallel);
  if (vs != vp) problems.push_back("serial and parallel predictions differ");

  report(3, "forest correctness", problems.empty(),
         problems.empty() ? fmt("leaf/xor ok, |mean err| %.1e, |prob err| %.1e, importance sums %.12f %.12f",
                                worst_mean, worst_prob, imp_r, imp_c)
                          : problems.front() + fmt(" (+%zu more)", problems.size() - 1));
}

// ---------------------------------------------------------------------------
// C4-C7

const CompareRow* find_row(const std::vector<CompareRow>& rows, const std::string& target,
                           const std::string& layers, const std::string& regime,
                           const std::string& svc) {
  for (const auto& r : rows) {
    if (r.target == target && r.layers == layers && r.regime == regime && r.test_service == svc) return &r;
  }
  return nullptr;
}

void criteria4to7() {
  const auto t0 = Clock::now();
  const int per_profile = 300;
  const auto profiles = varied_profiles();
  progress("generating and featurizing " + std::to_string(per_profile * 4) + " sessions");
  const auto samples = synth_samples(profiles, per_profile, 7, ExtractOptions{});
  progress(fmt("extraction %.1f s", seconds_since(t0)));
  const auto split = holdout_split(samples, 0.25, 3);
  CompareConfig cfg;
  cfg.specific = false;
  cfg.seed = 3;
  const auto rows = compare_regimes(samples, split, cfg);
  progress(fmt("regime comparison %.1f s", seconds_since(t0)));

  std::size_t test_sessions = 0;
  for (bool b : split) test_sessions += b;
  std::map<std::string, int> per_service;
  for (const auto& s : samples) ++per_service[s.service];

  const auto* cls = find_row(rows, "resolution", "net+app", "composite", "all");
  report(4, "net+app composite resolution",
         samples.size() >= 800 && per_service.size() == 4 && cls && cls->precision >= 0.90 &&
             cls->recall >= 0.90 && cls->fpr <= 0.06,
         fmt("%zu sessions, %zu held out, %zu bins: precision %.3f recall %.3f fpr %.4f",
             samples.size(), test_sessions, cls ? cls->samples : 0, cls ? cls->precision : 0.0,
             cls ? cls->recall : 0.0, cls ? cls->fpr : 1.0));

  const auto* reg = find_row(rows, "startup", "net+app", "composite", "all");
  report(5, "net+app composite startup",
         reg && reg->rmse <= 1.0 && reg->rmse <= 0.5 * reg->baseline_rmse,
         fmt("rmse %.3f s on %zu sessions with truth <= 10 s, mean baseline %.3f s (ratio %.2f)",
             reg ? reg->rmse : 0.0, reg ? reg->samples : 0, reg ? reg->baseline_rmse : 0.0,
             reg ? reg->rmse / reg->baseline_rmse : 0.0));

  const auto* p_net = find_row(rows, "resolution", "net", "composite", "all");
  const auto* p_tran = find_row(rows, "resolution", "net+tran", "composite", "all");
  const auto* r_tran = find_row(rows, "startup", "net+tran", "composite", "all");
  const bool order = p_net && p_tran && cls && reg && r_tran &&
                     cls->precision >= p_tran->precision - 0.01 &&
                     p_tran->precision >= p_net->precision - 0.01 && reg->rmse <= r_tran->rmse + 0.05;
  report(6, "layer-set ordering", order,
         fmt("precision net+app %.3f >= net+tran %.3f >= net %.3f; rmse net+app %.3f <= net+tran %.3f",
             cls ? cls->precision : 0.0, p_tran ? p_tran->precision : 0.0,
             p_net ? p_net->precision : 0.0, reg ? reg->rmse : 0.0, r_tran ? r_tran->rmse : 0.0));

  bool ok7 = true;
  std::string detail;
  for (const auto& [svc, n] : per_service) {
    const auto* rc = find_row(rows, "startup", "net+app", "composite", svc);
    const auto* re = find_row(rows, "startup", "net+app", "excluded:" + svc, svc);
    const auto* pc = find_row(rows, "resolution", "net+app", "composite", svc);
    const auto* pe = find_row(rows, "resolution", "net+app", "excluded:" + svc, svc);
    if (!rc || !re || !pc || !pe) {
      ok7 = false;
      continue;
    }
    const bool ok = re->rmse >= 1.5 * rc->rmse && pe->precision <= pc->precision - 0.15;
    ok7 = ok7 && ok;
    detail += fmt("%s%s rmse %.2f/%.2f prec %.2f/%.2f", detail.empty() ? "" : "; ", svc.c_str(),
                  re->rmse, rc->rmse, pe->precision, pc->precision);
  }
  report(7, "excluded vs composite", ok7, detail + " (excluded/composite)");
}

// ---------------------------------------------------------------------------
// C8

void criterion8() {
  const auto t0 = Clock::now();
  const auto profiles = varied_profiles();
  ExtractOptions opt;
  opt.adapt = true;
  // Per-session start error, uniform in [-5, 5], fixed by the session seed.
  auto injected = [](const CorpusEntry& e) {
    std::mt19937_64 r(e.config.rng_seed ^ 0x5eedULL);
    return quantize_us(std::uniform_real_distribution<double>(-5.0, 5.0)(r));
  };
  progress("featurizing shifted windows");
  const auto samples = synth_samples(profiles, 100, 21, opt, Execution::kParallel, injected);
  const auto split = holdout_split(samples, 0.25, 5);
  std::vector<SessionSamples> train_s, test_s;
  for (std::size_t i = 0; i < samples.size(); ++i) (split[i] ? test_s : train_s).push_back(samples[i]);
  const LayerSet L = LayerSet::kNetApp;
  const Hyperparams hp{100, std::nullopt, 1, MaxFeatures::kThird, 5};
  const auto plain_tr = startup_dataset(train_s, L, StartupVariant::kTrueStart);
  const auto adapt_tr = startup_dataset(train_s, L, StartupVariant::kAdapted);
  const auto plain = train(plain_tr, ModelKind::kRegressor, hp);
  const auto adapted = train(adapt_tr, ModelKind::kRegressor, hp);
  const double inf = std::numeric_limits<double>::infinity();
  const auto shifted_te = startup_dataset(test_s, L, StartupVariant::kInjected);
  const auto true_te = startup_dataset(test_s, L, StartupVariant::kTrueStart);
  const auto a_shift = score_startup(adapted, adapt_tr, shifted_te, inf, Execution::kParallel);
  const auto p_shift = score_startup(plain, plain_tr, shifted_te, inf, Execution::kParallel);
  const auto a_zero = score_startup(adapted, adapt_tr, true_te, inf, Execution::kParallel);
  const auto p_zero = score_startup(plain, plain_tr, true_te, inf, Execution::kParallel);
  report(8, "domain adaptation",
         a_shift.rmse <= p_shift.rmse && a_zero.rmse <= p_zero.rmse + 0.25,
         fmt("+-5 s error: adapted %.3f vs %.3f; no error: adapted %.3f vs %.3f (%zu test sessions, %.1f s)",
             a_shift.rmse, p_shift.rmse, a_zero.rmse, p_zero.rmse, a_shift.samples, seconds_since(t0)));
}

// ---------------------------------------------------------------------------
// C9

void criterion9() {
  ConditionRanges r;
  r.capacity_min = 1.5e6;
  r.cross_min = 20e3;
  const auto profiles = varied_profiles(r);
  const auto map = map_of(profiles);
  const DetectionParams params;

  int within = 0, total = 0;
  for (int k = 0; k < 40; ++k) {
    for (std::size_t p = 0; p < profiles.size(); ++p) {
      auto [entry, s] = generate_entry(profiles, p, k, 31);
      auto flows = assemble_flows(s.events);
      classify_flows(flows, map);
      const auto found = detect_sessions(flows, params);
      ++total;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& d : found) {
        if (d.service == s.label.service) best = std::min(best, std::abs(d.start_ts - s.label.start_ts));
      }
      if (best <= 5.0) ++within;
    }
  }
  const double frac = static_cast<double>(within) / total;

  // Back-to-back sessions of one service separated by more than the silence gap.
  int exact = 0, traces = 0;
  std::mt19937_64 rng(77);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = static_cast<std::size_t>(t % 4);
    const int bursts = 2 + t % 3;
    std::vector<PacketEvent> events;
    double prev_last = 0.0;
    for (int b = 0; b < bursts; ++b) {
      auto [entry, s] = generate_entry(profiles, p, 100 + t * 3 + b, 41);
      const auto& subnet = profiles[p].base.profile.server_subnet;
      double first_video = -1.0, last_video = 0.0;
      for (const auto& e : s.events) {
        const bool media = e.flow.server_addr == subnet + "10" || e.flow.server_addr == subnet + "11";
        if (media && e.dir == Direction::kDown && e.payload_bytes > 0) {
          if (first_video < 0) first_video = e.ts;
          last_video = e.ts;
        }
      }
      const double gap = params.silence_gap + 5.0 + 40.0 * std::uniform_real_distribution<double>()(rng);
      const double offset = b == 0 ? 0.0 : quantize_us(prev_last + gap - first_video);
      for (auto e : s.events) {
        e.ts = quantize_us(e.ts + offset);
        events.push_back(std::move(e));
      }
      prev_last = last_video + offset;
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const PacketEvent& a, const PacketEvent& b) { return a.ts < b.ts; });
    auto flows = assemble_flows(events);
    classify_flows(flows, map);
    const auto found = detect_sessions(flows, params);
    int n = 0;
    for (const auto& d : found) n += d.service == profiles[p].base.profile.name;
    exact += n == bursts;
    ++traces;
  }
  report(9, "session detection", frac >= 0.95 && exact == traces,
         fmt("start within 5 s: %d/%d (%.1f%%); exact count: %d/%d multi-session traces", within,
             total, 100.0 * frac, exact, traces));
}

// ---------------------------------------------------------------------------
// C10

// FNV-1a over everything a run writes or reports.
struct Digest {
  std::uint64_t h = 1469598103934665603ULL;
  std::size_t bytes = 0;
  void add(std::string_view s) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    bytes += s.size();
  }
  void add_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string buf(1 << 16, '\0');
    while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0) {
      add(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
  }
  bool operator==(const Digest&) const = default;
};

Digest run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  const auto profiles = varied_profiles();
  generate_corpus(profiles, 12, 5, dir);
  const auto samples = corpus_samples(dir, ExtractOptions{});
  const auto split = holdout_split(samples, 0.25, 9);
  CompareConfig cfg;
  cfg.layers = {LayerSet::kNetApp};
  cfg.regressor.n_trees = cfg.classifier.n_trees = 30;
  const auto rows = compare_regimes(samples, split, cfg);
  std::ostringstream out;
  write_compare_csv(out, rows);
  // Per-bin classification report of one composite model.
  std::vector<SessionSamples> tr, te;
  for (std::size_t i = 0; i < samples.size(); ++i) (split[i] ? te : tr).push_back(samples[i]);
  const auto model = train(bin_dataset(tr, LayerSet::kNetApp), ModelKind::kClassifier, cfg.classifier);
  const auto test = bin_dataset(te, LayerSet::kNetApp);
  const auto pred = model.predict_classes(test.feature_names, test.features);
  std::vector<std::vector<double>> probs;
  std::vector<int> truth;
  const std::vector<int> ladder(kResolutionLadder.begin(), kResolutionLadder.end());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<double> p(ladder.size(), 0.0);
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
      p[static_cast<std::size_t>(std::find(ladder.begin(), ladder.end(), model.classes[c]) - ladder.begin())] =
          pred[i].probabilities[c];
    }
    probs.push_back(p);
    truth.push_back(static_cast<int>(test.targets[i]));
  }
  out << to_json(classification_report(probs, truth, ladder)).dump(1);
  model.save(out);
  Digest d;
  d.add(out.str());
  for (const char* f : {"labels.jsonl", "manifest.json", "services.json"}) d.add_file(dir / f);
  for (const auto& s : samples) d.add_file(dir / "traces" / (s.session_id + ".jsonl"));
  return d;
}

void criterion10() {
  const auto base = fs::temp_directory_path() / ("vqoe-acceptance-" + std::to_string(::getpid()));
  const auto a = run_pipeline(base / "run1");
  const auto b = run_pipeline(base / "run2");
  fs::remove_all(base);
  report(10, "byte-identical reports", a == b && a.bytes > 0,
         fmt("%zu bytes of corpus, compare table, report and model per run; digests %016llx %016llx",
             a.bytes, static_cast<unsigned long long>(a.h), static_cast<unsigned long long>(b.h)));
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion filter: "acceptance 1 3 9".
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto want = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  const std::vector<std::pair<std::vector<int>, std::function<void()>>> all = {
      {{1}, criterion1}, {{2}, criterion2}, {{3}, criterion3},  {{4, 5, 6, 7}, criteria4to7},
      {{8}, criterion8}, {{9}, criterion9}, {{10}, criterion10}};
  for (const auto& [ids, fn] : all) {
    if (std::none_of(ids.begin(), ids.end(), want)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      for (int id : ids) report(id, "(aborted)", false, e.what());
    }
  }
  return std::min(failures, 10);
}
