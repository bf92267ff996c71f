#include "vqoe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "vqoe/ingest.hpp"
#include "vqoe/metrics.hpp"
#include "vqoe/selection.hpp"

namespace vqoe {

void align_to_label(VideoSession& session, std::span<const FlowRecord> flows,
                    const GroundTruthLabel& label, std::uint32_t quic_request_threshold) {
  session.start_ts = label.start_ts;
  session.flows = session_flows(flows, session.service, session.start_ts, session.end_ts);
  session.segments = collect_segments(flows, session.service, session.start_ts, session.end_ts,
                                      quic_request_threshold);
}

LabeledSession lab_session(std::span<const PacketEvent> events, const ServiceMap& map,
                           const GroundTruthLabel& label, const DetectionParams& params) {
  LabeledSession out;
  out.label = label;
  out.flows = assemble_flows(events);
  classify_flows(out.flows, map, params.video_payload_threshold);
  const auto detected = detect_sessions(out.flows, params);
  const VideoSession* best = nullptr;
  double best_overlap = -1.0;
  for (const auto& s : detected) {
    if (s.service != label.service) continue;
    const double overlap =
        std::min(s.end_ts, label.end_ts) - std::max(s.start_ts, label.start_ts);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = &s;
    }
  }
  if (best) {
    out.session = *best;
  } else {
    // Too slow to trip the rate spike; fall back to the service's video flows.
    double end = -1.0;
    for (const auto& f : out.flows) {
      if (f.role == FlowRole::kVideo && f.service == label.service) end = std::max(end, f.last_ts);
    }
    if (end < label.start_ts) {
      throw DataError("no " + label.service + " video traffic found for " + label.session_id);
    }
    out.session.service = label.service;
    out.session.end_ts = end;
  }
  out.session.id = label.session_id;
  align_to_label(out.session, out.flows, label, params.quic_request_threshold);
  return out;
}

SessionSamples extract_samples(const LabeledSession& s, const ExtractOptions& opt) {
  SessionSamples out;
  out.session_id = s.label.session_id;
  out.service = s.label.service;
  out.startup_delay = s.label.startup_delay;
  const SessionFeatures sf(s.session, s.flows);
  out.startup = sf.startup(LayerSet::kAll, opt.adapt_params.window_seconds);
  out.bins = sf.bins(LayerSet::kAll, opt.bin_seconds);
  const auto n = std::min(out.bins.size(), s.label.bin_resolution.size());
  out.bins.resize(n);
  out.bin_labels.assign(s.label.bin_resolution.begin(),
                        s.label.bin_resolution.begin() + static_cast<long>(n));
  if (opt.adapt) {
    auto a = domain_adapt(s.session, s.flows, LayerSet::kAll, opt.adapt_params);
    out.adapted_offsets = std::move(a.offsets);
    out.adapted = std::move(a.vectors);
  }
  if (opt.injected_offset) {
    const auto shifted = shift_session(s.session, s.flows, *opt.injected_offset,
                                       opt.adapt_params.quic_request_threshold);
    out.injected = SessionFeatures(shifted, s.flows).startup(LayerSet::kAll,
                                                            opt.adapt_params.window_seconds);
  }
  return out;
}

namespace {

ServiceMap map_for(const std::vector<CorpusProfile>& profiles) {
  std::vector<ServiceEntry> entries;
  for (const auto& p : profiles) {
    const auto& prof = p.base.profile;
    if (std::any_of(entries.begin(), entries.end(),
                    [&](const auto& e) { return e.service == prof.name; })) {
      continue;
    }
    entries.push_back({prof.name, {prof.video_domain.substr(prof.video_domain.find('.') + 1)}, {}});
  }
  return ServiceMap(std::move(entries));
}

}  // namespace

std::vector<SessionSamples> synth_samples(const std::vector<CorpusProfile>& profiles,
                                          int n_per_profile, std::uint64_t seed,
                                          const ExtractOptions& opt, Execution exec,
                                          const std::function<double(const CorpusEntry&)>& injected) {
  const ServiceMap map = map_for(profiles);
  const auto total = static_cast<long>(profiles.size()) * n_per_profile;
  std::vector<SessionSamples> out(static_cast<std::size_t>(total));
  std::vector<std::string> errors(out.size());
  auto one = [&](long i) {
    try {
      const auto p = static_cast<std::size_t>(i / n_per_profile);
      const auto k = static_cast<int>(i % n_per_profile);
      auto [entry, session] = generate_entry(profiles, p, k, seed);
      const auto labeled = lab_session(session.events, map, session.label);
      session.events.clear();
      ExtractOptions o = opt;
      if (injected) o.injected_offset = injected(entry);
      out[static_cast<std::size_t>(i)] = extract_samples(labeled, o);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < total; ++i) one(i);
  } else {
    for (long i = 0; i < total; ++i) one(i);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return out;
}

std::vector<SessionSamples> corpus_samples(const std::filesystem::path& dir,
                                           const ExtractOptions& opt, Execution exec) {
  std::ifstream lin(dir / "labels.jsonl");
  if (!lin) throw DataError("cannot open " + (dir / "labels.jsonl").string());
  const auto labels = read_labels(lin);
  std::ifstream min(dir / "services.json");
  if (!min) throw DataError("cannot open " + (dir / "services.json").string());
  const auto map = ServiceMap::from_json(min);

  std::vector<SessionSamples> out(labels.size());
  std::vector<std::string> errors(labels.size());
  auto one = [&](long i) {
    const auto& label = labels[static_cast<std::size_t>(i)];
    try {
      const auto path = dir / "traces" / (label.session_id + ".jsonl");
      std::ifstream tin(path);
      if (!tin) throw DataError("cannot open " + path.string());
      const auto events = parse_event_stream(tin);
      out[static_cast<std::size_t>(i)] = extract_samples(lab_session(events, map, label), opt);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = label.session_id + ": " + e.what();
    }
  };
  const auto n = static_cast<long>(labels.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return out;
}

Dataset startup_dataset(std::span<const SessionSamples> samples, LayerSet layers,
                        StartupVariant variant) {
  Dataset d;
  d.feature_names = feature_names(layers);
  for (const auto& s : samples) {
    switch (variant) {
      case StartupVariant::kTrueStart:
        d.add_row(project(s.startup, layers).values, s.startup_delay, s.session_id, s.service);
        break;
      case StartupVariant::kInjected:
        if (!s.injected) throw DataError(s.session_id + " has no injected-offset vector");
        d.add_row(project(*s.injected, layers).values, s.startup_delay, s.session_id, s.service);
        break;
      case StartupVariant::kAdapted:
        for (const auto& v : s.adapted) {
          d.add_row(project(v, layers).values, s.startup_delay, s.session_id, s.service);
        }
        break;
    }
  }
  return d;
}

Dataset bin_dataset(std::span<const SessionSamples> samples, LayerSet layers) {
  Dataset d;
  d.feature_names = feature_names(layers);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.bins.size(); ++i) {
      d.add_row(project(s.bins[i], layers).values, s.bin_labels[i], s.session_id, s.service);
    }
  }
  return d;
}

std::vector<bool> holdout_split(std::span<const SessionSamples> samples, double fraction,
                                std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) throw DataError("holdout fraction must be in (0, 1)");
  std::map<std::string, std::vector<std::string>> by_service;
  for (const auto& s : samples) by_service[s.service].push_back(s.session_id);
  std::set<std::string> test;
  for (auto& [svc, ids] : by_service) {
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(svc));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size()))));
    test.insert(ids.begin(), ids.begin() + static_cast<long>(std::min(k, ids.size())));
  }
  std::vector<bool> out;
  for (const auto& s : samples) out.push_back(test.contains(s.session_id));
  return out;
}

StartupScore score_startup(const RandomForestModel& model, const Dataset& train_set,
                           const Dataset& test_set, double truth_max, Execution exec) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < test_set.rows(); ++i) {
    if (test_set.targets[i] <= truth_max) keep.push_back(i);
  }
  StartupScore s;
  s.samples = keep.size();
  if (keep.empty()) return s;
  const Dataset t = test_set.subset(keep);
  const auto pred = model.predict_values(t.feature_names, t.features, exec);
  double mean = 0.0;
  for (double y : train_set.targets) mean += y;
  mean /= static_cast<double>(train_set.rows());
  const std::vector<double> base(t.rows(), mean);
  s.rmse = rmse(pred, t.targets);
  s.baseline_rmse = rmse(base, t.targets);
  return s;
}

ResolutionScore score_resolution(const RandomForestModel& model, const Dataset& test_set,
                                 Execution exec) {
  ResolutionScore s;
  s.samples = test_set.rows();
  if (test_set.rows() == 0) return s;
  const auto pred = model.predict_classes(test_set.feature_names, test_set.features, exec);
  const std::vector<int> ladder(kResolutionLadder.begin(), kResolutionLadder.end());
  std::vector<std::vector<double>> probs;
  std::vector<int> truth;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<double> row(ladder.size(), 0.0);
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
      const auto it = std::find(ladder.begin(), ladder.end(), model.classes[c]);
      if (it == ladder.end()) throw DataError("model class outside the resolution ladder");
      row[static_cast<std::size_t>(it - ladder.begin())] = pred[i].probabilities[c];
    }
    probs.push_back(std::move(row));
    truth.push_back(static_cast<int>(test_set.targets[i]));
  }
  const auto r = classification_report(probs, truth, ladder);
  s.precision = r.precision;
  s.recall = r.recall;
  s.fpr = r.fpr;
  return s;
}

std::vector<CompareRow> compare_regimes(std::span<const SessionSamples> samples,
                                        const std::vector<bool>& is_test, const CompareConfig& cfg) {
  if (is_test.size() != samples.size()) throw DataError("holdout flags do not match samples");
  std::vector<SessionSamples> train_s, test_s;
  std::set<std::string> services;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (is_test[i] ? test_s : train_s).push_back(samples[i]);
    services.insert(samples[i].service);
  }
  std::vector<Regime> regimes = {Regime::composite()};
  for (const auto& s : services) {
    if (cfg.specific) regimes.push_back(Regime::specific(s));
  }
  for (const auto& s : services) {
    if (cfg.excluded && services.size() > 1) regimes.push_back(Regime::excluded(s));
  }

  std::vector<CompareRow> rows;
  for (LayerSet layers : cfg.layers) {
    const std::string lname(to_string(layers));
    const Dataset su_train = startup_dataset(train_s, layers);
    const Dataset su_test = startup_dataset(test_s, layers);
    const Dataset bin_train = bin_dataset(train_s, layers);
    const Dataset bin_test = bin_dataset(test_s, layers);
    for (const auto& regime : regimes) {
      std::vector<std::string> targets_of;
      if (regime.kind == Regime::Kind::kComposite) {
        targets_of.assign(services.begin(), services.end());
        targets_of.push_back("all");
      } else {
        targets_of.push_back(regime.service);
      }
      const Dataset su_tr = assemble_regime(su_train, regime);
      const Dataset bin_tr = assemble_regime(bin_train, regime);
      const auto reg = train(su_tr, ModelKind::kRegressor, cfg.regressor, cfg.exec);
      const auto cls = train(bin_tr, ModelKind::kClassifier, cfg.classifier, cfg.exec);
      for (const auto& svc : targets_of) {
        const Regime pick = svc == "all" ? Regime::composite() : Regime::specific(svc);
        auto select = [&](const Dataset& d) {
          std::vector<std::size_t> keep;
          for (std::size_t i = 0; i < d.rows(); ++i) {
            if (pick.admits(d.services[i])) keep.push_back(i);
          }
          return d.subset(keep);
        };
        const auto st = score_startup(reg, su_tr, select(su_test), cfg.startup_truth_max, cfg.exec);
        CompareRow r{"startup", lname, regime.str(), svc, st.samples, st.rmse, st.baseline_rmse};
        rows.push_back(r);
        const auto rs = score_resolution(cls, select(bin_test), cfg.exec);
        CompareRow c{"resolution", lname, regime.str(), svc, rs.samples};
        c.precision = rs.precision;
        c.recall = rs.recall;
        c.fpr = rs.fpr;
        rows.push_back(c);
      }
    }
  }
  return rows;
}

void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows) {
  out << "target,layers,regime,test_service,samples,rmse,baseline_rmse,precision,recall,fpr\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f", r.samples, r.rmse,
                  r.baseline_rmse, r.precision, r.recall, r.fpr);
    out << r.target << ',' << r.layers << ',' << r.regime << ',' << r.test_service << ',' << buf
        << '\n';
  }
}

}  // namespace vqoe
