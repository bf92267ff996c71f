// vqoe: command-line front end for the synthetic corpus, ingest, session
// detection, feature extraction, training, prediction and evaluation.
//
// Exit codes: 0 ok, 1 usage error, 2 data error. Logs go to stderr.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vqoe/adapt.hpp"
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

void log(const std::string& msg) { std::cerr << "vqoe: " << msg << '\n'; }

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

fs::path manifest_path(const fs::path& csv) { return fs::path(csv.string() + ".manifest.json"); }

// "traces/movie-0001.flows.jsonl" -> "movie-0001"
std::string stem_id(const fs::path& p) {
  const auto name = p.filename().string();
  return name.substr(0, name.find('.'));
}

std::map<std::string, GroundTruthLabel> labels_by_id(const fs::path& p) {
  auto in = open_in(p);
  std::map<std::string, GroundTruthLabel> out;
  for (auto& l : read_labels(in)) {
    const auto id = l.session_id;
    if (!out.emplace(id, std::move(l)).second) throw DataError("duplicate label for " + id);
  }
  return out;
}

// Label of the 10 s bin that holds the window midpoint, or -1 outside the labels.
int bin_label_at(const GroundTruthLabel& l, double window_start, double window_len) {
  const double mid = window_start + 0.5 * window_len - l.start_ts;
  if (mid < 0.0) return -1;
  const auto j = static_cast<std::size_t>(std::floor(mid / 10.0));
  return j < l.bin_resolution.size() ? l.bin_resolution[j] : -1;
}

CLI::Validator regime_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          Regime::parse(s);
        } catch (const DataError& e) {
          return e.what();
        }
        return {};
      },
      "REGIME");
}

const std::vector<std::string> kLayerNames = {"net", "tran", "app", "net+tran", "net+app", "all"};

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out_dir;
  int n = 0;
};

int run_synth(const SynthArgs& a, std::uint64_t seed, bool seed_given) {
  auto in = open_in(a.config);
  SynthPlan plan = synth_plan_from_json(in);
  if (a.n > 0) plan.n_per_profile = a.n;
  if (seed_given) plan.seed = seed;
  const auto entries = generate_corpus(plan.profiles, plan.n_per_profile, plan.seed, a.out_dir);
  int retried = 0;
  for (const auto& e : entries) retried += e.rejected_attempts;
  log("wrote " + std::to_string(entries.size()) + " sessions to " + a.out_dir + " (" +
      std::to_string(retried) + " rejected draws)");
  return 0;
}

struct IngestArgs {
  std::string trace, out;
};

int run_ingest(const IngestArgs& a) {
  auto in = open_in(a.trace);
  const auto events = parse_event_stream(in);
  const auto flows = assemble_flows(events);
  auto out = open_out(a.out);
  write_flows(out, flows);
  log(std::to_string(events.size()) + " events, " + std::to_string(flows.size()) + " flows");
  return 0;
}

struct SessionsArgs {
  std::string flows, service_map, out;
  DetectionParams params;
};

std::vector<FlowRecord> load_labeled_flows(const std::string& flows_file, const ServiceMap& map,
                                           const DetectionParams& params) {
  auto in = open_in(flows_file);
  auto flows = read_flows(in);
  classify_flows(flows, map, params.video_payload_threshold);
  return flows;
}

ServiceMap load_map(const std::string& p) {
  auto in = open_in(p);
  return ServiceMap::from_json(in);
}

void name_sessions(std::vector<VideoSession>& sessions, const std::string& flows_file) {
  const auto base = stem_id(flows_file);
  for (std::size_t k = 0; k < sessions.size(); ++k) {
    sessions[k].id = k == 0 ? base : base + "." + std::to_string(k);
  }
}

int run_sessions(const SessionsArgs& a) {
  const auto map = load_map(a.service_map);
  const auto flows = load_labeled_flows(a.flows, map, a.params);
  auto sessions = detect_sessions(flows, a.params);
  name_sessions(sessions, a.flows);
  auto out = open_out(a.out);
  write_sessions(out, sessions, flows);
  log(std::to_string(sessions.size()) + " sessions");
  return 0;
}

struct FeaturesArgs {
  std::vector<std::string> sessions, flows;
  std::string service_map, labels, layers = "all", window = "startup", out;
  double bin_s = 10.0;
  bool adapt = false;
  DetectionParams params;
};

int run_features(const FeaturesArgs& a) {
  if (a.sessions.size() != a.flows.size()) {
    throw CLI::ValidationError("--sessions and --flows must be given in pairs");
  }
  const auto map = load_map(a.service_map);
  std::map<std::string, GroundTruthLabel> labels;
  if (!a.labels.empty()) labels = labels_by_id(a.labels);

  FeatureTable table;
  table.layer_set = layer_set_from_string(a.layers);
  table.window = a.window == "startup" ? Window::kStartup : Window::kBin;
  table.bin_seconds = a.bin_s;
  AdaptParams ap;
  ap.quic_request_threshold = a.params.quic_request_threshold;
  const std::vector<double> offsets = a.adapt ? adapt_offsets(ap) : std::vector<double>{0.0};

  std::size_t skipped = 0;
  for (std::size_t f = 0; f < a.sessions.size(); ++f) {
    const auto flows = load_labeled_flows(a.flows[f], map, a.params);
    auto sin = open_in(a.sessions[f]);
    for (auto s : read_sessions(sin)) {
      if (s.id.empty()) throw DataError(a.sessions[f] + ": session without session_id");
      if (!labels.empty()) {
        const auto it = labels.find(s.id);
        if (it == labels.end()) {
          log("no label for " + s.id + "; skipped");
          ++skipped;
          continue;
        }
        if (it->second.service != s.service) {
          throw DataError(s.id + ": label service " + it->second.service + " but detected " +
                          s.service);
        }
        align_to_label(s, flows, it->second, a.params.quic_request_threshold);
      } else {
        s.flows = session_flows(flows, s.service, s.start_ts, s.end_ts);
        s.segments = collect_segments(flows, s.service, s.start_ts, s.end_ts,
                                      a.params.quic_request_threshold);
      }
      for (double off : offsets) {
        const auto shifted = off == 0.0 ? s : shift_session(s, flows, off, ap.quic_request_threshold);
        const SessionFeatures sf(shifted, flows);
        try {
          if (table.window == Window::kStartup) {
            table.values.push_back(sf.startup(table.layer_set, ap.window_seconds).values);
            table.rows.push_back({s.id, s.service, 0, off, shifted.start_ts});
          } else {
            const auto bins = sf.bins(table.layer_set, a.bin_s);
            for (std::size_t i = 0; i < bins.size(); ++i) {
              table.values.push_back(bins[i].values);
              table.rows.push_back({s.id, s.service, static_cast<int>(i), off,
                                    shifted.start_ts + static_cast<double>(i) * a.bin_s});
            }
          }
        } catch (const DataError& e) {
          if (off == 0.0) throw DataError(s.id + ": " + e.what());
          // A shifted window may run off the end of a short trace.
        }
      }
    }
  }
  if (table.rows.empty()) throw DataError("no feature rows produced");
  auto out = open_out(a.out);
  write_feature_csv(out, table);
  auto mout = open_out(manifest_path(a.out));
  write_feature_manifest(mout, table);
  log(std::to_string(table.rows.size()) + " rows" +
      (skipped ? ", " + std::to_string(skipped) + " sessions without labels" : ""));
  return 0;
}

FeatureTable load_table(const std::string& csv) {
  auto in = open_in(csv);
  auto min = open_in(manifest_path(csv));
  return read_feature_table(in, min);
}

struct TrainArgs {
  std::string features, labels, target = "startup", regime = "composite", grid, model_out;
  bool adapt = false;
  int folds = 10;
  int trees = 100;
};

int run_train(const TrainArgs& a, std::uint64_t seed) {
  const auto table = load_table(a.features);
  const auto labels = labels_by_id(a.labels);
  const bool startup = a.target == "startup";
  if (startup != (table.window == Window::kStartup)) {
    throw DataError("target " + a.target + " does not match the " +
                    (table.window == Window::kStartup ? "startup" : "bins") + " feature table");
  }
  const ModelKind kind = startup ? ModelKind::kRegressor : ModelKind::kClassifier;

  Dataset pool;
  pool.feature_names = feature_names(table.layer_set);
  std::size_t unlabeled = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (!a.adapt && r.offset != 0.0) continue;
    const auto it = labels.find(r.session_id);
    if (it == labels.end()) {
      ++unlabeled;
      continue;
    }
    double y = 0.0;
    if (startup) {
      y = it->second.startup_delay;
    } else {
      // Adapted bins keep the label of the original bin under their midpoint.
      const int res = bin_label_at(it->second, r.start_ts - r.offset, table.bin_seconds);
      if (res < 0) {
        ++unlabeled;
        continue;
      }
      y = res;
    }
    pool.add_row(table.values[i], y, r.session_id, r.service);
  }
  if (unlabeled) log(std::to_string(unlabeled) + " rows without labels skipped");
  const Dataset data = assemble_regime(pool, Regime::parse(a.regime));

  Hyperparams hp{a.trees, std::nullopt, 1,
                 startup ? MaxFeatures::kThird : MaxFeatures::kSqrt, seed};
  if (!a.grid.empty()) {
    auto gin = open_in(a.grid);
    auto grid = HyperparamGrid::from_json(gin, kind);
    grid.seed = seed;
    const std::set<std::string> groups(data.groups.begin(), data.groups.end());
    const int folds = std::min<int>(a.folds, static_cast<int>(groups.size()));
    const auto result = grid_search(data, kind, grid, folds);
    hp = result.best;
    log("grid search: best score " + std::to_string(result.best_score) + " over " +
        std::to_string(result.points.size()) + " points, " + std::to_string(folds) + " folds");
  }
  const auto model = train(data, kind, hp);
  auto out = open_out(a.model_out);
  model.save(out);
  log("trained " + std::string(to_string(kind)) + " on " + std::to_string(data.rows()) +
      " rows (" + Regime::parse(a.regime).str() + ")");
  return 0;
}

struct PredictArgs {
  std::string model, features, out;
};

int run_predict(const PredictArgs& a) {
  auto min = open_in(a.model);
  const auto model = RandomForestModel::load(min);
  const auto table = load_table(a.features);
  const auto& names = feature_names(table.layer_set);
  std::vector<double> rows;
  for (const auto& v : table.values) rows.insert(rows.end(), v.begin(), v.end());

  auto out = open_out(a.out);
  out << "session_id,service,bin,offset,start_ts,prediction";
  for (int c : model.classes) out << ",p_" << c;
  out << '\n';
  char buf[64];
  auto prefix = [&](std::size_t i) {
    const auto& r = table.rows[i];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f", r.bin, r.offset, r.start_ts);
    out << r.session_id << ',' << r.service << ',' << buf;
  };
  if (model.kind == ModelKind::kRegressor) {
    const auto pred = model.predict_values(names, rows);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      prefix(i);
      std::snprintf(buf, sizeof buf, ",%.17g\n", pred[i]);
      out << buf;
    }
  } else {
    const auto pred = model.predict_classes(names, rows);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      prefix(i);
      out << ',' << pred[i].label;
      for (double p : pred[i].probabilities) {
        std::snprintf(buf, sizeof buf, ",%.17g", p);
        out << buf;
      }
      out << '\n';
    }
  }
  log(std::to_string(table.rows.size()) + " predictions");
  return 0;
}

struct PredRow {
  std::string session_id;
  double start_ts = 0.0;
  double offset = 0.0;
  double value = 0.0;
  std::vector<double> probs;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "not a number: '" + s + "'");
  }
}

struct EvaluateArgs {
  std::string pred, labels, report;
  double bin_s = 10.0;
};

int run_evaluate(const EvaluateArgs& a) {
  auto in = open_in(a.pred);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "prediction file is empty");
  const auto header = split_csv(line);
  if (header.size() < 6 || header[0] != "session_id" || header[5] != "prediction") {
    throw ParseError(1, "unexpected prediction header");
  }
  std::vector<int> classes;
  for (std::size_t i = 6; i < header.size(); ++i) {
    if (header[i].rfind("p_", 0) != 0) throw ParseError(1, "unexpected column " + header[i]);
    classes.push_back(static_cast<int>(to_double(header[i].substr(2), 1)));
  }
  const bool classify = !classes.empty();
  std::vector<PredRow> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError(n, "wrong number of columns");
    PredRow r;
    r.session_id = cells[0];
    r.offset = to_double(cells[3], n);
    r.start_ts = to_double(cells[4], n);
    r.value = to_double(cells[5], n);
    for (std::size_t i = 6; i < cells.size(); ++i) r.probs.push_back(to_double(cells[i], n));
    rows.push_back(std::move(r));
  }
  const auto labels = labels_by_id(a.labels);

  nlohmann::json report;
  std::size_t unmatched = 0;
  if (!classify) {
    std::vector<double> pred, truth;
    for (const auto& r : rows) {
      const auto it = labels.find(r.session_id);
      if (it == labels.end()) {
        ++unmatched;
        continue;
      }
      pred.push_back(r.value);
      truth.push_back(it->second.startup_delay);
    }
    if (pred.empty()) throw DataError("no predictions matched a label");
    report = to_json(regression_report(pred, truth));
    report["target"] = "startup";
  } else {
    const std::vector<int> ladder(kResolutionLadder.begin(), kResolutionLadder.end());
    std::vector<std::vector<double>> probs;
    std::vector<int> truth;
    for (const auto& r : rows) {
      const auto it = labels.find(r.session_id);
      const int res = it == labels.end() ? -1 : bin_label_at(it->second, r.start_ts - r.offset, a.bin_s);
      if (res < 0) {
        ++unmatched;
        continue;
      }
      std::vector<double> p(ladder.size(), 0.0);
      for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto pos = std::find(ladder.begin(), ladder.end(), classes[c]);
        if (pos == ladder.end()) throw DataError("class " + std::to_string(classes[c]) + " not in ladder");
        p[static_cast<std::size_t>(pos - ladder.begin())] = r.probs[c];
      }
      probs.push_back(std::move(p));
      truth.push_back(res);
    }
    if (probs.empty()) throw DataError("no predictions matched a label");
    report = to_json(classification_report(probs, truth, ladder));
    report["target"] = "resolution";
  }
  report["unmatched_rows"] = unmatched;
  auto out = open_out(a.report);
  out << report.dump(2) << '\n';
  if (unmatched) log(std::to_string(unmatched) + " rows had no label");
  return 0;
}

struct CompareArgs {
  std::string corpus, report;
  double holdout = 0.25;
  int trees = 100;
  bool no_specific = false, no_excluded = false;
  std::vector<std::string> layers = {"net", "net+tran", "net+app"};
};

int run_compare(const CompareArgs& a, std::uint64_t seed) {
  const auto samples = corpus_samples(a.corpus, ExtractOptions{});
  log("extracted " + std::to_string(samples.size()) + " sessions");
  CompareConfig cfg;
  cfg.layers.clear();
  for (const auto& l : a.layers) cfg.layers.push_back(layer_set_from_string(l));
  cfg.specific = !a.no_specific;
  cfg.excluded = !a.no_excluded;
  cfg.holdout_fraction = a.holdout;
  cfg.regressor.n_trees = cfg.classifier.n_trees = a.trees;
  cfg.regressor.seed = cfg.classifier.seed = seed;
  cfg.seed = seed;
  const auto split = holdout_split(samples, cfg.holdout_fraction, seed);
  const auto rows = compare_regimes(samples, split, cfg);
  auto out = open_out(a.report);
  write_compare_csv(out, rows);
  log(std::to_string(rows.size()) + " rows");
  return 0;
}

void add_detection_options(CLI::App* sub, DetectionParams& p) {
  sub->add_option("--spike-bps", p.spike_bps, "video rate that opens a session")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--silence-s", p.silence_gap, "gap that closes a session")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--quic-threshold", p.quic_request_threshold,
                  "UDP upstream payload above which a packet is a request")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video QoE inference from encrypted traffic"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  auto add_seed = [&](CLI::App* sub) {
    return sub->add_option("--seed", seed, "random seed")->capture_default_str();
  };

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  s_synth->add_option("--config", synth.config, "synth config JSON")->required();
  s_synth->add_option("--out-dir", synth.out_dir, "output directory")->required();
  s_synth->add_option("--n", synth.n, "sessions per profile (overrides the config)")
      ->check(CLI::PositiveNumber);
  auto* synth_seed = add_seed(s_synth);

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "packet events to flow records");
  s_ingest->add_option("--trace", ingest.trace, "packet-event JSONL")->required();
  s_ingest->add_option("--out", ingest.out, "flow file")->required();
  add_seed(s_ingest);

  SessionsArgs sess;
  auto* s_sessions = app.add_subcommand("sessions", "detect video sessions and segments");
  s_sessions->add_option("--flows", sess.flows, "flow file")->required();
  s_sessions->add_option("--service-map", sess.service_map, "service map JSON")->required();
  s_sessions->add_option("--out", sess.out, "sessions JSONL")->required();
  add_detection_options(s_sessions, sess.params);
  add_seed(s_sessions);

  FeaturesArgs feat;
  auto* s_features = app.add_subcommand("features", "feature table for sessions");
  s_features->add_option("--sessions", feat.sessions, "sessions JSONL (repeatable)")->required();
  s_features->add_option("--flows", feat.flows, "flow file paired with each --sessions")->required();
  s_features->add_option("--service-map", feat.service_map, "service map JSON")->required();
  s_features->add_option("--layers", feat.layers)->capture_default_str()->check(CLI::IsMember(kLayerNames));
  s_features->add_option("--window", feat.window)
      ->capture_default_str()
      ->check(CLI::IsMember({"startup", "bins"}));
  s_features->add_option("--bin-s", feat.bin_s, "bin length in seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_features->add_option("--labels", feat.labels, "labels JSONL; anchors each session at its true start");
  s_features->add_flag("--adapt", feat.adapt, "also emit rows with the start shifted by -5..5 s");
  s_features->add_option("--out", feat.out, "feature CSV (manifest written next to it)")->required();
  add_detection_options(s_features, feat.params);
  add_seed(s_features);

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train a random forest");
  s_train->add_option("--features", tr.features, "feature CSV")->required();
  s_train->add_option("--labels", tr.labels, "labels JSONL")->required();
  s_train->add_option("--target", tr.target)
      ->required()
      ->check(CLI::IsMember({"startup", "resolution"}));
  s_train->add_option("--regime", tr.regime, "specific:<svc>, composite or excluded:<svc>")
      ->capture_default_str()
      ->check(regime_validator());
  s_train->add_flag("--adapt", tr.adapt, "train on the shifted-start rows too");
  s_train->add_option("--grid", tr.grid, "hyperparameter grid JSON; enables grid search");
  s_train->add_option("--folds", tr.folds, "cross-validation folds for the grid search")
      ->capture_default_str()
      ->check(CLI::Range(2, 100));
  s_train->add_option("--trees", tr.trees, "trees when no grid is given")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_train->add_option("--model-out", tr.model_out, "model JSON")->required();
  add_seed(s_train);

  PredictArgs pr;
  auto* s_predict = app.add_subcommand("predict", "apply a model to a feature table");
  s_predict->add_option("--model", pr.model, "model JSON")->required();
  s_predict->add_option("--features", pr.features, "feature CSV")->required();
  s_predict->add_option("--out", pr.out, "prediction CSV")->required();
  add_seed(s_predict);

  EvaluateArgs ev;
  auto* s_evaluate = app.add_subcommand("evaluate", "score predictions against labels");
  s_evaluate->add_option("--pred", ev.pred, "prediction CSV")->required();
  s_evaluate->add_option("--labels", ev.labels, "labels JSONL")->required();
  s_evaluate->add_option("--report", ev.report, "report JSON")->required();
  s_evaluate->add_option("--bin-s", ev.bin_s, "bin length of the predicted windows")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_seed(s_evaluate);

  CompareArgs cmp;
  auto* s_compare = app.add_subcommand("compare", "specific / composite / excluded table");
  s_compare->add_option("--corpus", cmp.corpus, "corpus directory written by synth")->required();
  s_compare->add_option("--report", cmp.report, "CSV report")->required();
  s_compare->add_option("--holdout", cmp.holdout, "held-out session fraction per service")
      ->capture_default_str()
      ->check(CLI::Range(0.01, 0.99));
  s_compare->add_option("--trees", cmp.trees)->capture_default_str()->check(CLI::PositiveNumber);
  s_compare->add_option("--layers", cmp.layers)->capture_default_str()->check(CLI::IsMember(kLayerNames));
  s_compare->add_flag("--no-specific", cmp.no_specific);
  s_compare->add_flag("--no-excluded", cmp.no_excluded);
  add_seed(s_compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s_synth->parsed()) return run_synth(synth, seed, synth_seed->count() > 0);
    if (s_ingest->parsed()) return run_ingest(ingest);
    if (s_sessions->parsed()) return run_sessions(sess);
    if (s_features->parsed()) return run_features(feat);
    if (s_train->parsed()) return run_train(tr, seed);
    if (s_predict->parsed()) return run_predict(pr);
    if (s_evaluate->parsed()) return run_evaluate(ev);
    if (s_compare->parsed()) return run_compare(cmp, seed);
  } catch (const CLI::ValidationError& e) {
    log(std::string("usage: ") + e.what());
    return 1;
  } catch (const DataError& e) {
    log(std::string("error: ") + e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    log(std::string("error: ") + e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return 2;
  }
  return 1;
}
