// End-to-end sample extraction over labeled traces and the regime comparison
// table built on top of it.
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vqoe/adapt.hpp"
#include "vqoe/features.hpp"
#include "vqoe/forest.hpp"
#include "vqoe/session.hpp"
#include "vqoe/synth.hpp"

namespace vqoe {

struct LabeledSession {
  VideoSession session;
  std::vector<FlowRecord> flows;
  GroundTruthLabel label;
};

// Moves the session start to the ground-truth start and re-collects its
// flows and segments.
void align_to_label(VideoSession& session, std::span<const FlowRecord> flows,
                    const GroundTruthLabel& label,
                    std::uint32_t quic_request_threshold = DetectionParams{}.quic_request_threshold);

// Ingests a trace, labels flows and returns the labeled session anchored at
// the ground-truth start. The end comes from session detection. Throws
// DataError when the label's service has no video traffic in the trace.
LabeledSession lab_session(std::span<const PacketEvent> events, const ServiceMap& map,
                           const GroundTruthLabel& label, const DetectionParams& params = {});

struct ExtractOptions {
  double bin_seconds = 10.0;
  bool adapt = false;                    // also compute the shifted startup vectors
  AdaptParams adapt_params;
  std::optional<double> injected_offset; // startup vector with the start moved by this much
};

// Feature vectors of one session, computed once for all layers; layer
// subsets are projections.
struct SessionSamples {
  std::string session_id;
  std::string service;
  double startup_delay = 0.0;
  FeatureVector startup;
  std::vector<FeatureVector> bins;
  std::vector<int> bin_labels;  // aligned with bins
  std::vector<double> adapted_offsets;
  std::vector<FeatureVector> adapted;
  std::optional<FeatureVector> injected;
};

SessionSamples extract_samples(const LabeledSession& s, const ExtractOptions& opt = {});

// Generates every corpus session in memory and extracts its samples without
// keeping packets around. Sessions are independent, so the parallel path
// returns exactly what the serial one does.
std::vector<SessionSamples> synth_samples(const std::vector<CorpusProfile>& profiles,
                                          int n_per_profile, std::uint64_t seed,
                                          const ExtractOptions& opt,
                                          Execution exec = Execution::kParallel,
                                          const std::function<double(const CorpusEntry&)>& injected = {});

// Loads <dir>/labels.jsonl, <dir>/services.json and <dir>/traces/<id>.jsonl.
std::vector<SessionSamples> corpus_samples(const std::filesystem::path& dir,
                                           const ExtractOptions& opt,
                                           Execution exec = Execution::kParallel);

enum class StartupVariant : std::uint8_t { kTrueStart, kInjected, kAdapted };

Dataset startup_dataset(std::span<const SessionSamples> samples, LayerSet layers,
                        StartupVariant variant = StartupVariant::kTrueStart);
Dataset bin_dataset(std::span<const SessionSamples> samples, LayerSet layers);

// Session-level split: per service a `fraction` of sessions (at least one)
// goes to the test side. Returns the test flags aligned with `samples`.
std::vector<bool> holdout_split(std::span<const SessionSamples> samples, double fraction,
                                std::uint64_t seed);

struct CompareConfig {
  std::vector<LayerSet> layers = {LayerSet::kNet, LayerSet::kNetTran, LayerSet::kNetApp};
  bool specific = true;
  bool excluded = true;
  Hyperparams regressor{100, std::nullopt, 1, MaxFeatures::kThird, 0};
  Hyperparams classifier{100, std::nullopt, 1, MaxFeatures::kSqrt, 0};
  double holdout_fraction = 0.25;
  double startup_truth_max = 10.0;  // startup rows scored only when truth <= this
  std::uint64_t seed = 0;
  Execution exec = Execution::kParallel;
};

struct CompareRow {
  std::string target;  // "startup" or "resolution"
  std::string layers;
  std::string regime;
  std::string test_service;  // a service name or "all"
  std::size_t samples = 0;
  double rmse = 0.0;
  double baseline_rmse = 0.0;  // predict-the-training-mean
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
};

// Trains every (target, layer set, regime) combination on the training side
// and scores it per held-out service. Composite rows also carry "all".
std::vector<CompareRow> compare_regimes(std::span<const SessionSamples> samples,
                                        const std::vector<bool>& is_test, const CompareConfig& cfg);
void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows);

// Scores of one trained model on a test set.
struct StartupScore {
  std::size_t samples = 0;
  double rmse = 0.0;
  double baseline_rmse = 0.0;
};
StartupScore score_startup(const RandomForestModel& model, const Dataset& train_set,
                           const Dataset& test_set, double truth_max, Execution exec);

struct ResolutionScore {
  std::size_t samples = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
};
ResolutionScore score_resolution(const RandomForestModel& model, const Dataset& test_set,
                                 Execution exec);

}  // namespace vqoe
