#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derail/corpus.hpp"
#include "derail/encoders.hpp"
#include "derail/model.hpp"

namespace derail {

struct ForecastOutcome {
  std::string conv_id;
  int label = 0;
  int turn_count = 0;  // N, including the target turn
  std::vector<double> probabilities;   // prefix k = 1..N-1
  std::vector<int> prefix_labels;
  int predicted = 0;                   // max over prefix labels
  std::optional<int> first_detection;  // smallest k with a positive prefix label
};

struct Aggregate {
  int label = 0;
  std::optional<int> first_detection;  // 1-based prefix length
};

// Max-aggregation over per-prefix labels.
Aggregate aggregate_prefixes(std::span<const int> prefix_labels);

// Evaluates every prefix k = 1..N-1 from scratch and aggregates by max.
ForecastOutcome dynamic_infer(const FgcnModel& model, const Conversation& conv, const TextEmbeddingProvider& text);
std::vector<ForecastOutcome> dynamic_infer_all(const FgcnModel& model, std::span<const Conversation> convs,
                                               const TextEmbeddingProvider& text);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int true_positive = 0;
  int false_positive = 0;
  int false_negative = 0;
  int true_negative = 0;

  int total() const { return true_positive + false_positive + false_negative + true_negative; }
};

// Derailment is the positive class. Empty denominators give 0.
MetricsReport compute_metrics(std::span<const ForecastOutcome> outcomes);
MetricsReport metrics_from_counts(int tp, int fp, int fn, int tn);

// Forecast horizon H = N - k for conversations that derail and are
// detected (first positive prefix k); H = 1 is a detection on the last
// context turn.
struct HorizonReport {
  std::optional<double> mean;  // absent when nothing was detected
  std::map<int, int> histogram;
  std::optional<double> last_minute_rate;
  std::optional<double> coverage;  // detected / derailing
  int detected = 0;
  int derailing = 0;
};

int horizon_of(const ForecastOutcome& outcome);
HorizonReport compute_horizon(std::span<const ForecastOutcome> outcomes);

// One evaluated run (seed) of a variant.
struct RunResult {
  std::uint64_t seed = 0;
  MetricsReport metrics;
  HorizonReport horizon;
};

struct EvaluationReport {
  std::string variant;
  std::string mode;
  std::vector<RunResult> runs;
  nlohmann::json config = nlohmann::json::object();
  std::string version;
};

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const HorizonReport& h);
nlohmann::json to_json(const EvaluationReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);
HorizonReport horizon_from_json(const nlohmann::json& j);
EvaluationReport evaluation_report_from_json(const nlohmann::json& j);

// Mean over runs; histograms are summed.
MetricsReport mean_metrics(std::span<const RunResult> runs);
HorizonReport mean_horizon(std::span<const RunResult> runs);

// Acc/P/R/F1 and mean H per run, plus a mean row when there is more than one run.
std::string render_table(const EvaluationReport& report);
std::string render_json(const EvaluationReport& report);

}  // namespace derail
