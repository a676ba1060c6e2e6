#include "derail/evaluation.hpp"

#include "derail/error.hpp"

namespace derail {

Aggregate aggregate_prefixes(std::span<const int> prefix_labels) {
  Aggregate a;
  for (std::size_t k = 0; k < prefix_labels.size(); ++k) {
    if (prefix_labels[k] != 0) {
      a.label = 1;
      a.first_detection = static_cast<int>(k) + 1;
      break;
    }
  }
  return a;
}

ForecastOutcome dynamic_infer(const FgcnModel& model, const Conversation& conv, const TextEmbeddingProvider& text) {
  if (conv.context_size() < 1) throw ValidationError(conv.conv_id + ": needs at least one context turn");
  ForecastOutcome out;
  out.conv_id = conv.conv_id;
  out.label = conv.label.value_or(0);
  out.turn_count = static_cast<int>(conv.turns.size());
  for (std::size_t k = 1; k <= conv.context_size(); ++k) {
    const ForecastProbability p = model.forward(conv.prefix(k), text);
    out.probabilities.push_back(p.probability);
    out.prefix_labels.push_back(p.label());
  }
  const Aggregate a = aggregate_prefixes(out.prefix_labels);
  out.predicted = a.label;
  out.first_detection = a.first_detection;
  return out;
}

std::vector<ForecastOutcome> dynamic_infer_all(const FgcnModel& model, std::span<const Conversation> convs,
                                               const TextEmbeddingProvider& text) {
  std::vector<ForecastOutcome> out;
  out.reserve(convs.size());
  for (const auto& c : convs) out.push_back(dynamic_infer(model, c, text));
  return out;
}

MetricsReport metrics_from_counts(int tp, int fp, int fn, int tn) {
  MetricsReport m;
  m.true_positive = tp;
  m.false_positive = fp;
  m.false_negative = fn;
  m.true_negative = tn;
  const int total = tp + fp + fn + tn;
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

MetricsReport compute_metrics(std::span<const ForecastOutcome> outcomes) {
  if (outcomes.empty()) throw ValidationError("metrics need at least one outcome");
  int tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& o : outcomes) {
    if (o.predicted == 1) {
      (o.label == 1 ? tp : fp)++;
    } else {
      (o.label == 1 ? fn : tn)++;
    }
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

int horizon_of(const ForecastOutcome& outcome) {
  if (!outcome.first_detection) throw ValidationError(outcome.conv_id + ": no detection, horizon undefined");
  return outcome.turn_count - *outcome.first_detection;
}

HorizonReport compute_horizon(std::span<const ForecastOutcome> outcomes) {
  HorizonReport h;
  long sum = 0;
  int last_minute = 0;
  for (const auto& o : outcomes) {
    if (o.label != 1) continue;
    ++h.derailing;
    if (o.predicted != 1 || !o.first_detection) continue;
    const int H = horizon_of(o);
    ++h.detected;
    ++h.histogram[H];
    sum += H;
    if (H == 1) ++last_minute;
  }
  if (h.detected > 0) {
    h.mean = static_cast<double>(sum) / h.detected;
    h.last_minute_rate = static_cast<double>(last_minute) / h.detected;
  }
  if (h.derailing > 0) h.coverage = static_cast<double>(h.detected) / h.derailing;
  return h;
}

MetricsReport mean_metrics(std::span<const RunResult> runs) {
  MetricsReport m;
  if (runs.empty()) return m;
  for (const auto& r : runs) {
    m.accuracy += r.metrics.accuracy;
    m.precision += r.metrics.precision;
    m.recall += r.metrics.recall;
    m.f1 += r.metrics.f1;
    m.true_positive += r.metrics.true_positive;
    m.false_positive += r.metrics.false_positive;
    m.false_negative += r.metrics.false_negative;
    m.true_negative += r.metrics.true_negative;
  }
  const double n = static_cast<double>(runs.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

HorizonReport mean_horizon(std::span<const RunResult> runs) {
  HorizonReport h;
  double mean_sum = 0.0, lm_sum = 0.0, cov_sum = 0.0;
  int mean_n = 0, lm_n = 0, cov_n = 0;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.horizon.histogram) h.histogram[k] += v;
    h.detected += r.horizon.detected;
    h.derailing += r.horizon.derailing;
    if (r.horizon.mean) mean_sum += *r.horizon.mean, ++mean_n;
    if (r.horizon.last_minute_rate) lm_sum += *r.horizon.last_minute_rate, ++lm_n;
    if (r.horizon.coverage) cov_sum += *r.horizon.coverage, ++cov_n;
  }
  if (mean_n > 0) h.mean = mean_sum / mean_n;
  if (lm_n > 0) h.last_minute_rate = lm_sum / lm_n;
  if (cov_n > 0) h.coverage = cov_sum / cov_n;
  return h;
}

}  // namespace derail
