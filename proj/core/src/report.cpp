#include <cstdio>

#include "derail/error.hpp"
#include "derail/evaluation.hpp"

namespace derail {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

json to_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"confusion", {{"tp", m.true_positive}, {"fp", m.false_positive}, {"fn", m.false_negative}, {"tn", m.true_negative}}}};
}

json to_json(const HorizonReport& h) {
  json hist = json::object();
  for (const auto& [k, v] : h.histogram) hist[std::to_string(k)] = v;
  return {{"mean", optional_number(h.mean)},
          {"histogram", hist},
          {"last_minute_rate", optional_number(h.last_minute_rate)},
          {"coverage", optional_number(h.coverage)},
          {"detected", h.detected},
          {"derailing", h.derailing}};
}

json to_json(const EvaluationReport& r) {
  json seeds = json::array();
  for (const auto& run : r.runs) {
    seeds.push_back({{"seed", run.seed}, {"metrics", to_json(run.metrics)}, {"horizon", to_json(run.horizon)}});
  }
  return {{"variant", r.variant},
          {"mode", r.mode},
          {"seeds", seeds},
          {"metrics", to_json(mean_metrics(r.runs))},
          {"horizon", to_json(mean_horizon(r.runs))},
          {"config", r.config},
          {"version", r.version}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  const json& c = j.at("confusion");
  m.true_positive = c.at("tp").get<int>();
  m.false_positive = c.at("fp").get<int>();
  m.false_negative = c.at("fn").get<int>();
  m.true_negative = c.at("tn").get<int>();
  return m;
}

HorizonReport horizon_from_json(const json& j) {
  HorizonReport h;
  h.mean = number_or_null(j, "mean");
  h.last_minute_rate = number_or_null(j, "last_minute_rate");
  h.coverage = number_or_null(j, "coverage");
  for (const auto& [k, v] : j.at("histogram").items()) h.histogram[std::stoi(k)] = v.get<int>();
  h.detected = j.value("detected", 0);
  h.derailing = j.value("derailing", 0);
  return h;
}

EvaluationReport evaluation_report_from_json(const json& j) {
  try {
    EvaluationReport r;
    r.variant = j.at("variant").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    for (const json& s : j.at("seeds")) {
      r.runs.push_back(RunResult{s.at("seed").get<std::uint64_t>(), metrics_from_json(s.at("metrics")),
                                 horizon_from_json(s.at("horizon"))});
    }
    r.config = j.value("config", json::object());
    r.version = j.value("version", std::string());
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
}

std::string render_json(const EvaluationReport& report) { return to_json(report).dump(2) + "\n"; }

std::string render_table(const EvaluationReport& report) {
  const std::string name = "FGCN-" + report.variant + (report.mode == "dynamic" ? "+" : "");
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-8s %-6s %6s %6s %6s %6s %6s\n", "model", "mode", "seed", "Acc", "P", "R",
                "F1", "H");
  out += line;
  auto row = [&](const std::string& seed, const MetricsReport& m, const HorizonReport& h) {
    char hbuf[16];
    if (h.mean) {
      std::snprintf(hbuf, sizeof hbuf, "%6.2f", *h.mean);
    } else {
      std::snprintf(hbuf, sizeof hbuf, "%6s", "-");
    }
    std::snprintf(line, sizeof line, "%-10s %-8s %-6s %6.1f %6.1f %6.1f %6.1f %s\n", name.c_str(),
                  report.mode.c_str(), seed.c_str(), 100.0 * m.accuracy, 100.0 * m.precision, 100.0 * m.recall,
                  100.0 * m.f1, hbuf);
    out += line;
  };
  for (const auto& r : report.runs) row(std::to_string(r.seed), r.metrics, r.horizon);
  if (report.runs.size() > 1) row("mean", mean_metrics(report.runs), mean_horizon(report.runs));
  return out;
}

}  // namespace derail
