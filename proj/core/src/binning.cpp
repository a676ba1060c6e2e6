#include "derail/binning.hpp"

#include <algorithm>
#include <set>

#include "derail/error.hpp"

namespace derail {

namespace {

constexpr const char* kTiePolicy = "left-closed";

// Tertile cut points of a sorted sample: the values at ranks n/3 and 2n/3.
std::array<int, 2> tertile_cuts(const std::vector<int>& sorted) {
  const std::size_t n = sorted.size();
  return {sorted[n / 3], sorted[(2 * n) / 3]};
}

}  // namespace

BinningFit fit_score_bins_from_scores(std::span<const int> scores) {
  if (scores.empty()) throw ValidationError("binning requires scored corpus");

  std::vector<int> negative;
  std::vector<int> nonnegative;
  for (int s : scores) (s < 0 ? negative : nonnegative).push_back(s);
  std::sort(negative.begin(), negative.end());
  std::sort(nonnegative.begin(), nonnegative.end());

  BinningFit fit;
  auto fit_class = [&](const std::vector<int>& values, const char* name, std::array<int, 2>& cuts) {
    if (values.empty()) {
      // Nothing to split: every score of this sign clamps to one extreme bin.
      cuts = {0, 0};
      fit.warnings.push_back(std::string("no ") + name + " scores in training data; " + name +
                             " scores collapse into one bin");
      return;
    }
    cuts = tertile_cuts(values);
    std::set<int> distinct(values.begin(), values.end());
    if (distinct.size() < 3) {
      fit.warnings.push_back(std::string(name) + " scores have only " + std::to_string(distinct.size()) +
                             " distinct values; some bins stay empty");
    }
  };
  fit_class(negative, "negative", fit.scheme.negative_boundaries);
  fit_class(nonnegative, "nonnegative", fit.scheme.nonnegative_boundaries);
  return fit;
}

BinningFit fit_score_bins(std::span<const Conversation> train) {
  std::vector<int> scores;
  for (const auto& c : train) {
    for (const auto& t : c.turns) {
      if (t.score) scores.push_back(*t.score);
    }
  }
  return fit_score_bins_from_scores(scores);
}

int assign_bin(const BinningScheme& scheme, int score) {
  if (score < 0) {
    if (score < scheme.negative_boundaries[0]) return 0;
    if (score < scheme.negative_boundaries[1]) return 1;
    return 2;
  }
  if (score < scheme.nonnegative_boundaries[0]) return 3;
  if (score < scheme.nonnegative_boundaries[1]) return 4;
  return 5;
}

nlohmann::json to_json(const BinningScheme& scheme) {
  return {{"negative_boundaries", scheme.negative_boundaries},
          {"nonnegative_boundaries", scheme.nonnegative_boundaries},
          {"tie_policy", kTiePolicy},
          {"bins", BinningScheme::kBinCount}};
}

BinningScheme binning_from_json(const nlohmann::json& j) {
  try {
    if (j.value("tie_policy", std::string(kTiePolicy)) != kTiePolicy) {
      throw SchemaError("unsupported binning tie policy '" + j.at("tie_policy").get<std::string>() + "'");
    }
    BinningScheme s;
    s.negative_boundaries = j.at("negative_boundaries").get<std::array<int, 2>>();
    s.nonnegative_boundaries = j.at("nonnegative_boundaries").get<std::array<int, 2>>();
    if (s.negative_boundaries[0] > s.negative_boundaries[1] ||
        s.nonnegative_boundaries[0] > s.nonnegative_boundaries[1]) {
      throw SchemaError("binning boundaries must be nondecreasing");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed binning scheme: ") + e.what());
  }
}

}  // namespace derail
