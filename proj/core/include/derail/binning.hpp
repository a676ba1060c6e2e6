#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derail/corpus.hpp"

namespace derail {

// Equal-depth binning of vote scores: three bins for negative scores
// (0 = most negative) and three for nonnegative scores (5 = largest).
// Zero counts as nonnegative. Cut points are left-closed: a score equal to
// a cut point falls in the higher bin.
struct BinningScheme {
  static constexpr int kBinCount = 6;
  // Row index for turns without a score; not one of the six bins.
  static constexpr int kUnknownBin = 6;

  std::array<int, 2> negative_boundaries{0, 0};
  std::array<int, 2> nonnegative_boundaries{0, 0};

  bool operator==(const BinningScheme&) const = default;
};

struct BinningFit {
  BinningScheme scheme;
  std::vector<std::string> warnings;
};

// Fits cut points on the scores of `train` only.
BinningFit fit_score_bins(std::span<const Conversation> train);
// Same rule on a raw score sample.
BinningFit fit_score_bins_from_scores(std::span<const int> scores);

int assign_bin(const BinningScheme& scheme, int score);

nlohmann::json to_json(const BinningScheme& scheme);
BinningScheme binning_from_json(const nlohmann::json& j);

}  // namespace derail
