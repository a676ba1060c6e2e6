#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "derail/corpus.hpp"

namespace derail {

// Where the derailment signal is planted.
//  lexical       - a planted token first occurs in the first half of the context of each
//                  positive conversation and recurs in every later context turn
//  user_grudge   - a fixed pair of users trades three consecutive replies in positives;
//                  negatives show the same reply pattern between other users
//  vote_collapse - scores slide into negative territory over the last context turns
enum class SignalType { lexical, user_grudge, vote_collapse };

std::string_view to_string(SignalType s);
SignalType signal_from_string(std::string_view s);

struct GeneratorSettings {
  int train = 200;
  int validation = 50;
  int test = 50;
  int min_turns = 5;  // total turns including the target
  int max_turns = 9;
  int num_users = 12;
  SignalType signal = SignalType::lexical;
  // Fraction of conversations whose signal is swapped to the other class.
  double noise_rate = 0.0;
};

inline constexpr std::string_view kPlantedToken = "zugzwang";
// Users that carry the grudge signal.
inline constexpr std::string_view kGrudgeUserA = "user-00";
inline constexpr std::string_view kGrudgeUserB = "user-01";

CorpusSplit generate_synthetic_corpus(const GeneratorSettings& settings, std::uint64_t seed);

}  // namespace derail
