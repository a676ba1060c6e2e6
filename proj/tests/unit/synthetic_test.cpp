#include <gtest/gtest.h>

#include <set>

#include "derail/encoders.hpp"
#include "derail/error.hpp"
#include "derail/synthetic.hpp"

namespace derail {
namespace {

GeneratorSettings settings(SignalType signal, int train = 100) {
  GeneratorSettings g;
  g.signal = signal;
  g.train = train;
  g.validation = 20;
  g.test = 20;
  return g;
}

int positives(const std::vector<Conversation>& convs) {
  int n = 0;
  for (const auto& c : convs) n += *c.label;
  return n;
}

// Predicts 1 iff the planted token occurs in any context turn.
int token_presence(const Conversation& c) {
  for (const auto& t : c.context()) {
    for (const auto& tok : HashToyEncoder::tokenize(t.text)) {
      if (tok == kPlantedToken) return 1;
    }
  }
  return 0;
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto g = settings(SignalType::lexical);
  EXPECT_EQ(generate_synthetic_corpus(g, 1), generate_synthetic_corpus(g, 1));
  EXPECT_NE(generate_synthetic_corpus(g, 1), generate_synthetic_corpus(g, 2));
}

TEST(Synthetic, BalancedLabels) {
  for (SignalType s : {SignalType::lexical, SignalType::user_grudge, SignalType::vote_collapse}) {
    const CorpusSplit c = generate_synthetic_corpus(settings(s), 3);
    EXPECT_EQ(positives(c.train), 50);
    EXPECT_EQ(positives(c.test), 10);
  }
}

TEST(Synthetic, ConversationsValidateAndRespectTurnRange) {
  GeneratorSettings g = settings(SignalType::vote_collapse);
  g.min_turns = 6;
  g.max_turns = 8;
  const CorpusSplit c = generate_synthetic_corpus(g, 4);
  EXPECT_TRUE(c.scored);
  for (const auto& conv : c.train) {
    EXPECT_FALSE(has_hard_violation(validate_conversation(conv, true))) << conv.conv_id;
    EXPECT_GE(conv.turns.size(), 6u);
    EXPECT_LE(conv.turns.size(), 8u);
  }
}

TEST(Synthetic, TokenPresenceSeparatesLexicalCorpus) {
  const CorpusSplit c = generate_synthetic_corpus(settings(SignalType::lexical, 200), 1);
  for (const auto* part : {&c.train, &c.validation, &c.test}) {
    for (const auto& conv : *part) EXPECT_EQ(token_presence(conv), *conv.label) << conv.conv_id;
  }
}

TEST(Synthetic, TargetTurnNeverCarriesTheToken) {
  const CorpusSplit c = generate_synthetic_corpus(settings(SignalType::lexical), 2);
  for (const auto& conv : c.train) {
    EXPECT_EQ(conv.turns.back().text.find(kPlantedToken), std::string::npos);
  }
}

TEST(Synthetic, NoiseFlipsSomeSignals) {
  GeneratorSettings g = settings(SignalType::lexical, 200);
  g.noise_rate = 0.3;
  const CorpusSplit c = generate_synthetic_corpus(g, 1);
  int disagreements = 0;
  for (const auto& conv : c.train) disagreements += token_presence(conv) != *conv.label;
  EXPECT_GT(disagreements, 20);
  EXPECT_LT(disagreements, 100);
}

TEST(Synthetic, GrudgePairOnlyInPositives) {
  const CorpusSplit c = generate_synthetic_corpus(settings(SignalType::user_grudge), 5);
  for (const auto& conv : c.train) {
    std::set<std::string> users;
    for (const auto& t : conv.context()) users.insert(t.user_id);
    const bool pair = users.count(std::string(kGrudgeUserA)) && users.count(std::string(kGrudgeUserB));
    EXPECT_EQ(pair, *conv.label == 1) << conv.conv_id;
  }
}

TEST(Synthetic, VoteCollapseEndsNegative) {
  const CorpusSplit c = generate_synthetic_corpus(settings(SignalType::vote_collapse), 6);
  for (const auto& conv : c.train) {
    const int last = *conv.context().back().score;
    EXPECT_EQ(last < 0, *conv.label == 1) << conv.conv_id;
  }
}

TEST(Synthetic, InfeasibleSettings) {
  GeneratorSettings g = settings(SignalType::lexical);
  g.num_users = 1;
  try {
    generate_synthetic_corpus(g, 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible spec"), std::string::npos);
  }
  g = settings(SignalType::lexical);
  g.min_turns = 3;
  EXPECT_THROW(generate_synthetic_corpus(g, 1), ConfigError);
  g = settings(SignalType::lexical);
  g.noise_rate = 1.5;
  EXPECT_THROW(generate_synthetic_corpus(g, 1), ConfigError);
}

TEST(Synthetic, SignalNames) {
  EXPECT_EQ(signal_from_string("user-grudge"), SignalType::user_grudge);
  EXPECT_EQ(to_string(SignalType::vote_collapse), "vote-collapse");
  EXPECT_THROW(signal_from_string("sarcasm"), ConfigError);
}

}  // namespace
}  // namespace derail
