#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "derail/error.hpp"
#include "derail/synthetic.hpp"
#include "derail/training.hpp"

namespace derail {
namespace {

Conversation of_length(int n, int label = 1) {
  Conversation c;
  c.conv_id = "n" + std::to_string(n);
  c.label = label;
  for (int i = 0; i < n; ++i) {
    Turn t;
    t.turn_id = c.conv_id + "." + std::to_string(i);
    t.index = i;
    t.user_id = "u";
    c.turns.push_back(t);
  }
  return c;
}

TEST(Expand, DynamicGivesOneInstancePerPrefix) {
  const auto inst = expand_dynamic(of_length(5), 3);
  ASSERT_EQ(inst.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(inst[k].prefix, k + 1);
    EXPECT_EQ(inst[k].label, 1);
    EXPECT_EQ(inst[k].conversation, 3u);
  }
}

TEST(Expand, TwoTurnsStaticAndDynamicCoincide) {
  const auto d = expand_dynamic(of_length(2, 0));
  const auto s = expand_static(of_length(2, 0));
  ASSERT_EQ(d.size(), 1u);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(d[0].prefix, s[0].prefix);
  EXPECT_EQ(d[0].label, s[0].label);
}

TEST(Expand, CorpusLevelCounts) {
  const std::vector<Conversation> convs{of_length(3), of_length(6, 0)};
  EXPECT_EQ(expand(convs, TrainingMode::static_prefix).size(), 2u);
  EXPECT_EQ(expand(convs, TrainingMode::dynamic).size(), 7u);
}

TEST(Loss, KnownValues) {
  EXPECT_NEAR(bce_loss(0.5, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(0.5, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(0.9, 0), -std::log(0.1), 1e-12);
  EXPECT_LT(bce_loss(1.0 - 1e-12, 1), 1e-6);
  EXPECT_TRUE(std::isfinite(bce_loss(0.0, 1)));
  EXPECT_GE(bce_loss(0.3, 1), 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore store;
  const ParamId id = store.add("w", 1, 2);
  store[id].value << 1.0, -1.0;
  store[id].grad = Matrix::Zero(1, 2);
  store[id].grad << 4.0, -0.5;
  AdamOptimizer opt({0.1, 0.9, 0.999, 1e-8}, store);
  opt.step(store);
  EXPECT_NEAR(store[id].value(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(store[id].value(0, 1), -0.9, 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MinimisesAQuadratic) {
  ParameterStore store;
  const ParamId id = store.add("w", 1, 1);
  store[id].value(0, 0) = 5.0;
  AdamOptimizer opt({0.1, 0.9, 0.999, 1e-8}, store);
  for (int i = 0; i < 500; ++i) {
    store[id].grad = 2.0 * (store[id].value.array() - 2.0).matrix();
    opt.step(store);
  }
  EXPECT_NEAR(store[id].value(0, 0), 2.0, 1e-2);
}

TEST(Config, Validation) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.optimizer.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  TrainingConfig c;
  c.mode = TrainingMode::dynamic;
  c.epochs = 7;
  c.seeds = {4, 9};
  c.model.variant = Variant::TSU;
  c.model.classifier_widths = {16, 8};
  const TrainingConfig back = training_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(training_mode_from_string("dynamic"), TrainingMode::dynamic);
  EXPECT_THROW(training_mode_from_string("online"), ConfigError);
}

struct Small {
  CorpusSplit corpus;
  HashToyEncoder text{32, 1};
  TrainingConfig config;

  explicit Small(SignalType signal = SignalType::lexical) {
    GeneratorSettings g;
    g.signal = signal;
    g.train = 24;
    g.validation = 8;
    g.test = 8;
    corpus = generate_synthetic_corpus(g, 1);
    config.epochs = 3;
    config.batch_size = 4;
    config.model.text_dim = 32;
    config.model.text_hidden = 4;
    config.model.user_dim = 4;
    config.model.user_hidden = 4;
    config.model.score_dim = 4;
    config.model.score_hidden = 4;
    config.model.classifier_widths = {8, 4};
  }
};

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  Small s;
  s.config.optimizer.learning_rate = 0.0;
  s.config.patience = 0;
  const FgcnModel init = FgcnModel::initialize(s.config.model, 2, s.corpus.train, std::nullopt);
  const TrainingResult r = train(s.config, s.corpus, s.text, init, 2);
  for (std::size_t i = 0; i < init.params().size(); ++i) {
    EXPECT_EQ(r.model.params()[i].value, init.params()[i].value) << init.params()[i].name;
  }
  EXPECT_EQ(r.history.epochs.size(), 3u);
}

TEST(Train, DeterministicPerSeed) {
  Small s(SignalType::vote_collapse);
  s.config.model.variant = Variant::TSU;
  s.config.mode = TrainingMode::dynamic;
  const auto bins = fit_score_bins(s.corpus.train).scheme;
  const TrainingResult a = train_seed(s.config, s.corpus, s.text, 5, bins);
  const TrainingResult b = train_seed(s.config, s.corpus, s.text, 5, bins);
  EXPECT_EQ(to_json(a.history).dump(), to_json(b.history).dump());
  EXPECT_EQ(a.model.checkpoint_json({}).dump(), b.model.checkpoint_json({}).dump());
}

TEST(Train, HistoryDescribesTheRun) {
  Small s;
  s.config.mode = TrainingMode::dynamic;
  s.config.patience = 0;
  std::vector<std::string> lines;
  const TrainingResult r = train_seed(s.config, s.corpus, s.text, 1, std::nullopt,
                                      [&](const std::string& l) { lines.push_back(l); });
  std::size_t expected = 0;
  for (const auto& c : s.corpus.train) expected += c.context_size();
  EXPECT_EQ(r.history.instance_count, expected);
  EXPECT_NEAR(r.history.positive_ratio, 0.5, 0.2);
  EXPECT_EQ(r.history.mode, "dynamic");
  EXPECT_EQ(r.history.epochs.size(), 3u);
  EXPECT_GE(r.history.best_epoch, 1);
  EXPECT_EQ(r.history.best_validation_f1, r.history.epochs[r.history.best_epoch - 1].validation.f1);
  EXPECT_EQ(lines.size(), 4u);
  EXPECT_EQ(r.model.lineage().run_seed, 1u);
}

TEST(Train, ReturnsTheBestValidationEpoch) {
  Small s;
  s.config.epochs = 4;
  s.config.patience = 0;
  const TrainingResult r = train_seed(s.config, s.corpus, s.text, 3, std::nullopt);
  const RunResult val = evaluate_run(r.model, s.corpus.validation, s.text, 3);
  EXPECT_DOUBLE_EQ(val.metrics.f1, r.history.best_validation_f1);
}

TEST(Train, PatienceStopsEarly) {
  Small s;
  s.config.epochs = 30;
  s.config.patience = 1;
  s.config.optimizer.learning_rate = 0.0;
  const TrainingResult r = train_seed(s.config, s.corpus, s.text, 3, std::nullopt);
  EXPECT_TRUE(r.history.stopped_early);
  EXPECT_EQ(r.history.epochs.size(), 2u);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  Small s;
  PrecomputedEmbeddings broken(32, corpus_content_hash(s.corpus));
  for (const auto* part : {&s.corpus.train, &s.corpus.validation, &s.corpus.test}) {
    for (const auto& c : *part) {
      for (const auto& t : c.turns) {
        broken.insert(t.turn_id, RowVector::Constant(32, std::numeric_limits<double>::quiet_NaN()));
      }
    }
  }
  try {
    train_seed(s.config, s.corpus, broken, 1, std::nullopt);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Train, EmptyTrainingSplitRejected) {
  Small s;
  s.corpus.train.clear();
  EXPECT_THROW(train_seed(s.config, s.corpus, s.text, 1, std::nullopt), Error);
}

}  // namespace
}  // namespace derail
