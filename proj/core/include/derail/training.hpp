#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derail/autodiff.hpp"
#include "derail/corpus.hpp"
#include "derail/encoders.hpp"
#include "derail/evaluation.hpp"
#include "derail/model.hpp"

namespace derail {

enum class TrainingMode { static_prefix, dynamic };

std::string to_string(TrainingMode m);
TrainingMode training_mode_from_string(const std::string& s);

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  TrainingMode mode = TrainingMode::static_prefix;
  int epochs = 30;
  int batch_size = 32;
  AdamSettings optimizer;
  // Epochs without validation F1 improvement before stopping; 0 disables.
  int patience = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  ModelConfig model;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j);

struct TrainingInstance {
  std::string conv_id;
  std::size_t conversation = 0;  // index into the source span
  int prefix = 1;                // context turns used
  int label = 0;
};

// Prefixes 1..N-1, all carrying the conversation label.
std::vector<TrainingInstance> expand_dynamic(const Conversation& conv, std::size_t index = 0);
// The single full-context instance.
std::vector<TrainingInstance> expand_static(const Conversation& conv, std::size_t index = 0);
std::vector<TrainingInstance> expand(std::span<const Conversation> convs, TrainingMode mode);

// Binary cross-entropy with the probability clamped 1e-7 away from 0 and 1.
double bce_loss(double probability, int label);

class AdamOptimizer {
 public:
  AdamOptimizer(AdamSettings settings, const ParameterStore& params);
  // Applies one update from the gradients currently held in `params`.
  void step(ParameterStore& params);
  long steps() const { return t_; }

 private:
  AdamSettings settings_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  MetricsReport validation;
};

struct TrainingHistory {
  std::uint64_t seed = 0;
  std::string mode;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_f1 = 0.0;
  std::size_t instance_count = 0;
  double positive_ratio = 0.0;
  bool stopped_early = false;
};

nlohmann::json to_json(const TrainingHistory& h);

struct TrainingResult {
  FgcnModel model;
  TrainingHistory history;
};

using TrainingLog = std::function<void(const std::string&)>;

// Trains `model` in place from its current parameters; the run seed drives
// shuffling only. Returns the parameters of the best-validation-F1 epoch.
TrainingResult train(const TrainingConfig& config, const CorpusSplit& corpus, const TextEmbeddingProvider& text,
                     FgcnModel model, std::uint64_t seed, const TrainingLog& log = {});

// Seeded initialisation followed by training.
TrainingResult train_seed(const TrainingConfig& config, const CorpusSplit& corpus, const TextEmbeddingProvider& text,
                          std::uint64_t seed, const std::optional<BinningScheme>& binning,
                          const TrainingLog& log = {});

// Dynamic inference over `convs` turned into one report row.
RunResult evaluate_run(const FgcnModel& model, std::span<const Conversation> convs, const TextEmbeddingProvider& text,
                       std::uint64_t seed);

}  // namespace derail
