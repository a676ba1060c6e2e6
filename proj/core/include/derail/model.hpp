#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derail/autodiff.hpp"
#include "derail/binning.hpp"
#include "derail/channels.hpp"
#include "derail/corpus.hpp"
#include "derail/encoders.hpp"
#include "derail/gnn.hpp"
#include "derail/graph.hpp"

namespace derail {

struct ModelConfig {
  Variant variant = Variant::T;
  int text_dim = 64;
  int user_dim = 32;
  int score_dim = 16;
  int text_hidden = 100;
  int user_hidden = 32;
  int score_hidden = 32;
  // Padding cap of the turn concatenation fed to the classifier.
  int max_turns = 12;
  // Users per conversation with their own relation slot.
  int max_users = 8;
  // Linear reduction width followed by fully connected widths.
  std::vector<int> classifier_widths{128, 64};
  double threshold = 0.5;

  int hidden(Channel c) const;
  int input_dim(Channel c) const;
  // Width of one turn vector g_i: sum over active channels of 2*h (encoder) + 2*h (graph).
  int turn_vector_dim() const;
  int relation_count() const { return relation_vocabulary_size(max_users); }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForecastProbability {
  double probability = 0.5;
  double threshold = 0.5;
  int label() const { return probability >= threshold ? 1 : 0; }
};

// Ties go to the positive class.
inline int predict(double probability, double threshold) { return probability >= threshold ? 1 : 0; }

struct ForwardTrace {
  bool truncated = false;
  int context_turns = 0;
  std::vector<Channel> consumed;
};

// Where parameters came from, recorded in checkpoints.
struct SeedLineage {
  std::uint64_t init_seed = 0;
  std::uint64_t run_seed = 0;
};

class FgcnModel {
 public:
  // Seeded initialisation. Users of `train` get embedding rows in order of
  // first sighting; `binning` is required when the variant reads scores.
  static FgcnModel initialize(const ModelConfig& config, std::uint64_t seed, std::span<const Conversation> train,
                              std::optional<BinningScheme> binning);

  // Allocates zeroed tensors for a known user list; checkpoint loading fills them.
  static FgcnModel allocate(const ModelConfig& config, std::span<const std::string> users,
                            std::optional<BinningScheme> binning);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  const std::optional<BinningScheme>& binning() const { return binning_; }
  const UserEmbeddingTable& users() const { return users_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  SeedLineage lineage() const { return lineage_; }
  void set_lineage(SeedLineage l) { lineage_ = l; }

  // Probability that the turn after `context` is a personal attack. Context
  // longer than max_turns keeps its most recent max_turns turns.
  ForecastProbability forward(std::span<const Turn> context, const TextEmbeddingProvider& text,
                              ForwardTrace* trace = nullptr) const;
  ForecastProbability forward(const Conversation& conv, const TextEmbeddingProvider& text,
                              ForwardTrace* trace = nullptr) const;

  // Adds d loss / d params for one instance to params().grad; returns the loss.
  double accumulate_gradient(std::span<const Turn> context, int label, const TextEmbeddingProvider& text);
  // Loss without touching gradients.
  double loss(std::span<const Turn> context, int label, const TextEmbeddingProvider& text) const;

  // Sequential encodings T', U', S' of the active channels.
  EncodedConversation encode(const Conversation& conv, const TextEmbeddingProvider& text) const;
  // Attention-weighted graphs of the active channels.
  std::vector<ConversationGraph> graphs(std::span<const Turn> context, const TextEmbeddingProvider& text) const;

  nlohmann::json checkpoint_json(const nlohmann::json& text_provider) const;
  void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& text_provider) const;
  static FgcnModel from_checkpoint_json(const nlohmann::json& j);
  static FgcnModel load_checkpoint(const std::filesystem::path& path);

 private:
  struct ChannelParams {
    ParamId fwd_input = 0, fwd_recurrent = 0, fwd_bias = 0;
    ParamId bwd_input = 0, bwd_recurrent = 0, bwd_bias = 0;
    ParamId attention = 0;
    ParamId relation_weights = 0, self_weight = 0, log_norm = 0;
    ParamId neighbor_weight = 0, self_weight2 = 0;
  };
  struct Layer {
    ParamId weight = 0;
    ParamId bias = 0;
  };
  using Binder = std::function<ad::Var(ParamId)>;

  FgcnModel(ModelConfig config, UserEmbeddingTable users, std::optional<BinningScheme> binning);
  void allocate_tensors();

  std::span<const Turn> window(std::span<const Turn> context) const;
  ad::Var input_rows(ad::Tape& tape, const Binder& bind, Channel c, std::span<const Turn> context,
                     const TextEmbeddingProvider& text) const;
  ad::Var encode_channel(ad::Tape& tape, const Binder& bind, Channel c, ad::Var input) const;
  ad::Var build(ad::Tape& tape, const Binder& bind, std::span<const Turn> context, const TextEmbeddingProvider& text,
                ForwardTrace* trace) const;

  ModelConfig config_;
  UserEmbeddingTable users_;
  std::optional<BinningScheme> binning_;
  ParameterStore params_;
  std::array<std::optional<ChannelParams>, 3> channels_;
  ParamId user_table_ = 0;
  ParamId score_table_ = 0;
  std::vector<Layer> classifier_;
  SeedLineage lineage_;
};

// Throws ChannelUnavailable if the variant reads scores the corpus lacks.
void require_channels(Variant variant, const CorpusSplit& corpus);

}  // namespace derail
