#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derail/model.hpp"
#include "derail/training.hpp"

namespace derail::cli {

// Everything a command needs, merged as flags > config file > defaults.
struct RunConfig {
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string embeddings;  // precomputed text embeddings; hash-toy when empty
  int text_dim = 64;
  std::uint64_t text_seed = 1;
  std::string variant = "T";
  std::string mode = "static";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  int patience = 5;
  int max_turns = 12;
  int max_users = 8;
  int text_hidden = 100;
  int user_dim = 32;
  int user_hidden = 32;
  int score_dim = 16;
  int score_hidden = 32;
  std::vector<int> classifier{128, 64};
  double threshold = 0.5;
  std::string bins;
  std::vector<std::string> checkpoint;
  std::string out;
  std::string format = "json";
  std::string split = "test";

  // Keys set by a config file or flag rather than left at their defaults.
  std::vector<std::string> pinned;
  bool is_pinned(const std::string& key) const;
};

nlohmann::json to_json(const RunConfig& c);
// Overwrites the fields named in `patch`; unknown keys are a ConfigError.
void apply_patch(RunConfig& c, const nlohmann::json& patch);

// Loads the config file named by `path`, or by DERAIL_CONFIG when `path` is
// empty, then applies the flag patch on top.
RunConfig resolve_config(const std::string& path, const nlohmann::json& flags);

// "N" -> 1..N, "a,b,c" -> {a, b, c}, "a-b" -> a..b.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

ModelConfig model_config(const RunConfig& c);
TrainingConfig training_config(const RunConfig& c);

// Model settings that the flags pinned explicitly; used to reject
// checkpoints whose shapes disagree.
std::vector<std::string> model_keys();

}  // namespace derail::cli
