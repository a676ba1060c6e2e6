#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "derail/channels.hpp"
#include "derail/error.hpp"

namespace derail::cli {

using nlohmann::json;

json to_json(const RunConfig& c) {
  return {{"corpus", c.corpus},
          {"corpus_format", c.corpus_format},
          {"embeddings", c.embeddings},
          {"text_dim", c.text_dim},
          {"text_seed", c.text_seed},
          {"variant", c.variant},
          {"mode", c.mode},
          {"seeds", c.seeds},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"patience", c.patience},
          {"max_turns", c.max_turns},
          {"max_users", c.max_users},
          {"text_hidden", c.text_hidden},
          {"user_dim", c.user_dim},
          {"user_hidden", c.user_hidden},
          {"score_dim", c.score_dim},
          {"score_hidden", c.score_hidden},
          {"classifier", c.classifier},
          {"threshold", c.threshold},
          {"bins", c.bins},
          {"checkpoint", c.checkpoint},
          {"out", c.out},
          {"format", c.format},
          {"split", c.split}};
}

namespace {

template <class T>
void take(const json& patch, const char* key, T& field) {
  if (auto it = patch.find(key); it != patch.end()) field = it->get<T>();
}

}  // namespace

void apply_patch(RunConfig& c, const json& patch) {
  if (!patch.is_object()) throw ConfigError("configuration must be a JSON object");
  const json known = to_json(RunConfig{});
  for (const auto& [key, value] : patch.items()) {
    if (!known.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  try {
    take(patch, "corpus", c.corpus);
    take(patch, "corpus_format", c.corpus_format);
    take(patch, "embeddings", c.embeddings);
    take(patch, "text_dim", c.text_dim);
    take(patch, "text_seed", c.text_seed);
    take(patch, "variant", c.variant);
    take(patch, "mode", c.mode);
    if (auto it = patch.find("seeds"); it != patch.end()) {
      c.seeds = it->is_string() ? parse_seeds(it->get<std::string>()) : it->get<std::vector<std::uint64_t>>();
    }
    take(patch, "epochs", c.epochs);
    take(patch, "batch_size", c.batch_size);
    take(patch, "lr", c.lr);
    take(patch, "patience", c.patience);
    take(patch, "max_turns", c.max_turns);
    take(patch, "max_users", c.max_users);
    take(patch, "text_hidden", c.text_hidden);
    take(patch, "user_dim", c.user_dim);
    take(patch, "user_hidden", c.user_hidden);
    take(patch, "score_dim", c.score_dim);
    take(patch, "score_hidden", c.score_hidden);
    take(patch, "classifier", c.classifier);
    take(patch, "threshold", c.threshold);
    take(patch, "bins", c.bins);
    if (auto it = patch.find("checkpoint"); it != patch.end()) {
      c.checkpoint = it->is_string() ? std::vector<std::string>{it->get<std::string>()}
                                     : it->get<std::vector<std::string>>();
    }
    take(patch, "out", c.out);
    take(patch, "format", c.format);
    take(patch, "split", c.split);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  }
}

bool RunConfig::is_pinned(const std::string& key) const {
  for (const auto& k : pinned) {
    if (k == key) return true;
  }
  return false;
}

RunConfig resolve_config(const std::string& path, const json& flags) {
  RunConfig c;
  std::string file = path;
  if (file.empty()) {
    if (const char* env = std::getenv("DERAIL_CONFIG"); env != nullptr) file = env;
  }
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file);
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    try {
      j = json::parse(buf.str());
    } catch (const json::exception& e) {
      throw ConfigError(file + ": " + e.what());
    }
    apply_patch(c, j);
    for (const auto& [key, value] : j.items()) c.pinned.push_back(key);
  }
  apply_patch(c, flags);
  for (const auto& [key, value] : flags.items()) {
    if (!c.is_pinned(key)) c.pinned.push_back(key);
  }
  return c;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& s) -> std::uint64_t {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("bad seed list '" + text + "'");
    return v;
  };
  std::vector<std::uint64_t> out;
  if (text.find(',') != std::string::npos) {
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(number(part));
  } else if (auto dash = text.find('-'); dash != std::string::npos) {
    const auto lo = number(text.substr(0, dash));
    const auto hi = number(text.substr(dash + 1));
    if (hi < lo) throw ConfigError("bad seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  } else {
    const auto n = number(text);
    for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("at least one seed is required");
  return out;
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.variant = variant_from_string(c.variant);
  m.text_dim = c.text_dim;
  m.user_dim = c.user_dim;
  m.score_dim = c.score_dim;
  m.text_hidden = c.text_hidden;
  m.user_hidden = c.user_hidden;
  m.score_hidden = c.score_hidden;
  m.max_turns = c.max_turns;
  m.max_users = c.max_users;
  m.classifier_widths = c.classifier;
  m.threshold = c.threshold;
  return m;
}

TrainingConfig training_config(const RunConfig& c) {
  TrainingConfig t;
  t.mode = training_mode_from_string(c.mode);
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.optimizer.learning_rate = c.lr;
  t.patience = c.patience;
  t.seeds = c.seeds;
  t.model = model_config(c);
  return t;
}

std::vector<std::string> model_keys() {
  return {"variant",    "text_dim",   "user_dim",     "score_dim",  "text_hidden", "user_hidden",
          "score_hidden", "max_turns", "max_users", "classifier"};
}

}  // namespace derail::cli
