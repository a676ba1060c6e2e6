#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace derail {

struct Turn {
  std::string turn_id;
  int index = 0;
  std::string user_id;
  std::string text;
  std::optional<int> score;                // up-votes minus down-votes
  std::optional<std::string> parent_id;    // turn replied to

  bool operator==(const Turn&) const = default;
};

// An ordered dialogue whose final turn carries the derailment label.
// Turns [0, N-1) are context; turn N-1 is the forecast target and is never
// shown to the model.
struct Conversation {
  std::string conv_id;
  std::vector<Turn> turns;
  std::optional<int> label;  // 0 = civil, 1 = personal attack

  std::size_t context_size() const { return turns.empty() ? 0 : turns.size() - 1; }
  std::span<const Turn> context() const { return {turns.data(), context_size()}; }
  // First k context turns.
  std::span<const Turn> prefix(std::size_t k) const;

  bool operator==(const Conversation&) const = default;
};

enum class Provenance { cga, cmv, synthetic };
enum class CorpusFormat { cga, cmv, jsonl };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);
CorpusFormat corpus_format_from_string(std::string_view s);

struct CorpusSplit {
  std::vector<Conversation> train;
  std::vector<Conversation> validation;
  std::vector<Conversation> test;
  Provenance provenance = Provenance::synthetic;
  // Whether turns carry public-perception scores at all.
  bool scored = false;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
  bool operator==(const CorpusSplit&) const = default;
};

struct Violation {
  enum class Severity { hard, soft };
  Severity severity;
  std::string code;
  std::string message;
};

// Hard violations make a conversation unusable; soft ones are warnings.
std::vector<Violation> validate_conversation(const Conversation& conv, bool scored_corpus = false);
bool has_hard_violation(const std::vector<Violation>& violations);

struct LoadOptions {
  CorpusFormat format = CorpusFormat::jsonl;
};

// `path` is either a directory with train.jsonl / validation.jsonl / test.jsonl
// (missing files are empty splits) or a single JSONL file whose records may
// carry a "split" field (default "train").
CorpusSplit load_corpus(const std::filesystem::path& path, CorpusFormat format);

// Parses one JSONL stream into conversations. `source` names the stream in
// error messages.
std::vector<Conversation> parse_conversations(std::string_view jsonl, std::string_view source);

std::string serialize_conversation(const Conversation& conv);
// Writes train.jsonl, validation.jsonl, test.jsonl and manifest.json into
// `dir`. Keys of `manifest_extra` are merged into the manifest.
void write_corpus(const CorpusSplit& split, const std::filesystem::path& dir,
                  const nlohmann::json& manifest_extra = nlohmann::json::object());

// Label balance: |#positive - #negative| for one split.
std::size_t label_imbalance(std::span<const Conversation> convs);

// Stable 64-bit FNV-1a digest of conversation ids, turn ids and texts,
// used to pin precomputed text embeddings to the corpus they came from.
std::string corpus_content_hash(const CorpusSplit& split);

const Conversation* find_conversation(const CorpusSplit& split, std::string_view conv_id);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 1469598103934665603ULL);

}  // namespace derail
