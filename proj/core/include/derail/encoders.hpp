#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "derail/autodiff.hpp"
#include "derail/binning.hpp"
#include "derail/channels.hpp"
#include "derail/corpus.hpp"

namespace derail {

// ---------------------------------------------------------------- text

class TextEmbeddingProvider {
 public:
  virtual ~TextEmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual RowVector embed(const Turn& turn) const = 0;
  virtual std::string_view kind() const = 0;
};

// Bag of hashed tokens. Every token owns a pseudo-random direction derived
// from (seed, token); a turn is the sum of its token directions scaled by
// 1/sqrt(token count). Order-insensitive and fully deterministic.
class HashToyEncoder final : public TextEmbeddingProvider {
 public:
  HashToyEncoder(int dimension, std::uint64_t seed);

  int dimension() const override { return dimension_; }
  RowVector embed(const Turn& turn) const override;
  RowVector embed_text(std::string_view text) const;
  std::string_view kind() const override { return "hash-toy"; }
  std::uint64_t seed() const { return seed_; }

  // Lower-cased ASCII words with surrounding punctuation stripped.
  static std::vector<std::string> tokenize(std::string_view text);

 private:
  RowVector token_vector(std::string_view token) const;

  int dimension_;
  std::uint64_t seed_;
};

// Vectors produced offline (e.g. by a fine-tuned language model), keyed by
// turn id. Lookups must hit.
class PrecomputedEmbeddings final : public TextEmbeddingProvider {
 public:
  PrecomputedEmbeddings(int dimension, std::string corpus_hash);

  int dimension() const override { return dimension_; }
  RowVector embed(const Turn& turn) const override;
  std::string_view kind() const override { return "precomputed"; }

  void insert(std::string turn_id, RowVector vector);
  bool contains(std::string_view turn_id) const;
  std::size_t size() const { return table_.size(); }
  const std::string& corpus_hash() const { return corpus_hash_; }

  // Header line {"dimension": d, "corpus_hash": "..."} followed by one
  // {"turn_id": ..., "vector": [...]} record per line; values are float32.
  static PrecomputedEmbeddings load(const std::filesystem::path& path, std::string_view expected_corpus_hash);
  void save(const std::filesystem::path& path) const;

  // Embeds every turn of the corpus with `source`.
  static PrecomputedEmbeddings materialize(const TextEmbeddingProvider& source, const CorpusSplit& corpus);

 private:
  int dimension_;
  std::string corpus_hash_;
  std::map<std::string, RowVector, std::less<>> table_;
};

// Rows of `context` turns' raw text embeddings.
Matrix embed_text(const TextEmbeddingProvider& provider, std::span<const Turn> context);

// ---------------------------------------------------------------- users

// One vector per user id. Row 0 is the shared "unknown user" vector; row r
// of a user is fixed by the order of first sighting, and its initial value
// depends only on (seed, r).
class UserEmbeddingTable {
 public:
  static constexpr int kUnknownRow = 0;

  UserEmbeddingTable(int dimension, std::uint64_t seed);

  int intern(std::string_view user_id);
  // kUnknownRow for users never interned.
  int lookup(std::string_view user_id) const;

  int dimension() const { return dimension_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t user_count() const { return users_.size(); }
  const std::vector<std::string>& users() const { return users_; }
  const Matrix& vectors() const { return vectors_; }
  Matrix& vectors() { return vectors_; }

  // Rebuilds the id map from a saved row order; vectors stay zero.
  static UserEmbeddingTable from_users(int dimension, std::uint64_t seed, std::span<const std::string> users);

 private:
  RowVector initial_row(int row) const;

  int dimension_;
  std::uint64_t seed_;
  std::vector<std::string> users_;
  std::unordered_map<std::string, int> rows_;
  Matrix vectors_;
};

// Rows for the context turns; unseen users are interned on first sighting.
Matrix embed_users(UserEmbeddingTable& table, std::span<const Turn> context);
std::vector<int> user_rows(const UserEmbeddingTable& table, std::span<const Turn> context);

// ---------------------------------------------------------------- scores

// 7 x d: rows 0..5 are score bins, row 6 is "no score".
Matrix init_score_table(int dimension, std::uint64_t seed);
std::vector<int> score_rows(const BinningScheme& scheme, std::span<const Turn> context);
Matrix embed_scores(const BinningScheme& scheme, const Matrix& table, std::span<const Turn> context);

// ---------------------------------------------------------------- recurrence

// Gate blocks are laid out [input | forget | cell | output] along columns.
struct LstmWeights {
  Matrix input;      // d_in x 4h
  Matrix recurrent;  // h x 4h
  Matrix bias;       // 1 x 4h
};

struct SequenceEncoderParams {
  LstmWeights forward;
  LstmWeights backward;
  int hidden() const { return static_cast<int>(forward.recurrent.rows()); }
};

// One direction of a gated recurrence over the rows of X. Output row t is
// the hidden state after consuming row t; with `reverse` the rows are
// consumed from last to first.
ad::Var lstm_sequence(ad::Tape& tape, ad::Var x, ad::Var input_weights, ad::Var recurrent_weights, ad::Var bias,
                      bool reverse);

// Bidirectional encoding: [forward state | backward state] per row.
Matrix sequence_encode(const SequenceEncoderParams& params, const Matrix& x);

// Per-turn sequential encodings of one conversation's context.
struct EncodedConversation {
  std::string conv_id;
  std::optional<Matrix> text;   // T'
  std::optional<Matrix> user;   // U'
  std::optional<Matrix> score;  // S'

  bool has(Channel c) const { return channel(c).has_value(); }
  const std::optional<Matrix>& channel(Channel c) const;
};

}  // namespace derail
