#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "derail/encoders.hpp"
#include "derail/error.hpp"
#include "derail/random.hpp"
#include "support/temp_dir.hpp"

namespace derail {
namespace {

Turn turn(const std::string& id, const std::string& user, const std::string& text, std::optional<int> score = {}) {
  Turn t;
  t.turn_id = id;
  t.user_id = user;
  t.text = text;
  t.score = score;
  return t;
}

TEST(HashToy, OrderInsensitiveBagOfTokens) {
  const HashToyEncoder enc(16, 3);
  EXPECT_EQ(enc.embed_text("a b a"), enc.embed_text("b a a"));
  EXPECT_NE(enc.embed_text("a b a"), enc.embed_text("a b b"));
}

TEST(HashToy, DeterministicAcrossInstances) {
  const HashToyEncoder a(32, 9);
  const HashToyEncoder b(32, 9);
  const HashToyEncoder c(32, 10);
  EXPECT_EQ(a.embed_text("Same text, same vector."), b.embed_text("Same text, same vector."));
  EXPECT_NE(a.embed_text("same"), c.embed_text("same"));
}

TEST(HashToy, IdenticalTurnTextsGiveIdenticalRows) {
  const HashToyEncoder enc(8, 1);
  const std::vector<Turn> ctx{turn("a", "u", "hello world"), turn("b", "v", "hello world")};
  const Matrix m = embed_text(enc, ctx);
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 8);
  EXPECT_EQ(m.row(0), m.row(1));
}

TEST(HashToy, TokenizerLowercasesAndStripsPunctuation) {
  EXPECT_EQ(HashToyEncoder::tokenize("Hello, WORLD!  it's"), (std::vector<std::string>{"hello", "world", "it's"}));
  EXPECT_TRUE(HashToyEncoder::tokenize("  ... ").empty());
}

TEST(HashToy, EmptyTextIsDefined) {
  const HashToyEncoder enc(8, 1);
  const RowVector v = enc.embed_text("");
  EXPECT_EQ(v.size(), 8);
  EXPECT_TRUE(v.allFinite());
}

TEST(Precomputed, SaveLoadRoundTrip) {
  test::TempDir dir;
  PrecomputedEmbeddings table(3, "hash-1");
  table.insert("t1", (RowVector(3) << 0.5, -1.25, 2.0).finished());
  table.insert("t2", (RowVector(3) << 0.0, 1.0, -0.5).finished());
  table.save(dir.path() / "e.jsonl");
  const PrecomputedEmbeddings back = PrecomputedEmbeddings::load(dir.path() / "e.jsonl", "hash-1");
  EXPECT_EQ(back.dimension(), 3);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.embed(turn("t1", "u", "")), table.embed(turn("t1", "u", "")));
}

TEST(Precomputed, CorpusHashMismatchRejected) {
  test::TempDir dir;
  PrecomputedEmbeddings table(2, "hash-1");
  table.insert("t1", RowVector::Zero(2));
  table.save(dir.path() / "e.jsonl");
  EXPECT_THROW(PrecomputedEmbeddings::load(dir.path() / "e.jsonl", "hash-2"), Error);
}

TEST(Precomputed, MissingTurnNamesTheTurn) {
  PrecomputedEmbeddings table(2, "h");
  table.insert("present", RowVector::Zero(2));
  try {
    table.embed(turn("absent-turn", "u", "x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("absent-turn"), std::string::npos);
  }
}

TEST(Precomputed, WrongWidthRejected) {
  PrecomputedEmbeddings table(2, "h");
  EXPECT_THROW(table.insert("t", RowVector::Zero(3)), ShapeError);
}

TEST(Precomputed, MissingFileIsIoError) {
  EXPECT_THROW(PrecomputedEmbeddings::load("/nonexistent/e.jsonl", "h"), IoError);
}

TEST(Users, SameUserSameRowDifferentUsersDiffer) {
  UserEmbeddingTable table(4, 5);
  const std::vector<Turn> ctx{turn("a", "ann", ""), turn("b", "bo", ""), turn("c", "ann", "")};
  const Matrix m = embed_users(table, ctx);
  EXPECT_EQ(m.row(0), m.row(2));
  EXPECT_NE(m.row(0), m.row(1));
}

TEST(Users, UnseenUsersMapToUnknownRow) {
  UserEmbeddingTable table(4, 5);
  table.intern("ann");
  EXPECT_NE(table.lookup("ann"), UserEmbeddingTable::kUnknownRow);
  EXPECT_EQ(table.lookup("zed"), UserEmbeddingTable::kUnknownRow);
  const std::vector<Turn> ctx{turn("a", "zed", "")};
  EXPECT_EQ(user_rows(table, ctx), std::vector<int>{UserEmbeddingTable::kUnknownRow});
}

TEST(Users, DeterministicTables) {
  auto build = [] {
    UserEmbeddingTable t(6, 11);
    for (const char* u : {"a", "b", "c"}) t.intern(u);
    return t.vectors();
  };
  EXPECT_EQ(build(), build());
}

TEST(Scores, RowsFollowBins) {
  BinningScheme s;
  s.negative_boundaries = {-2, -1};
  s.nonnegative_boundaries = {2, 3};
  const Matrix table = init_score_table(4, 2);
  EXPECT_EQ(table.rows(), 7);
  const std::vector<Turn> ctx{turn("a", "u", "", -3), turn("b", "u", "", 2), turn("c", "u", "", std::nullopt),
                              turn("d", "u", "", -3)};
  EXPECT_EQ(score_rows(s, ctx), (std::vector<int>{0, 4, BinningScheme::kUnknownBin, 0}));
  const Matrix m = embed_scores(s, table, ctx);
  EXPECT_EQ(m.row(0), m.row(3));
  EXPECT_EQ(m.row(2), table.row(6));
}

SequenceEncoderParams random_params(int in, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SequenceEncoderParams p;
  for (LstmWeights* w : {&p.forward, &p.backward}) {
    w->input = uniform_matrix(in, 4 * h, 0.8, rng);
    w->recurrent = uniform_matrix(h, 4 * h, 0.8, rng);
    w->bias = uniform_matrix(1, 4 * h, 0.5, rng);
  }
  return p;
}

TEST(SequenceEncoder, SingletonSequence) {
  const SequenceEncoderParams p = random_params(3, 2, 1);
  const Matrix out = sequence_encode(p, Matrix::Ones(1, 3));
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 4);
}

TEST(SequenceEncoder, ZeroWeightsGiveConstantRows) {
  SequenceEncoderParams p;
  for (LstmWeights* w : {&p.forward, &p.backward}) {
    w->input = Matrix::Zero(3, 8);
    w->recurrent = Matrix::Zero(2, 8);
    w->bias = Matrix::Zero(1, 8);
  }
  std::mt19937_64 rng(4);
  const Matrix out = sequence_encode(p, uniform_matrix(5, 3, 1.0, rng));
  // Gates sit at 1/2 and the candidate at 0, so the cell never leaves 0.
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(SequenceEncoder, ReversalSwapsDirections) {
  const SequenceEncoderParams p = random_params(3, 2, 8);
  SequenceEncoderParams swapped;
  swapped.forward = p.backward;
  swapped.backward = p.forward;
  std::mt19937_64 rng(3);
  const Matrix x = uniform_matrix(3, 3, 1.0, rng);
  const Matrix reversed_x = x.colwise().reverse();
  const Matrix a = sequence_encode(p, x);
  const Matrix b = sequence_encode(swapped, reversed_x);
  for (int t = 0; t < 3; ++t) {
    EXPECT_LT((a.row(t).head(2) - b.row(2 - t).tail(2)).norm(), 1e-14);
    EXPECT_LT((a.row(t).tail(2) - b.row(2 - t).head(2)).norm(), 1e-14);
  }
}

TEST(SequenceEncoder, ShapeMismatchRejected) {
  const SequenceEncoderParams p = random_params(3, 2, 1);
  EXPECT_THROW(sequence_encode(p, Matrix::Ones(2, 4)), ShapeError);
}

}  // namespace
}  // namespace derail
