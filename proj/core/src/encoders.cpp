#include "derail/encoders.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "derail/error.hpp"
#include "derail/random.hpp"

namespace derail {

using nlohmann::json;

// ---------------------------------------------------------------- text

HashToyEncoder::HashToyEncoder(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) throw ConfigError("hash-toy dimension must be positive");
}

std::vector<std::string> HashToyEncoder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80 || c == '\'' || c == '-' || c == '_') {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

RowVector HashToyEncoder::token_vector(std::string_view token) const {
  std::mt19937_64 rng(mix_seed(seed_, fnv1a64(token)));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  RowVector v(dimension_);
  for (int i = 0; i < dimension_; ++i) v(i) = dist(rng);
  return v;
}

RowVector HashToyEncoder::embed_text(std::string_view text) const {
  RowVector out = RowVector::Zero(dimension_);
  const auto tokens = tokenize(text);
  if (tokens.empty()) return out;
  for (const auto& t : tokens) out += token_vector(t);
  return out / std::sqrt(static_cast<double>(tokens.size()));
}

RowVector HashToyEncoder::embed(const Turn& turn) const { return embed_text(turn.text); }

PrecomputedEmbeddings::PrecomputedEmbeddings(int dimension, std::string corpus_hash)
    : dimension_(dimension), corpus_hash_(std::move(corpus_hash)) {
  if (dimension <= 0) throw ConfigError("embedding dimension must be positive");
}

RowVector PrecomputedEmbeddings::embed(const Turn& turn) const {
  auto it = table_.find(turn.turn_id);
  if (it == table_.end()) throw ValidationError("no precomputed embedding for turn " + turn.turn_id);
  return it->second;
}

void PrecomputedEmbeddings::insert(std::string turn_id, RowVector vector) {
  if (vector.size() != dimension_) {
    throw ShapeError("embedding for " + turn_id + " has " + std::to_string(vector.size()) + " entries, expected " +
                     std::to_string(dimension_));
  }
  table_.insert_or_assign(std::move(turn_id), std::move(vector));
}

bool PrecomputedEmbeddings::contains(std::string_view turn_id) const { return table_.find(turn_id) != table_.end(); }

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path,
                                                  std::string_view expected_corpus_hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty embedding file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ":1: malformed header (" + e.what() + ")");
  }
  if (!header.contains("dimension") || !header.contains("corpus_hash")) {
    throw SchemaError(path.string() + ":1: header needs 'dimension' and 'corpus_hash'");
  }
  PrecomputedEmbeddings out(header["dimension"].get<int>(), header["corpus_hash"].get<std::string>());
  if (!expected_corpus_hash.empty() && out.corpus_hash_ != expected_corpus_hash) {
    throw ValidationError(path.string() + ": embeddings were produced for corpus " + out.corpus_hash_ +
                          " but the loaded corpus hashes to " + std::string(expected_corpus_hash));
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed record (" + e.what() + ")");
    }
    if (!rec.contains("turn_id") || !rec.contains("vector") || !rec["vector"].is_array()) {
      throw SchemaError(where + ": record needs 'turn_id' and 'vector'");
    }
    const auto values = rec["vector"].get<std::vector<float>>();
    RowVector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
    try {
      out.insert(rec["turn_id"].get<std::string>(), std::move(v));
    } catch (const ShapeError& e) {
      throw ShapeError(where + ": " + e.what());
    }
  }
  return out;
}

void PrecomputedEmbeddings::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file " + path.string());
  out << json{{"dimension", dimension_}, {"corpus_hash", corpus_hash_}}.dump() << '\n';
  for (const auto& [id, v] : table_) {
    std::vector<float> values(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    out << json{{"turn_id", id}, {"vector", values}}.dump() << '\n';
  }
}

PrecomputedEmbeddings PrecomputedEmbeddings::materialize(const TextEmbeddingProvider& source,
                                                         const CorpusSplit& corpus) {
  PrecomputedEmbeddings out(source.dimension(), corpus_content_hash(corpus));
  for (const auto* part : {&corpus.train, &corpus.validation, &corpus.test}) {
    for (const auto& c : *part) {
      for (const auto& t : c.turns) out.insert(t.turn_id, source.embed(t));
    }
  }
  return out;
}

Matrix embed_text(const TextEmbeddingProvider& provider, std::span<const Turn> context) {
  Matrix out(static_cast<Eigen::Index>(context.size()), provider.dimension());
  for (std::size_t i = 0; i < context.size(); ++i) {
    RowVector v = provider.embed(context[i]);
    if (v.size() != provider.dimension()) throw ShapeError("text provider returned a vector of the wrong size");
    out.row(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

// ---------------------------------------------------------------- users

UserEmbeddingTable::UserEmbeddingTable(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) throw ConfigError("user embedding dimension must be positive");
  vectors_ = Matrix(1, dimension);
  vectors_.row(0) = initial_row(0);
}

RowVector UserEmbeddingTable::initial_row(int row) const {
  std::mt19937_64 rng(mix_seed(seed_, 0x75736572ULL + static_cast<std::uint64_t>(row)));
  return uniform_matrix(1, dimension_, 1.0, rng).row(0);
}

int UserEmbeddingTable::intern(std::string_view user_id) {
  if (int r = lookup(user_id); r != kUnknownRow) return r;
  const int row = static_cast<int>(users_.size()) + 1;
  users_.emplace_back(user_id);
  rows_.emplace(std::string(user_id), row);
  vectors_.conservativeResize(row + 1, Eigen::NoChange);
  vectors_.row(row) = initial_row(row);
  return row;
}

int UserEmbeddingTable::lookup(std::string_view user_id) const {
  auto it = rows_.find(std::string(user_id));
  return it == rows_.end() ? kUnknownRow : it->second;
}

UserEmbeddingTable UserEmbeddingTable::from_users(int dimension, std::uint64_t seed,
                                                  std::span<const std::string> users) {
  UserEmbeddingTable t(dimension, seed);
  for (const auto& u : users) t.intern(u);
  return t;
}

Matrix embed_users(UserEmbeddingTable& table, std::span<const Turn> context) {
  Matrix out(static_cast<Eigen::Index>(context.size()), table.dimension());
  for (std::size_t i = 0; i < context.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = table.vectors().row(table.intern(context[i].user_id));
  }
  return out;
}

std::vector<int> user_rows(const UserEmbeddingTable& table, std::span<const Turn> context) {
  std::vector<int> rows;
  rows.reserve(context.size());
  for (const auto& t : context) rows.push_back(table.lookup(t.user_id));
  return rows;
}

// ---------------------------------------------------------------- scores

Matrix init_score_table(int dimension, std::uint64_t seed) {
  if (dimension <= 0) throw ConfigError("score embedding dimension must be positive");
  std::mt19937_64 rng(mix_seed(seed, 0x73636f7265ULL));
  return uniform_matrix(BinningScheme::kBinCount + 1, dimension, 1.0, rng);
}

std::vector<int> score_rows(const BinningScheme& scheme, std::span<const Turn> context) {
  std::vector<int> rows;
  rows.reserve(context.size());
  for (const auto& t : context) rows.push_back(t.score ? assign_bin(scheme, *t.score) : BinningScheme::kUnknownBin);
  return rows;
}

Matrix embed_scores(const BinningScheme& scheme, const Matrix& table, std::span<const Turn> context) {
  if (table.rows() != BinningScheme::kBinCount + 1) throw ShapeError("score table must have 7 rows");
  Matrix out(static_cast<Eigen::Index>(context.size()), table.cols());
  const auto rows = score_rows(scheme, context);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(rows[i]);
  return out;
}

// ---------------------------------------------------------------- recurrence

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmStep {
  RowVector x;
  RowVector h_prev;
  RowVector c_prev;
  RowVector i, f, g, o;
  RowVector c;
  RowVector tanh_c;
};

}  // namespace

ad::Var lstm_sequence(ad::Tape& tape, ad::Var x, ad::Var input_weights, ad::Var recurrent_weights, ad::Var bias,
                      bool reverse) {
  const Matrix& X = tape.value(x);
  const Matrix& Wx = tape.value(input_weights);
  const Matrix& Wh = tape.value(recurrent_weights);
  const Matrix& b = tape.value(bias);
  const Eigen::Index h = Wh.rows();
  if (Wh.cols() != 4 * h || Wx.cols() != 4 * h || b.rows() != 1 || b.cols() != 4 * h) {
    throw ShapeError("lstm: weight blocks must have 4*hidden columns");
  }
  if (X.cols() != Wx.rows()) {
    throw ShapeError("lstm: input has " + std::to_string(X.cols()) + " columns, weights expect " +
                     std::to_string(Wx.rows()));
  }
  if (X.rows() < 1) throw ShapeError("lstm: empty sequence");

  const Eigen::Index n = X.rows();
  auto steps = std::make_shared<std::vector<LstmStep>>(static_cast<std::size_t>(n));
  Matrix out(n, h);
  RowVector hs = RowVector::Zero(h);
  RowVector cs = RowVector::Zero(h);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    LstmStep& s = (*steps)[static_cast<std::size_t>(k)];
    s.x = X.row(t);
    s.h_prev = hs;
    s.c_prev = cs;
    RowVector z = s.x * Wx + hs * Wh + b.row(0);
    s.i = z.segment(0, h).unaryExpr(&logistic);
    s.f = z.segment(h, h).unaryExpr(&logistic);
    s.g = z.segment(2 * h, h).array().tanh().matrix();
    s.o = z.segment(3 * h, h).unaryExpr(&logistic);
    s.c = s.f.cwiseProduct(cs) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    hs = s.o.cwiseProduct(s.tanh_c);
    cs = s.c;
    out.row(t) = hs;
  }

  return tape.record(std::move(out), {x, input_weights, recurrent_weights, bias},
                     [=](ad::Tape& t, ad::Var self) {
                       const Matrix& G = t.grad(self);
                       const Matrix& Wx_ = t.value(input_weights);
                       const Matrix& Wh_ = t.value(recurrent_weights);
                       const bool gx = t.needs_grad(x);
                       const bool gwx = t.needs_grad(input_weights);
                       const bool gwh = t.needs_grad(recurrent_weights);
                       const bool gb = t.needs_grad(bias);
                       RowVector dh_next = RowVector::Zero(h);
                       RowVector dc_next = RowVector::Zero(h);
                       RowVector dz(4 * h);
                       for (Eigen::Index k = n - 1; k >= 0; --k) {
                         const Eigen::Index row = reverse ? n - 1 - k : k;
                         const LstmStep& s = (*steps)[static_cast<std::size_t>(k)];
                         RowVector dh = G.row(row) + dh_next;
                         RowVector dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct(
                                                      (1.0 - s.tanh_c.array().square()).matrix());
                         RowVector d_o = dh.cwiseProduct(s.tanh_c);
                         RowVector d_i = dc.cwiseProduct(s.g);
                         RowVector d_g = dc.cwiseProduct(s.i);
                         RowVector d_f = dc.cwiseProduct(s.c_prev);
                         dc_next = dc.cwiseProduct(s.f);
                         dz.segment(0, h) = d_i.array() * s.i.array() * (1.0 - s.i.array());
                         dz.segment(h, h) = d_f.array() * s.f.array() * (1.0 - s.f.array());
                         dz.segment(2 * h, h) = d_g.array() * (1.0 - s.g.array().square());
                         dz.segment(3 * h, h) = d_o.array() * s.o.array() * (1.0 - s.o.array());
                         if (gwx) t.grad(input_weights).noalias() += s.x.transpose() * dz;
                         if (gwh) t.grad(recurrent_weights).noalias() += s.h_prev.transpose() * dz;
                         if (gb) t.grad(bias).row(0) += dz;
                         if (gx) t.grad(x).row(row).noalias() += dz * Wx_.transpose();
                         dh_next.noalias() = dz * Wh_.transpose();
                       }
                     });
}

Matrix sequence_encode(const SequenceEncoderParams& params, const Matrix& x) {
  ad::Tape tape;
  ad::Var in = tape.constant(x);
  auto direction = [&](const LstmWeights& w, bool reverse) {
    return lstm_sequence(tape, in, tape.constant(w.input), tape.constant(w.recurrent), tape.constant(w.bias),
                         reverse);
  };
  const ad::Var parts[] = {direction(params.forward, false), direction(params.backward, true)};
  return tape.value(ad::concat_cols(tape, parts));
}

const std::optional<Matrix>& EncodedConversation::channel(Channel c) const {
  switch (c) {
    case Channel::text: return text;
    case Channel::user: return user;
    case Channel::score: return score;
  }
  return text;
}

}  // namespace derail
