#include "derail/model.hpp"

#include <cmath>
#include <random>

#include "derail/error.hpp"
#include "derail/random.hpp"

namespace derail {

int ModelConfig::hidden(Channel c) const {
  switch (c) {
    case Channel::text: return text_hidden;
    case Channel::user: return user_hidden;
    case Channel::score: return score_hidden;
  }
  return text_hidden;
}

int ModelConfig::input_dim(Channel c) const {
  switch (c) {
    case Channel::text: return text_dim;
    case Channel::user: return user_dim;
    case Channel::score: return score_dim;
  }
  return text_dim;
}

int ModelConfig::turn_vector_dim() const {
  int dim = 0;
  for (Channel c : channels_of(variant)) dim += 4 * hidden(c);
  return dim;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"text_dim", c.text_dim},
          {"user_dim", c.user_dim},
          {"score_dim", c.score_dim},
          {"text_hidden", c.text_hidden},
          {"user_hidden", c.user_hidden},
          {"score_hidden", c.score_hidden},
          {"max_turns", c.max_turns},
          {"max_users", c.max_users},
          {"classifier_widths", c.classifier_widths},
          {"threshold", c.threshold}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.text_dim = j.at("text_dim").get<int>();
    c.user_dim = j.at("user_dim").get<int>();
    c.score_dim = j.at("score_dim").get<int>();
    c.text_hidden = j.at("text_hidden").get<int>();
    c.user_hidden = j.at("user_hidden").get<int>();
    c.score_hidden = j.at("score_hidden").get<int>();
    c.max_turns = j.at("max_turns").get<int>();
    c.max_users = j.at("max_users").get<int>();
    c.classifier_widths = j.at("classifier_widths").get<std::vector<int>>();
    c.threshold = j.at("threshold").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model config: ") + e.what());
  }
}

namespace {

void validate_config(const ModelConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(c.text_dim, "text_dim");
  positive(c.user_dim, "user_dim");
  positive(c.score_dim, "score_dim");
  positive(c.text_hidden, "text_hidden");
  positive(c.user_hidden, "user_hidden");
  positive(c.score_hidden, "score_hidden");
  positive(c.max_turns, "max_turns");
  positive(c.max_users, "max_users");
  for (int w : c.classifier_widths) positive(w, "classifier width");
  if (c.threshold < 0.0 || c.threshold > 1.0) throw ConfigError("threshold must lie in [0, 1]");
}

}  // namespace

FgcnModel::FgcnModel(ModelConfig config, UserEmbeddingTable users, std::optional<BinningScheme> binning)
    : config_(std::move(config)), users_(std::move(users)), binning_(binning) {
  validate_config(config_);
  if (uses(config_.variant, Channel::score) && !binning_) {
    throw ChannelUnavailable("score: variant " + std::string(to_string(config_.variant)) +
                             " needs a fitted score binning");
  }
}

void FgcnModel::allocate_tensors() {
  if (uses(config_.variant, Channel::user)) {
    user_table_ = params_.add("user.embedding", static_cast<Eigen::Index>(users_.user_count()) + 1, config_.user_dim);
  }
  if (uses(config_.variant, Channel::score)) {
    score_table_ = params_.add("score.embedding", BinningScheme::kBinCount + 1, config_.score_dim);
  }

  const int R = config_.relation_count();
  for (Channel c : channels_of(config_.variant)) {
    const std::string p(1, channel_tag(c));
    const int in = config_.input_dim(c);
    const int h = config_.hidden(c);
    const int d = 2 * h;
    ChannelParams cp;
    cp.fwd_input = params_.add(p + ".lstm.fwd.W_x", in, 4 * h);
    cp.fwd_recurrent = params_.add(p + ".lstm.fwd.W_h", h, 4 * h);
    cp.fwd_bias = params_.add(p + ".lstm.fwd.b", 1, 4 * h);
    cp.bwd_input = params_.add(p + ".lstm.bwd.W_x", in, 4 * h);
    cp.bwd_recurrent = params_.add(p + ".lstm.bwd.W_h", h, 4 * h);
    cp.bwd_bias = params_.add(p + ".lstm.bwd.b", 1, 4 * h);
    cp.attention = params_.add(p + ".W_e", d, d);
    cp.relation_weights = params_.add(p + ".W_r", static_cast<Eigen::Index>(R) * d, d);
    cp.self_weight = params_.add(p + ".W_0", d, d);
    cp.log_norm = params_.add(p + ".log_c", 1, R);
    cp.neighbor_weight = params_.add(p + ".W", d, d);
    cp.self_weight2 = params_.add(p + ".W_0_2", d, d);
    channels_[static_cast<std::size_t>(c)] = cp;
  }

  int width = config_.max_turns * config_.turn_vector_dim();
  std::vector<int> widths = config_.classifier_widths;
  widths.push_back(1);
  for (std::size_t k = 0; k < widths.size(); ++k) {
    const std::string name = k + 1 == widths.size() ? "clf.out" : "clf." + std::to_string(k);
    classifier_.push_back(Layer{params_.add(name + ".W", width, widths[k]), params_.add(name + ".b", 1, widths[k])});
    width = widths[k];
  }
  params_.zero_grad();
}

FgcnModel FgcnModel::allocate(const ModelConfig& config, std::span<const std::string> users,
                              std::optional<BinningScheme> binning) {
  FgcnModel m(config, UserEmbeddingTable::from_users(config.user_dim, 0, users), binning);
  m.allocate_tensors();
  return m;
}

FgcnModel FgcnModel::initialize(const ModelConfig& config, std::uint64_t seed, std::span<const Conversation> train,
                                std::optional<BinningScheme> binning) {
  UserEmbeddingTable table(config.user_dim, mix_seed(seed, 11));
  for (const auto& c : train) embed_users(table, c.context());

  FgcnModel m(config, std::move(table), binning);
  m.allocate_tensors();
  m.lineage_ = SeedLineage{seed, seed};

  if (uses(config.variant, Channel::user)) m.params_[m.user_table_].value = m.users_.vectors();
  if (uses(config.variant, Channel::score)) {
    m.params_[m.score_table_].value = init_score_table(config.score_dim, mix_seed(seed, 12));
  }

  std::mt19937_64 rng(mix_seed(seed, 13));
  for (auto& p : m.params_.all()) {
    if (p.name == "user.embedding" || p.name == "score.embedding") continue;
    const bool bias = p.name.ends_with(".b") || p.name.ends_with(".log_c");
    if (bias) {
      // Forget gates start open so early turns survive the recurrence.
      if (p.name.find(".lstm.") != std::string::npos) {
        const Eigen::Index h = p.value.cols() / 4;
        p.value.middleCols(h, h).setOnes();
      }
      continue;
    }
    // W_r blocks are d x d' each; everything else has fan-in = rows.
    Eigen::Index fan_in = p.value.rows();
    if (p.name.ends_with(".W_r")) fan_in = p.value.rows() / config.relation_count();
    p.value = uniform_matrix(p.value.rows(), p.value.cols(), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  }
  return m;
}

std::span<const Turn> FgcnModel::window(std::span<const Turn> context) const {
  const auto cap = static_cast<std::size_t>(config_.max_turns);
  return context.size() > cap ? context.last(cap) : context;
}

ad::Var FgcnModel::input_rows(ad::Tape& tape, const Binder& bind, Channel c, std::span<const Turn> context,
                              const TextEmbeddingProvider& text) const {
  switch (c) {
    case Channel::text:
      if (text.dimension() != config_.text_dim) {
        throw ShapeError("text embeddings have dimension " + std::to_string(text.dimension()) +
                         " but the model expects " + std::to_string(config_.text_dim));
      }
      return tape.constant(embed_text(text, context));
    case Channel::user:
      return ad::gather_rows(tape, bind(user_table_), user_rows(users_, context));
    case Channel::score:
      return ad::gather_rows(tape, bind(score_table_), score_rows(*binning_, context));
  }
  throw ConfigError("unknown channel");
}

ad::Var FgcnModel::encode_channel(ad::Tape& tape, const Binder& bind, Channel c, ad::Var input) const {
  const ChannelParams& cp = *channels_[static_cast<std::size_t>(c)];
  const ad::Var halves[] = {
      lstm_sequence(tape, input, bind(cp.fwd_input), bind(cp.fwd_recurrent), bind(cp.fwd_bias), false),
      lstm_sequence(tape, input, bind(cp.bwd_input), bind(cp.bwd_recurrent), bind(cp.bwd_bias), true)};
  return ad::concat_cols(tape, halves);
}

ad::Var FgcnModel::build(ad::Tape& tape, const Binder& bind, std::span<const Turn> context,
                         const TextEmbeddingProvider& text, ForwardTrace* trace) const {
  if (context.empty()) throw ValidationError("forecasting needs at least one context turn");
  const auto win = window(context);
  if (trace != nullptr) {
    trace->truncated = win.size() < context.size();
    trace->context_turns = static_cast<int>(win.size());
    trace->consumed.clear();
  }
  const GraphTopology topology = build_topology(win, config_.max_users);

  std::vector<ad::Var> encoded;
  std::vector<ad::Var> transformed;
  for (Channel c : channels_of(config_.variant)) {
    const ChannelParams& cp = *channels_[static_cast<std::size_t>(c)];
    ad::Var h = encode_channel(tape, bind, c, input_rows(tape, bind, c, win, text));
    ad::Var alpha = attention_weights(tape, topology, h, bind(cp.attention));
    ad::Var h1 = rgcn_step1(tape, topology, h, alpha, bind(cp.relation_weights), bind(cp.self_weight),
                            bind(cp.log_norm));
    ad::Var h2 = rgcn_step2(tape, topology, h1, alpha, bind(cp.neighbor_weight), bind(cp.self_weight2));
    encoded.push_back(h);
    transformed.push_back(h2);
    if (trace != nullptr) trace->consumed.push_back(c);
  }

  // g_i = [x'_i for active x..., x''_i for active x...]; C' = [g_1, ..., g_k, 0, ...]
  std::vector<ad::Var> parts = encoded;
  parts.insert(parts.end(), transformed.begin(), transformed.end());
  ad::Var x = ad::flatten_padded(tape, ad::concat_cols(tape, parts), config_.max_turns);

  for (std::size_t k = 0; k < classifier_.size(); ++k) {
    x = ad::add_row(tape, ad::matmul(tape, x, bind(classifier_[k].weight)), bind(classifier_[k].bias));
    if (k + 1 < classifier_.size()) x = ad::relu(tape, x);
  }
  return ad::sigmoid(tape, x);
}

ForecastProbability FgcnModel::forward(std::span<const Turn> context, const TextEmbeddingProvider& text,
                                       ForwardTrace* trace) const {
  ad::Tape tape;
  const Binder bind = [&](ParamId id) { return tape.parameter(params_[id]); };
  ad::Var p = build(tape, bind, context, text, trace);
  return ForecastProbability{tape.value(p)(0, 0), config_.threshold};
}

ForecastProbability FgcnModel::forward(const Conversation& conv, const TextEmbeddingProvider& text,
                                       ForwardTrace* trace) const {
  return forward(conv.context(), text, trace);
}

double FgcnModel::accumulate_gradient(std::span<const Turn> context, int label, const TextEmbeddingProvider& text) {
  ad::Tape tape;
  const Binder bind = [&](ParamId id) { return tape.parameter(params_[id]); };
  ad::Var loss = ad::binary_cross_entropy(tape, build(tape, bind, context, text, nullptr), label);
  tape.backward(loss);
  return tape.value(loss)(0, 0);
}

double FgcnModel::loss(std::span<const Turn> context, int label, const TextEmbeddingProvider& text) const {
  ad::Tape tape;
  const Binder bind = [&](ParamId id) { return tape.parameter(params_[id]); };
  return tape.value(ad::binary_cross_entropy(tape, build(tape, bind, context, text, nullptr), label))(0, 0);
}

EncodedConversation FgcnModel::encode(const Conversation& conv, const TextEmbeddingProvider& text) const {
  ad::Tape tape;
  const Binder bind = [&](ParamId id) { return tape.parameter(params_[id]); };
  const auto win = window(conv.context());
  if (win.empty()) throw ValidationError(conv.conv_id + ": no context turns to encode");
  EncodedConversation out;
  out.conv_id = conv.conv_id;
  for (Channel c : channels_of(config_.variant)) {
    Matrix m = tape.value(encode_channel(tape, bind, c, input_rows(tape, bind, c, win, text)));
    switch (c) {
      case Channel::text: out.text = std::move(m); break;
      case Channel::user: out.user = std::move(m); break;
      case Channel::score: out.score = std::move(m); break;
    }
  }
  return out;
}

std::vector<ConversationGraph> FgcnModel::graphs(std::span<const Turn> context,
                                                 const TextEmbeddingProvider& text) const {
  ad::Tape tape;
  const Binder bind = [&](ParamId id) { return tape.parameter(params_[id]); };
  const auto win = window(context);
  const GraphTopology topology = build_topology(win, config_.max_users);
  std::vector<ConversationGraph> out;
  for (Channel c : channels_of(config_.variant)) {
    Matrix h = tape.value(encode_channel(tape, bind, c, input_rows(tape, bind, c, win, text)));
    out.push_back(compute_edge_weights(params_[channels_[static_cast<std::size_t>(c)]->attention].value, h,
                                       topology, c));
  }
  return out;
}

void require_channels(Variant variant, const CorpusSplit& corpus) {
  if (uses(variant, Channel::score) && !corpus.scored) {
    std::string why = corpus.provenance == Provenance::cga ? " (CGA does not provide any public perception data)"
                                                           : " (corpus carries no vote scores)";
    throw ChannelUnavailable("score channel requested by variant " + std::string(to_string(variant)) + why);
  }
}

}  // namespace derail
