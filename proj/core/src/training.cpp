#include "derail/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "derail/error.hpp"
#include "derail/random.hpp"

namespace derail {

using nlohmann::json;

std::string to_string(TrainingMode m) { return m == TrainingMode::dynamic ? "dynamic" : "static"; }

TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "static") return TrainingMode::static_prefix;
  if (s == "dynamic") return TrainingMode::dynamic;
  throw ConfigError("unknown training mode '" + s + "' (expected static or dynamic)");
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning rate must be a finite nonnegative number");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (model.max_turns < 1) throw ConfigError("max_turns must be >= 1");
}

json to_json(const TrainingConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer",
           {{"name", "adam"},
            {"learning_rate", c.optimizer.learning_rate},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon}}},
          {"patience", c.patience},
          {"seeds", c.seeds},
          {"model", to_json(c.model)}};
}

TrainingConfig training_config_from_json(const json& j) {
  try {
    TrainingConfig c;
    if (j.contains("mode")) c.mode = training_mode_from_string(j.at("mode").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    }
    c.patience = j.value("patience", c.patience);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
}

std::vector<TrainingInstance> expand_dynamic(const Conversation& conv, std::size_t index) {
  const int k_max = static_cast<int>(conv.context_size());
  if (k_max < 1) throw ValidationError(conv.conv_id + ": needs at least one context turn");
  std::vector<TrainingInstance> out;
  out.reserve(k_max);
  for (int k = 1; k <= k_max; ++k) out.push_back({conv.conv_id, index, k, conv.label.value_or(0)});
  return out;
}

std::vector<TrainingInstance> expand_static(const Conversation& conv, std::size_t index) {
  const int k_max = static_cast<int>(conv.context_size());
  if (k_max < 1) throw ValidationError(conv.conv_id + ": needs at least one context turn");
  return {{conv.conv_id, index, k_max, conv.label.value_or(0)}};
}

std::vector<TrainingInstance> expand(std::span<const Conversation> convs, TrainingMode mode) {
  std::vector<TrainingInstance> out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    auto part = mode == TrainingMode::dynamic ? expand_dynamic(convs[i], i) : expand_static(convs[i], i);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double bce_loss(double probability, int label) {
  const double p = std::clamp(probability, 1e-7, 1.0 - 1e-7);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

AdamOptimizer::AdamOptimizer(AdamSettings settings, const ParameterStore& params) : settings_(settings) {
  for (const auto& p : params.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamOptimizer::step(ParameterStore& params) {
  auto& all = params.all();
  if (all.size() != m_.size()) throw ConfigError("optimizer was built for a different parameter set");
  ++t_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Matrix& g = all[i].grad;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    const Matrix m_hat = m_[i] / c1;
    const Matrix v_hat = v_[i] / c2;
    all[i].value -= settings_.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + settings_.epsilon)).matrix();
  }
}

json to_json(const TrainingHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation", to_json(e.validation)}});
  }
  return {{"seed", h.seed},
          {"mode", h.mode},
          {"instances", h.instance_count},
          {"positive_ratio", h.positive_ratio},
          {"best_epoch", h.best_epoch},
          {"best_validation_f1", h.best_validation_f1},
          {"stopped_early", h.stopped_early},
          {"epochs", epochs}};
}

TrainingResult train(const TrainingConfig& config, const CorpusSplit& corpus, const TextEmbeddingProvider& text,
                     FgcnModel model, std::uint64_t seed, const TrainingLog& log) {
  config.validate();
  if (corpus.train.empty()) throw ValidationError("training split is empty");
  if (uses(model.variant(), Channel::score) && !model.binning()) {
    throw ChannelUnavailable("variant " + std::string(to_string(model.variant())) + " reads scores but no binning was fitted");
  }

  const std::vector<TrainingInstance> instances = expand(corpus.train, config.mode);
  TrainingHistory history;
  history.seed = seed;
  history.mode = to_string(config.mode);
  history.instance_count = instances.size();
  const auto positives = std::count_if(instances.begin(), instances.end(), [](const auto& t) { return t.label == 1; });
  history.positive_ratio = static_cast<double>(positives) / static_cast<double>(instances.size());
  if (log) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "seed %llu: %zu %s instances, positive ratio %.4f",
                  static_cast<unsigned long long>(seed), instances.size(), history.mode.c_str(),
                  history.positive_ratio);
    log(buf);
  }

  std::mt19937_64 rng(mix_seed(seed, 21));
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  AdamOptimizer optimizer(config.optimizer, model.params());
  std::vector<Matrix> best = model.params().snapshot();
  bool have_best = false;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const TrainingInstance& inst = instances[order[i]];
        const Conversation& conv = corpus.train[inst.conversation];
        batch_loss += model.accumulate_gradient(conv.prefix(static_cast<std::size_t>(inst.prefix)), inst.label, text);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + " (first instance " + instances[order[start]].conv_id +
                              ")");
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& p : model.params().all()) p.grad *= scale;
      optimizer.step(model.params());
      loss_sum += batch_loss;
      ++batch_index;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(instances.size());
    if (!corpus.validation.empty()) {
      record.validation = compute_metrics(dynamic_infer_all(model, corpus.validation, text));
    }
    history.epochs.push_back(record);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "seed %llu epoch %d: loss %.6f val F1 %.4f", static_cast<unsigned long long>(seed),
                    epoch, record.train_loss, record.validation.f1);
      log(buf);
    }

    if (!have_best || record.validation.f1 > history.best_validation_f1) {
      have_best = true;
      history.best_epoch = epoch;
      history.best_validation_f1 = record.validation.f1;
      best = model.params().snapshot();
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      history.stopped_early = epoch < config.epochs;
      break;
    }
  }

  model.params().restore(best);
  model.params().zero_grad();
  auto lineage = model.lineage();
  lineage.run_seed = seed;
  model.set_lineage(lineage);
  return TrainingResult{std::move(model), std::move(history)};
}

TrainingResult train_seed(const TrainingConfig& config, const CorpusSplit& corpus, const TextEmbeddingProvider& text,
                          std::uint64_t seed, const std::optional<BinningScheme>& binning, const TrainingLog& log) {
  config.validate();
  FgcnModel model = FgcnModel::initialize(config.model, seed, corpus.train, binning);
  return train(config, corpus, text, std::move(model), seed, log);
}

RunResult evaluate_run(const FgcnModel& model, std::span<const Conversation> convs, const TextEmbeddingProvider& text,
                       std::uint64_t seed) {
  const auto outcomes = dynamic_infer_all(model, convs, text);
  return RunResult{seed, compute_metrics(outcomes), compute_horizon(outcomes)};
}

}  // namespace derail
