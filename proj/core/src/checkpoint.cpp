#include <fstream>
#include <sstream>

#include "derail/error.hpp"
#include "derail/model.hpp"

namespace derail {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "derail-checkpoint";
constexpr int kVersion = 1;

}  // namespace

json FgcnModel::checkpoint_json(const json& text_provider) const {
  json tensors = json::array();
  for (const auto& p : params_.all()) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) data.push_back(p.value(r, c));
    }
    tensors.push_back(json{{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"data", std::move(data)}});
  }
  return json{{"format", kFormat},
              {"version", kVersion},
              {"variant", std::string(to_string(config_.variant))},
              {"config", to_json(config_)},
              {"relation_vocabulary", config_.relation_count()},
              {"binning", binning_ ? to_json(*binning_) : json(nullptr)},
              {"text_provider", text_provider},
              {"users", users_.users()},
              {"seed_lineage", {{"init_seed", lineage_.init_seed}, {"run_seed", lineage_.run_seed}}},
              {"tensors", std::move(tensors)}};
}

void FgcnModel::save_checkpoint(const std::filesystem::path& path, const json& text_provider) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_json(text_provider).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

FgcnModel FgcnModel::from_checkpoint_json(const json& j) {
  try {
    if (j.value("format", std::string()) != kFormat) throw SchemaError("not a derail checkpoint");
    if (j.at("version").get<int>() != kVersion) {
      throw SchemaError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    ModelConfig config = model_config_from_json(j.at("config"));
    if (j.at("relation_vocabulary").get<int>() != config.relation_count()) {
      throw ShapeError("checkpoint relation vocabulary " + std::to_string(j.at("relation_vocabulary").get<int>()) +
                       " does not match max_users " + std::to_string(config.max_users));
    }
    std::optional<BinningScheme> binning;
    if (!j.at("binning").is_null()) binning = binning_from_json(j.at("binning"));
    const auto users = j.at("users").get<std::vector<std::string>>();

    FgcnModel m = allocate(config, users, binning);
    const auto lineage = j.at("seed_lineage");
    m.lineage_ = SeedLineage{lineage.at("init_seed").get<std::uint64_t>(), lineage.at("run_seed").get<std::uint64_t>()};

    const json& tensors = j.at("tensors");
    if (tensors.size() != m.params_.size()) {
      throw ShapeError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                       std::to_string(m.params_.size()));
    }
    for (const json& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      Parameter* p = m.params_.find(name);
      if (p == nullptr) throw ShapeError("checkpoint tensor '" + name + "' is not part of this model");
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
        throw ShapeError("tensor '" + name + "' has shape " + t.at("shape").dump() + ", model expects [" +
                         std::to_string(p->value.rows()) + "," + std::to_string(p->value.cols()) + "]");
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != p->value.size()) {
        throw ShapeError("tensor '" + name + "' data length does not match its shape");
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        for (Eigen::Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = data[k++];
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

FgcnModel FgcnModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_checkpoint_json(j);
}

}  // namespace derail
