#include "derail/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "derail/binning.hpp"

namespace derail {

bool GradCheckReport::all_passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const TensorCheck& t) { return t.passed; });
}

std::vector<std::string> GradCheckReport::flagged() const {
  std::vector<std::string> out;
  for (const auto& t : tensors) {
    if (!t.passed) out.push_back(t.name);
  }
  return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return !suffix.empty() && s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

GradCheckReport grad_check(FgcnModel& model, const Conversation& conv, const TextEmbeddingProvider& text,
                           const GradCheckOptions& options) {
  const auto context = conv.context();
  const int label = conv.label.value_or(0);
  ParameterStore& params = model.params();
  params.zero_grad();
  model.accumulate_gradient(context, label, text);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& p : params.all()) {
    Matrix analytic = p.grad;
    if (ends_with(p.name, options.corrupt)) analytic *= 2.0;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + options.step;
        const double up = model.loss(context, label, text);
        p.value(r, c) = saved - options.step;
        const double down = model.loss(context, label, text);
        p.value(r, c) = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        const double a = analytic(r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
    report.tensors.push_back({p.name, worst, worst < options.tolerance});
  }
  params.zero_grad();
  return report;
}

DeskInstance make_desk_instance(std::uint64_t seed) {
  Conversation conv;
  conv.conv_id = "desk";
  conv.label = 1;
  const char* users[] = {"alice", "bob", "alice"};
  const char* texts[] = {"the proposal looks fine to me", "no it is clearly wrong", "read it again before replying"};
  const int scores[] = {4, -2, 1};
  for (int i = 0; i < 3; ++i) {
    Turn t;
    t.turn_id = "desk-t" + std::to_string(i);
    t.index = i;
    t.user_id = users[i];
    t.text = texts[i];
    t.score = scores[i];
    if (i > 0) t.parent_id = "desk-t" + std::to_string(i - 1);
    conv.turns.push_back(t);
  }

  ModelConfig config;
  config.variant = Variant::TSU;
  config.text_dim = 4;
  config.user_dim = 3;
  config.score_dim = 3;
  config.text_hidden = 3;
  config.user_hidden = 2;
  config.score_hidden = 2;
  config.max_turns = 3;
  config.max_users = 2;
  config.classifier_widths = {5, 4};

  const BinningScheme binning = fit_score_bins_from_scores(std::vector<int>{-3, -2, -1, 1, 2, 3}).scheme;
  std::vector<Conversation> train{conv};
  FgcnModel model = FgcnModel::initialize(config, seed, train, binning);
  return DeskInstance{std::move(conv), HashToyEncoder(config.text_dim, seed), std::move(model)};
}

}  // namespace derail
