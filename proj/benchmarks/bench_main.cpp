#include <benchmark/benchmark.h>

#include "derail/binning.hpp"
#include "derail/encoders.hpp"
#include "derail/graph.hpp"
#include "derail/model.hpp"
#include "derail/synthetic.hpp"
#include "derail/evaluation.hpp"

namespace {

using namespace derail;

struct Fixture {
  CorpusSplit corpus;
  HashToyEncoder text{64, 1};
  FgcnModel model;

  explicit Fixture(Variant variant)
      : corpus(make_corpus()), model(FgcnModel::initialize(config(variant), 1, corpus.train, bins(variant))) {}

  static CorpusSplit make_corpus() {
    GeneratorSettings g;
    g.signal = SignalType::vote_collapse;
    g.train = 64;
    g.validation = 16;
    g.test = 16;
    g.min_turns = 8;
    g.max_turns = 12;
    return generate_synthetic_corpus(g, 3);
  }

  ModelConfig config(Variant variant) const {
    ModelConfig c;
    c.variant = variant;
    c.text_dim = 64;
    c.text_hidden = 32;
    c.user_dim = 16;
    c.user_hidden = 16;
    c.score_dim = 8;
    c.score_hidden = 16;
    c.classifier_widths = {64, 32};
    return c;
  }

  std::optional<BinningScheme> bins(Variant variant) const {
    if (!uses(variant, Channel::score)) return std::nullopt;
    return fit_score_bins(corpus.train).scheme;
  }
};

void BM_BuildEdges(benchmark::State& state) {
  const Fixture f(Variant::T);
  const Conversation& conv = f.corpus.train.front();
  for (auto _ : state) benchmark::DoNotOptimize(build_topology(conv.context(), 8));
}
BENCHMARK(BM_BuildEdges);

void BM_Forward(benchmark::State& state) {
  const Fixture f(static_cast<Variant>(state.range(0)));
  const Conversation& conv = f.corpus.train.front();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.forward(conv, f.text).probability);
}
BENCHMARK(BM_Forward)->Arg(static_cast<int>(Variant::T))->Arg(static_cast<int>(Variant::TSU));

void BM_Gradient(benchmark::State& state) {
  Fixture f(static_cast<Variant>(state.range(0)));
  const Conversation& conv = f.corpus.train.front();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.accumulate_gradient(conv.context(), *conv.label, f.text));
}
BENCHMARK(BM_Gradient)->Arg(static_cast<int>(Variant::T))->Arg(static_cast<int>(Variant::TSU));

void BM_DynamicInference(benchmark::State& state) {
  const Fixture f(Variant::TU);
  const Conversation& conv = f.corpus.test.front();
  for (auto _ : state) benchmark::DoNotOptimize(dynamic_infer(f.model, conv, f.text));
}
BENCHMARK(BM_DynamicInference);

}  // namespace
BENCHMARK_MAIN();
