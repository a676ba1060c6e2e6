#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "derail/binning.hpp"
#include "derail/corpus.hpp"
#include "derail/encoders.hpp"
#include "derail/error.hpp"
#include "derail/evaluation.hpp"
#include "derail/gradcheck.hpp"
#include "derail/graph.hpp"
#include "derail/model.hpp"
#include "derail/synthetic.hpp"
#include "derail/training.hpp"
#include "derail/version.hpp"
#include "run_config.hpp"

namespace derail::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;

  void log(const std::string& line) const {
    if (!quiet) err << line << '\n';
  }
};

// Flags of one subcommand, collected as a JSON patch over the config file.
struct Flags {
  json patch = json::object();
  std::string config_path;

  RunConfig resolve() const { return resolve_config(config_path, patch); }
};

template <class T>
CLI::Option* flag(CLI::App* app, const std::string& name, Flags& flags, const std::string& key,
                  const std::string& help) {
  return app->add_option_function<T>(
      name, [&flags, key](const T& v) { flags.patch[key] = v; }, help);
}

void add_config(CLI::App* app, Flags& flags) {
  app->add_option("--config", flags.config_path, "JSON configuration file (default: $DERAIL_CONFIG)");
}

void add_corpus(CLI::App* app, Flags& flags) {
  flag<std::string>(app, "--corpus", flags, "corpus", "corpus directory or JSONL file");
  flag<std::string>(app, "--corpus-format", flags, "corpus_format", "jsonl, cga or cmv")
      ->check(CLI::IsMember({"jsonl", "cga", "cmv"}));
}

void add_text(CLI::App* app, Flags& flags) {
  flag<std::string>(app, "--embeddings", flags, "embeddings", "precomputed text embedding file");
  flag<int>(app, "--text-dim", flags, "text_dim", "hash-toy text embedding width");
  flag<std::uint64_t>(app, "--text-seed", flags, "text_seed", "hash-toy token seed");
}

void add_model(CLI::App* app, Flags& flags) {
  flag<std::string>(app, "--variant", flags, "variant", "T, TU, TS or TSU");
  flag<int>(app, "--max-turns", flags, "max_turns", "padding cap of the conversation representation");
  flag<int>(app, "--max-users", flags, "max_users", "user slots per conversation");
  flag<int>(app, "--hidden", flags, "text_hidden", "text encoder hidden size");
  flag<int>(app, "--user-dim", flags, "user_dim", "user embedding width");
  flag<int>(app, "--user-hidden", flags, "user_hidden", "user encoder hidden size");
  flag<int>(app, "--score-dim", flags, "score_dim", "score embedding width");
  flag<int>(app, "--score-hidden", flags, "score_hidden", "score encoder hidden size");
  flag<std::vector<int>>(app, "--classifier", flags, "classifier", "classifier layer widths")->delimiter(',');
  flag<double>(app, "--threshold", flags, "threshold", "decision threshold");
}

void add_output(CLI::App* app, Flags& flags) {
  flag<std::string>(app, "--out", flags, "out", "output path");
  flag<std::string>(app, "--format", flags, "format", "json or table")->check(CLI::IsMember({"json", "table"}));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

CorpusSplit load(const RunConfig& c) {
  if (c.corpus.empty()) throw ConfigError("--corpus is required");
  if (!fs::exists(c.corpus)) throw ConfigError("corpus not found: " + c.corpus);
  return load_corpus(c.corpus, corpus_format_from_string(c.corpus_format));
}

std::span<const Conversation> split_of(const CorpusSplit& corpus, const std::string& name) {
  if (name == "train") return corpus.train;
  if (name == "validation") return corpus.validation;
  if (name == "test") return corpus.test;
  throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

struct TextSource {
  std::unique_ptr<TextEmbeddingProvider> provider;
  json description;
};

TextSource precomputed(const std::string& path, const CorpusSplit& corpus) {
  if (!fs::exists(path)) throw ConfigError("embedding file not found: " + path);
  auto table = PrecomputedEmbeddings::load(path, corpus_content_hash(corpus));
  json desc{{"kind", "precomputed"}, {"dimension", table.dimension()}, {"corpus_hash", table.corpus_hash()}};
  return {std::make_unique<PrecomputedEmbeddings>(std::move(table)), desc};
}

// Hash-toy vectors are materialised once so training does not re-tokenise.
TextSource hash_toy(int dimension, std::uint64_t seed, const CorpusSplit& corpus) {
  const HashToyEncoder encoder(dimension, seed);
  json desc{{"kind", "hash-toy"}, {"dimension", dimension}, {"seed", seed}};
  return {std::make_unique<PrecomputedEmbeddings>(PrecomputedEmbeddings::materialize(encoder, corpus)), desc};
}

TextSource text_for_training(const RunConfig& c, const CorpusSplit& corpus) {
  if (!c.embeddings.empty()) return precomputed(c.embeddings, corpus);
  return hash_toy(c.text_dim, c.text_seed, corpus);
}

// The checkpoint names the provider it was trained with; --embeddings overrides it.
TextSource text_for_checkpoint(const RunConfig& c, const json& provider, const CorpusSplit& corpus) {
  if (!c.embeddings.empty()) return precomputed(c.embeddings, corpus);
  const std::string kind = provider.value("kind", std::string());
  if (kind == "hash-toy") {
    return hash_toy(provider.at("dimension").get<int>(), provider.at("seed").get<std::uint64_t>(), corpus);
  }
  if (kind == "precomputed") {
    throw ConfigError("checkpoint was trained on precomputed embeddings; pass --embeddings");
  }
  throw SchemaError("checkpoint has no usable text_provider entry");
}

std::optional<BinningScheme> binning_for(const RunConfig& c, const CorpusSplit& corpus, Variant variant,
                                         const Context& ctx) {
  if (!uses(variant, Channel::score)) return std::nullopt;
  if (!c.bins.empty()) return binning_from_json(read_json(c.bins));
  BinningFit fit = fit_score_bins(corpus.train);
  for (const auto& w : fit.warnings) ctx.log("warning: " + w);
  return fit.scheme;
}

std::string display_name(const std::string& variant, const std::string& mode) {
  return "FGCN-" + variant + (mode == "dynamic" ? "+" : "");
}

void emit(const Context& ctx, const RunConfig& c, const EvaluationReport& report) {
  ctx.out << (c.format == "table" ? render_table(report) : render_json(report));
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  std::string signal = "lexical";
  int n = 200;
  std::uint64_t seed = 1;
  int num_users = 12;
  double noise = 0.0;
  int turns_min = 5;
  int turns_max = 9;
  std::string out;
};

int cmd_synth(const SynthFlags& f, const Context& ctx) {
  if (f.out.empty()) throw ConfigError("--out is required");
  GeneratorSettings g;
  g.signal = signal_from_string(f.signal);
  g.train = f.n;
  g.validation = f.n / 4;
  g.test = f.n / 4;
  g.num_users = f.num_users;
  g.noise_rate = f.noise;
  g.min_turns = f.turns_min;
  g.max_turns = f.turns_max;
  const CorpusSplit corpus = generate_synthetic_corpus(g, f.seed);
  json generator{{"signal", std::string(to_string(g.signal))},
                 {"train", g.train},
                 {"validation", g.validation},
                 {"test", g.test},
                 {"num_users", g.num_users},
                 {"noise_rate", g.noise_rate},
                 {"min_turns", g.min_turns},
                 {"max_turns", g.max_turns}};
  write_corpus(corpus, f.out, {{"seed", f.seed}, {"generator", generator}, {"version", std::string(kVersion)}});
  ctx.log("wrote " + std::to_string(corpus.size()) + " conversations to " + f.out);
  return kOk;
}

// ---------------------------------------------------------------- fit-bins

int cmd_fit_bins(const RunConfig& c, const Context& ctx) {
  const CorpusSplit corpus = load(c);
  if (!corpus.scored) throw ValidationError("binning requires scored corpus");
  const BinningFit fit = fit_score_bins(corpus.train);
  for (const auto& w : fit.warnings) ctx.log("warning: " + w);
  const std::string text = to_json(fit.scheme).dump(2) + "\n";
  if (c.out.empty()) {
    ctx.out << text;
  } else {
    write_file(c.out, text);
  }
  return kOk;
}

// ---------------------------------------------------------------- train

fs::path checkpoint_path(const fs::path& dir, std::uint64_t seed) {
  return dir / ("checkpoint-seed-" + std::to_string(seed) + ".json");
}

int cmd_train(const RunConfig& c, const Context& ctx) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const TrainingConfig tc = training_config(c);
  tc.validate();
  const CorpusSplit corpus = load(c);
  require_channels(tc.model.variant, corpus);
  const auto eval_split = split_of(corpus, c.split);
  if (eval_split.empty()) throw ValidationError("split '" + c.split + "' is empty");
  const TextSource text = text_for_training(c, corpus);
  if (text.provider->dimension() != tc.model.text_dim) {
    if (c.embeddings.empty() || c.is_pinned("text_dim")) {
      throw ShapeError("text embeddings have dimension " + std::to_string(text.provider->dimension()) +
                       " but text_dim is " + std::to_string(tc.model.text_dim));
    }
  }
  TrainingConfig run = tc;
  run.model.text_dim = text.provider->dimension();
  const auto binning = binning_for(c, corpus, run.model.variant, ctx);

  const fs::path dir(c.out);
  fs::create_directories(dir);
  EvaluationReport report;
  report.variant = c.variant;
  report.mode = c.mode;
  report.version = std::string(kVersion);
  report.config = to_json(c);
  json training = json::array();
  const TrainingLog log = [&ctx](const std::string& line) { ctx.log(line); };
  for (std::uint64_t seed : run.seeds) {
    TrainingResult result = train_seed(run, corpus, *text.provider, seed, binning, log);
    json ckpt = result.model.checkpoint_json(text.description);
    ckpt["training"] = {{"mode", c.mode}, {"best_epoch", result.history.best_epoch}};
    write_file(checkpoint_path(dir, seed), ckpt.dump() + "\n");
    write_file(dir / ("history-seed-" + std::to_string(seed) + ".json"), to_json(result.history).dump(2) + "\n");
    report.runs.push_back(evaluate_run(result.model, eval_split, *text.provider, seed));
    training.push_back({{"seed", seed},
                        {"best_epoch", result.history.best_epoch},
                        {"best_validation_f1", result.history.best_validation_f1},
                        {"positive_ratio", result.history.positive_ratio}});
  }
  json summary = to_json(report);
  summary["split"] = c.split;
  summary["training"] = training;
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  emit(ctx, c, report);
  ctx.log(display_name(c.variant, c.mode) + ": " + std::to_string(run.seeds.size()) + " checkpoint(s) in " +
          dir.string());
  return kOk;
}

// ---------------------------------------------------------------- eval

std::vector<fs::path> checkpoint_files(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  std::vector<fs::path> out;
  for (const auto& entry : c.checkpoint) {
    const fs::path p(entry);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& f : fs::directory_iterator(p)) {
        const std::string name = f.path().filename().string();
        if (name.starts_with("checkpoint-seed-") && name.ends_with(".json")) found.push_back(f.path());
      }
      if (found.empty()) throw IoError("no checkpoint-seed-*.json files in " + p.string());
      std::sort(found.begin(), found.end(), [](const fs::path& a, const fs::path& b) {
        auto seed = [](const fs::path& x) {
          const std::string s = x.stem().string();
          return std::stoull(s.substr(s.rfind('-') + 1));
        };
        return seed(a) < seed(b);
      });
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw IoError("checkpoint not found: " + p.string());
      out.push_back(p);
    }
  }
  return out;
}

// Rejects checkpoints whose stored model settings disagree with pinned flags.
void check_pinned(const RunConfig& c, const ModelConfig& stored, const fs::path& path) {
  const json want = to_json(model_config(c));
  const json have = to_json(stored);
  for (const std::string& key : model_keys()) {
    if (!c.is_pinned(key)) continue;
    const std::string stored_key = key == "classifier" ? "classifier_widths" : key;
    if (want.at(stored_key) != have.at(stored_key)) {
      throw ShapeError("shape mismatch: checkpoint " + path.string() + " has " + stored_key + " = " + have.at(stored_key).dump() +
                       " but the flags request " + want.at(stored_key).dump());
    }
  }
}

struct LoadedCheckpoint {
  FgcnModel model;
  json provider;
  std::string mode;
};

LoadedCheckpoint load_checkpoint_file(const fs::path& path) {
  const json j = read_json(path);
  FgcnModel model = FgcnModel::from_checkpoint_json(j);
  std::string mode = "static";
  if (auto it = j.find("training"); it != j.end()) mode = it->value("mode", mode);
  return {std::move(model), j.value("text_provider", json::object()), mode};
}

EvaluationReport evaluate_checkpoints(const RunConfig& c, const Context& ctx) {
  const CorpusSplit corpus = load(c);
  const auto convs = split_of(corpus, c.split);
  if (convs.empty()) throw ValidationError("split '" + c.split + "' is empty");
  EvaluationReport report;
  report.version = std::string(kVersion);
  report.config = to_json(c);
  for (const fs::path& path : checkpoint_files(c)) {
    LoadedCheckpoint ckpt = load_checkpoint_file(path);
    check_pinned(c, ckpt.model.config(), path);
    require_channels(ckpt.model.variant(), corpus);
    const std::string variant(to_string(ckpt.model.variant()));
    if (report.runs.empty()) {
      report.variant = variant;
      report.mode = ckpt.mode;
    } else if (report.variant != variant || report.mode != ckpt.mode) {
      throw ConfigError("checkpoints mix " + display_name(report.variant, report.mode) + " and " +
                        display_name(variant, ckpt.mode));
    }
    const TextSource text = text_for_checkpoint(c, ckpt.provider, corpus);
    if (text.provider->dimension() != ckpt.model.config().text_dim) {
      throw ShapeError("checkpoint " + path.string() + " expects text_dim " +
                       std::to_string(ckpt.model.config().text_dim) + " but the embeddings have " +
                       std::to_string(text.provider->dimension()));
    }
    report.runs.push_back(evaluate_run(ckpt.model, convs, *text.provider, ckpt.model.lineage().run_seed));
    ctx.log("evaluated " + path.string());
  }
  return report;
}

int cmd_eval(const RunConfig& c, const Context& ctx) {
  const EvaluationReport report = evaluate_checkpoints(c, ctx);
  if (!c.out.empty()) write_file(c.out, render_json(report));
  emit(ctx, c, report);
  return kOk;
}

// ---------------------------------------------------------------- horizon

struct HorizonFlags {
  std::string report;
  std::string histogram;
};

int cmd_horizon(const RunConfig& c, const HorizonFlags& f, const Context& ctx) {
  const EvaluationReport report =
      f.report.empty() ? evaluate_checkpoints(c, ctx) : evaluation_report_from_json(read_json(f.report));
  const HorizonReport h = mean_horizon(report.runs);
  if (!f.histogram.empty()) {
    std::string csv = "horizon,count\n";
    for (const auto& [k, v] : h.histogram) csv += std::to_string(k) + "," + std::to_string(v) + "\n";
    write_file(f.histogram, csv);
  }
  if (c.format == "table") {
    auto fixed = [](const std::optional<double>& v) {
      if (!v) return std::string("-");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", *v);
      return std::string(buf);
    };
    ctx.out << display_name(report.variant, report.mode) << "\n";
    ctx.out << "mean H            " << (h.mean ? fixed(h.mean) : "undefined (no detections)") << "\n";
    ctx.out << "last-minute rate  " << fixed(h.last_minute_rate) << "\n";
    ctx.out << "coverage          " << fixed(h.coverage) << "\n";
    char line[128];
    for (const auto& [k, v] : h.histogram) {
      std::snprintf(line, sizeof line, "H=%-3d %5d %s\n", k, v,
                    std::string(static_cast<std::size_t>(std::min(v, 60)), '#').c_str());
      ctx.out << line;
    }
  } else {
    json j = to_json(h);
    j["variant"] = report.variant;
    j["mode"] = report.mode;
    j["config"] = report.config;
    j["version"] = report.version;
    ctx.out << j.dump(2) << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- inspect-graph

struct GraphFlags {
  std::string conv_id;
  std::string channel = "t";
  int prefix = 0;
};

Channel channel_from_flag(const std::string& s) {
  if (s == "t" || s == "text") return Channel::text;
  if (s == "u" || s == "user") return Channel::user;
  if (s == "s" || s == "score") return Channel::score;
  throw ConfigError("unknown channel '" + s + "' (expected t, u or s)");
}

int cmd_inspect_graph(const RunConfig& c, const GraphFlags& f, const Context& ctx) {
  if (f.conv_id.empty()) throw ConfigError("--conv-id is required");
  const CorpusSplit corpus = load(c);
  const Conversation* conv = find_conversation(corpus, f.conv_id);
  if (conv == nullptr) throw ValidationError("conversation '" + f.conv_id + "' not found in " + c.corpus);
  std::span<const Turn> context = conv->context();
  if (f.prefix > 0) {
    if (static_cast<std::size_t>(f.prefix) > context.size()) {
      throw ValidationError("prefix " + std::to_string(f.prefix) + " exceeds the " + std::to_string(context.size()) +
                            " context turns");
    }
    context = conv->prefix(static_cast<std::size_t>(f.prefix));
  }
  if (context.empty()) throw ValidationError("conversation '" + f.conv_id + "' has no context turns");
  const Channel channel = channel_from_flag(f.channel);

  ConversationGraph graph;
  std::span<const Turn> shown = context;
  if (c.checkpoint.empty()) {
    graph = uniform_graph(build_topology(context, c.max_users), channel);
  } else {
    const auto files = checkpoint_files(c);
    LoadedCheckpoint ckpt = load_checkpoint_file(files.front());
    if (!uses(ckpt.model.variant(), channel)) {
      throw ChannelUnavailable("checkpoint variant " + std::string(to_string(ckpt.model.variant())) +
                               " has no " + std::string(to_string(channel)) + " channel");
    }
    const TextSource text = text_for_checkpoint(c, ckpt.provider, corpus);
    const auto cap = static_cast<std::size_t>(ckpt.model.config().max_turns);
    if (shown.size() > cap) shown = shown.last(cap);
    for (auto& g : ckpt.model.graphs(shown, *text.provider)) {
      if (g.channel == channel) graph = std::move(g);
    }
  }
  const std::string dot = to_dot(graph, shown, f.conv_id);
  if (c.out.empty()) {
    ctx.out << dot;
  } else {
    write_file(c.out, dot);
    ctx.log("wrote " + c.out);
  }
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradFlags {
  double tolerance = 1e-4;
  std::string corrupt;
  std::uint64_t seed = 7;
};

int cmd_gradcheck(const GradFlags& f, const Context& ctx) {
  DeskInstance desk = make_desk_instance(f.seed);
  GradCheckOptions options;
  options.tolerance = f.tolerance;
  options.corrupt = f.corrupt;
  const GradCheckReport report = grad_check(desk.model, desk.conversation, desk.encoder, options);
  char line[160];
  for (const auto& t : report.tensors) {
    std::snprintf(line, sizeof line, "%-4s %-22s %.3e\n", t.passed ? "ok" : "FAIL", t.name.c_str(),
                  t.max_relative_error);
    ctx.out << line;
  }
  const auto flagged = report.flagged();
  if (flagged.empty()) {
    ctx.out << "all " << report.tensors.size() << " tensors within tolerance " << f.tolerance << "\n";
    return kOk;
  }
  std::string names;
  for (const auto& n : flagged) names += (names.empty() ? "" : ", ") + n;
  ctx.out << flagged.size() << " tensor(s) exceed tolerance " << f.tolerance << ": " << names << "\n";
  return kUserError;
}

// ---------------------------------------------------------------- embed

int cmd_embed(const RunConfig& c, const Context& ctx) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const CorpusSplit corpus = load(c);
  const HashToyEncoder encoder(c.text_dim, c.text_seed);
  PrecomputedEmbeddings table = PrecomputedEmbeddings::materialize(encoder, corpus);
  table.save(c.out);
  ctx.log("wrote " + std::to_string(table.size()) + " embeddings to " + c.out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conversation derailment forecasting with graph convolutions", "derail"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Context ctx{out, err};
  app.add_flag("-q,--quiet", ctx.quiet, "suppress progress messages");
  app.fallthrough();

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic corpus with a planted signal");
  s->add_option("--signal", synth.signal, "lexical, user-grudge or vote-collapse")
      ->check(CLI::IsMember({"lexical", "user-grudge", "vote-collapse"}));
  s->add_option("--n", synth.n, "training conversations (validation and test get n/4 each)");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--num-users", synth.num_users, "user pool size");
  s->add_option("--noise", synth.noise, "fraction of conversations with the signal swapped");
  s->add_option("--turns-min", synth.turns_min, "minimum turns per conversation, target included");
  s->add_option("--turns-max", synth.turns_max, "maximum turns per conversation, target included");
  s->add_option("--out", synth.out, "output directory");

  Flags bins_flags;
  auto* fb = app.add_subcommand("fit-bins", "fit vote-score bins on the training split");
  add_config(fb, bins_flags);
  add_corpus(fb, bins_flags);
  flag<std::string>(fb, "--out", bins_flags, "out", "output file (default: standard output)");

  Flags train_flags;
  auto* tr = app.add_subcommand("train", "train one model per seed");
  add_config(tr, train_flags);
  add_corpus(tr, train_flags);
  add_text(tr, train_flags);
  add_model(tr, train_flags);
  add_output(tr, train_flags);
  flag<std::string>(tr, "--mode", train_flags, "mode", "static or dynamic")
      ->check(CLI::IsMember({"static", "dynamic"}));
  flag<std::string>(tr, "--seeds", train_flags, "seeds", "N (seeds 1..N), a-b, or a comma list");
  flag<int>(tr, "--epochs", train_flags, "epochs", "maximum epochs");
  flag<int>(tr, "--batch-size", train_flags, "batch_size", "instances per update");
  flag<double>(tr, "--lr", train_flags, "lr", "Adam learning rate");
  flag<int>(tr, "--patience", train_flags, "patience", "early-stopping patience on validation F1 (0 disables)");
  flag<std::string>(tr, "--bins", train_flags, "bins", "score binning file (default: fit on train)");
  flag<std::string>(tr, "--split", train_flags, "split", "split evaluated for the summary");

  Flags eval_flags;
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints with dynamic inference");
  add_config(ev, eval_flags);
  add_corpus(ev, eval_flags);
  add_text(ev, eval_flags);
  add_model(ev, eval_flags);
  add_output(ev, eval_flags);
  flag<std::vector<std::string>>(ev, "--checkpoint", eval_flags, "checkpoint", "checkpoint files or directories");
  flag<std::string>(ev, "--split", eval_flags, "split", "train, validation or test");

  Flags horizon_flags;
  HorizonFlags horizon;
  auto* hz = app.add_subcommand("horizon", "forecast-horizon statistics");
  add_config(hz, horizon_flags);
  add_corpus(hz, horizon_flags);
  add_text(hz, horizon_flags);
  flag<std::vector<std::string>>(hz, "--checkpoint", horizon_flags, "checkpoint", "checkpoint files or directories");
  flag<std::string>(hz, "--split", horizon_flags, "split", "train, validation or test");
  flag<std::string>(hz, "--format", horizon_flags, "format", "json or table")
      ->check(CLI::IsMember({"json", "table"}));
  hz->add_option("--report", horizon.report, "evaluation report JSON to read instead of evaluating");
  hz->add_option("--histogram", horizon.histogram, "write the histogram as CSV");

  Flags graph_flags;
  GraphFlags graph;
  auto* ig = app.add_subcommand("inspect-graph", "render a conversation graph as DOT");
  add_config(ig, graph_flags);
  add_corpus(ig, graph_flags);
  add_text(ig, graph_flags);
  flag<std::vector<std::string>>(ig, "--checkpoint", graph_flags, "checkpoint", "checkpoint for attention weights");
  flag<int>(ig, "--max-users", graph_flags, "max_users", "user slots when no checkpoint is given");
  flag<std::string>(ig, "--out", graph_flags, "out", "DOT file (default: standard output)");
  ig->add_option("--conv-id", graph.conv_id, "conversation id");
  ig->add_option("--channel", graph.channel, "t, u or s");
  ig->add_option("--prefix", graph.prefix, "use only the first k context turns");

  GradFlags grad;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  gc->add_option("--tolerance", grad.tolerance, "maximum relative error per tensor");
  gc->add_option("--corrupt", grad.corrupt, "double the analytic gradient of tensors ending in this name");
  gc->add_option("--seed", grad.seed, "initialisation seed of the desk model");

  Flags embed_flags;
  auto* em = app.add_subcommand("embed", "write hash-toy text embeddings as a precomputed file");
  add_config(em, embed_flags);
  add_corpus(em, embed_flags);
  add_text(em, embed_flags);
  flag<std::string>(em, "--out", embed_flags, "out", "embedding file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUserError;
  }

  try {
    if (*s) return cmd_synth(synth, ctx);
    if (*fb) return cmd_fit_bins(bins_flags.resolve(), ctx);
    if (*tr) return cmd_train(train_flags.resolve(), ctx);
    if (*ev) return cmd_eval(eval_flags.resolve(), ctx);
    if (*hz) return cmd_horizon(horizon_flags.resolve(), horizon, ctx);
    if (*ig) return cmd_inspect_graph(graph_flags.resolve(), graph, ctx);
    if (*gc) return cmd_gradcheck(grad, ctx);
    if (*em) return cmd_embed(embed_flags.resolve(), ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_user_error() ? kUserError : kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUserError;
}

}  // namespace derail::cli
