#include "derail/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "derail/error.hpp"

namespace derail {

using nlohmann::json;

std::span<const Turn> Conversation::prefix(std::size_t k) const {
  if (k > context_size()) {
    throw ValidationError("prefix of " + std::to_string(k) + " turns exceeds " +
                          std::to_string(context_size()) + " context turns in " + conv_id);
  }
  return {turns.data(), k};
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::cga: return "cga";
    case Provenance::cmv: return "cmv";
    case Provenance::synthetic: return "synthetic";
  }
  return "synthetic";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "cga") return Provenance::cga;
  if (s == "cmv") return Provenance::cmv;
  if (s == "synthetic") return Provenance::synthetic;
  throw ConfigError("unknown provenance '" + std::string(s) + "'");
}

CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "cga") return CorpusFormat::cga;
  if (s == "cmv") return CorpusFormat::cmv;
  if (s == "jsonl") return CorpusFormat::jsonl;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected cga, cmv or jsonl)");
}

std::vector<Violation> validate_conversation(const Conversation& conv, bool scored_corpus) {
  std::vector<Violation> out;
  auto hard = [&](std::string code, std::string msg) {
    out.push_back({Violation::Severity::hard, std::move(code), conv.conv_id + ": " + std::move(msg)});
  };
  auto soft = [&](std::string code, std::string msg) {
    out.push_back({Violation::Severity::soft, std::move(code), conv.conv_id + ": " + std::move(msg)});
  };

  if (conv.turns.size() < 2) {
    hard("too few turns", "needs at least 2 turns, has " + std::to_string(conv.turns.size()));
  }
  if (!conv.label.has_value()) {
    hard("missing label", "no derailment label");
  } else if (*conv.label != 0 && *conv.label != 1) {
    hard("invalid label", "label must be 0 or 1, got " + std::to_string(*conv.label));
  }

  std::unordered_map<std::string_view, int> index_of;
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    const Turn& t = conv.turns[i];
    if (t.index != static_cast<int>(i)) {
      hard("non-contiguous index",
           "turn " + t.turn_id + " has index " + std::to_string(t.index) + ", expected " + std::to_string(i));
    }
    if (!index_of.emplace(t.turn_id, t.index).second) {
      hard("duplicate turn id", "turn id " + t.turn_id + " repeats");
    }
  }
  for (const Turn& t : conv.turns) {
    if (!t.parent_id) continue;
    auto it = index_of.find(*t.parent_id);
    if (it == index_of.end()) {
      hard("unresolved parent", "turn " + t.turn_id + " replies to unknown turn " + *t.parent_id);
    } else if (it->second >= t.index) {
      hard("forward parent", "turn " + t.turn_id + " replies to later turn " + *t.parent_id);
    }
  }

  if (conv.turns.size() >= 2 && conv.turns.size() < 5) {
    soft("short conversation", "only " + std::to_string(conv.turns.size()) +
                                   " turns; graph structure needs four or more context turns");
  }
  if (scored_corpus) {
    for (const Turn& t : conv.turns) {
      if (!t.score) soft("missing score", "turn " + t.turn_id + " has no score");
    }
  }
  return out;
}

bool has_hard_violation(const std::vector<Violation>& violations) {
  for (const auto& v : violations) {
    if (v.severity == Violation::Severity::hard) return true;
  }
  return false;
}

namespace {

struct ParsedRecord {
  Conversation conv;
  std::string split;
};

template <typename T>
T required(const json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw SchemaError(std::string(where) + ": missing required field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

ParsedRecord parse_record(std::string_view line, std::string_view where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(where) + ": malformed JSON record (" + e.what() + ")");
  }
  if (!j.is_object()) throw ParseError(std::string(where) + ": record is not a JSON object");

  ParsedRecord rec;
  rec.conv.conv_id = required<std::string>(j, "conv_id", where);
  rec.conv.label = required<int>(j, "label", where);
  if (auto it = j.find("split"); it != j.end() && it->is_string()) rec.split = it->get<std::string>();

  auto turns = j.find("turns");
  if (turns == j.end() || !turns->is_array()) {
    throw SchemaError(std::string(where) + ": missing required field 'turns'");
  }
  for (const json& tj : *turns) {
    if (!tj.is_object()) throw SchemaError(std::string(where) + ": turn entry is not an object");
    Turn t;
    t.turn_id = required<std::string>(tj, "turn_id", where);
    t.index = required<int>(tj, "index", where);
    t.user_id = required<std::string>(tj, "user", where);
    t.text = required<std::string>(tj, "text", where);
    if (auto it = tj.find("score"); it != tj.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw SchemaError(std::string(where) + ": score must be an integer or null");
      t.score = it->get<int>();
    }
    if (auto it = tj.find("reply_to"); it != tj.end() && !it->is_null()) {
      if (!it->is_string()) throw SchemaError(std::string(where) + ": reply_to must be a string or null");
      t.parent_id = it->get<std::string>();
    }
    rec.conv.turns.push_back(std::move(t));
  }
  return rec;
}

std::vector<ParsedRecord> parse_stream(std::string_view jsonl, std::string_view source) {
  std::vector<ParsedRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    out.push_back(parse_record(line, std::string(source) + ":" + std::to_string(line_no)));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void apply_format(CorpusSplit& split, CorpusFormat format) {
  auto each_turn = [&](auto&& fn) {
    for (auto* part : {&split.train, &split.validation, &split.test}) {
      for (auto& c : *part) {
        for (auto& t : c.turns) fn(t);
      }
    }
  };
  switch (format) {
    case CorpusFormat::cga:
      split.provenance = Provenance::cga;
      split.scored = false;
      // CGA carries no public-perception data; drop anything that slipped in.
      each_turn([](Turn& t) { t.score.reset(); });
      break;
    case CorpusFormat::cmv:
      split.provenance = Provenance::cmv;
      split.scored = true;
      break;
    case CorpusFormat::jsonl: {
      bool any = false;
      each_turn([&](const Turn& t) { any = any || t.score.has_value(); });
      split.scored = any;
      break;
    }
  }
}

void validate_split(const CorpusSplit& split) {
  std::set<std::string_view> seen;
  std::vector<std::string> failures;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& c : *part) {
      if (!seen.insert(c.conv_id).second) {
        failures.push_back(c.conv_id + ": conversation id appears more than once");
      }
      for (const auto& v : validate_conversation(c, split.scored)) {
        if (v.severity == Violation::Severity::hard) failures.push_back(v.message);
      }
    }
  }
  if (!failures.empty()) {
    std::string msg = "corpus validation failed:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw ValidationError(msg);
  }
}

}  // namespace

std::vector<Conversation> parse_conversations(std::string_view jsonl, std::string_view source) {
  std::vector<Conversation> out;
  for (auto& rec : parse_stream(jsonl, source)) out.push_back(std::move(rec.conv));
  return out;
}

CorpusSplit load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("corpus path does not exist: " + path.string());

  CorpusSplit split;
  if (fs::is_directory(path)) {
    const std::pair<const char*, std::vector<Conversation>*> parts[] = {
        {"train.jsonl", &split.train}, {"validation.jsonl", &split.validation}, {"test.jsonl", &split.test}};
    for (const auto& [name, dest] : parts) {
      fs::path file = path / name;
      if (!fs::exists(file)) continue;
      *dest = parse_conversations(read_file(file), file.string());
    }
    if (fs::path manifest = path / "manifest.json"; fs::exists(manifest) && format == CorpusFormat::jsonl) {
      try {
        json m = json::parse(read_file(manifest));
        if (auto it = m.find("source"); it != m.end() && it->is_string()) {
          split.provenance = provenance_from_string(it->get<std::string>());
        }
      } catch (const json::exception& e) {
        throw ParseError(manifest.string() + ": " + e.what());
      }
    }
  } else {
    for (auto& rec : parse_stream(read_file(path), path.string())) {
      if (rec.split.empty() || rec.split == "train") {
        split.train.push_back(std::move(rec.conv));
      } else if (rec.split == "validation" || rec.split == "val") {
        split.validation.push_back(std::move(rec.conv));
      } else if (rec.split == "test") {
        split.test.push_back(std::move(rec.conv));
      } else {
        throw SchemaError(path.string() + ": unknown split '" + rec.split + "' in " + rec.conv.conv_id);
      }
    }
  }
  apply_format(split, format);
  validate_split(split);
  return split;
}

std::string serialize_conversation(const Conversation& conv) {
  json turns = json::array();
  for (const Turn& t : conv.turns) {
    turns.push_back(json{{"turn_id", t.turn_id},
                         {"index", t.index},
                         {"user", t.user_id},
                         {"text", t.text},
                         {"score", t.score ? json(*t.score) : json(nullptr)},
                         {"reply_to", t.parent_id ? json(*t.parent_id) : json(nullptr)}});
  }
  json j{{"conv_id", conv.conv_id}, {"label", conv.label ? json(*conv.label) : json(nullptr)}, {"turns", turns}};
  return j.dump();
}

void write_corpus(const CorpusSplit& split, const std::filesystem::path& dir, const json& manifest_extra) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const std::pair<const char*, const std::vector<Conversation>*> parts[] = {
      {"train.jsonl", &split.train}, {"validation.jsonl", &split.validation}, {"test.jsonl", &split.test}};
  for (const auto& [name, convs] : parts) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    for (const auto& c : *convs) out << serialize_conversation(c) << '\n';
  }

  json manifest{{"source", std::string(to_string(split.provenance))},
                {"scored", split.scored},
                {"counts", {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}}},
                {"content_hash", corpus_content_hash(split)}};
  if (manifest_extra.is_object()) {
    for (const auto& [k, v] : manifest_extra.items()) manifest[k] = v;
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::size_t label_imbalance(std::span<const Conversation> convs) {
  long pos = 0;
  long neg = 0;
  for (const auto& c : convs) (c.label.value_or(0) == 1 ? pos : neg)++;
  return static_cast<std::size_t>(pos > neg ? pos - neg : neg - pos);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string corpus_content_hash(const CorpusSplit& split) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](std::string_view s) {
    h = fnv1a64(s, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  };
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    feed("|split|");
    for (const auto& c : *part) {
      feed(c.conv_id);
      for (const auto& t : c.turns) {
        feed(t.turn_id);
        feed(t.text);
      }
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const Conversation* find_conversation(const CorpusSplit& split, std::string_view conv_id) {
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& c : *part) {
      if (c.conv_id == conv_id) return &c;
    }
  }
  return nullptr;
}

}  // namespace derail
