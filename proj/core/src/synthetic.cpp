#include "derail/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>
#include <vector>

#include "derail/error.hpp"

namespace derail {

std::string_view to_string(SignalType s) {
  switch (s) {
    case SignalType::lexical: return "lexical";
    case SignalType::user_grudge: return "user-grudge";
    case SignalType::vote_collapse: return "vote-collapse";
  }
  return "lexical";
}

SignalType signal_from_string(std::string_view s) {
  if (s == "lexical") return SignalType::lexical;
  if (s == "user-grudge" || s == "user_grudge") return SignalType::user_grudge;
  if (s == "vote-collapse" || s == "vote_collapse") return SignalType::vote_collapse;
  throw ConfigError("unknown signal type '" + std::string(s) + "'");
}

namespace {

using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::vector<std::string> filler_vocabulary() {
  static constexpr std::array<const char*, 12> onsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"};
  static constexpr std::array<const char*, 5> vowels = {"a", "e", "i", "o", "u"};
  static constexpr std::array<const char*, 3> codas = {"n", "r", "l"};
  std::vector<std::string> words;
  for (const char* o : onsets) {
    for (const char* v : vowels) {
      for (const char* c : codas) words.push_back(std::string(o) + v + c + "o");
    }
  }
  return words;  // 180 words, none equal to the planted token
}

std::string user_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "user-%02d", i);
  return buf;
}

class Generator {
 public:
  Generator(const GeneratorSettings& s, std::uint64_t seed) : s_(s), rng_(seed), vocab_(filler_vocabulary()) {}

  std::vector<Conversation> split(const std::string& name, int count) {
    std::vector<int> labels(static_cast<std::size_t>(count), 0);
    for (int i = 0; i < count / 2; ++i) labels[static_cast<std::size_t>(i)] = 1;
    std::shuffle(labels.begin(), labels.end(), rng_);

    std::vector<Conversation> out;
    out.reserve(labels.size());
    for (int i = 0; i < count; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "syn-%s-%05d", name.c_str(), i);
      const int label = labels[static_cast<std::size_t>(i)];
      const bool signal = coin(rng_, s_.noise_rate) ? label == 0 : label == 1;
      out.push_back(conversation(id, label, signal, /*force_branch=*/i % 3 == 0));
    }
    return out;
  }

 private:
  std::string sentence(int lo, int hi) {
    const int n = uniform(rng_, lo, hi);
    std::string text;
    for (int w = 0; w < n; ++w) {
      if (w > 0) text += ' ';
      text += vocab_[static_cast<std::size_t>(uniform(rng_, 0, static_cast<int>(vocab_.size()) - 1))];
    }
    return text;
  }

  // Users never involved in the grudge.
  std::string filler_user() {
    const int first = s_.signal == SignalType::user_grudge ? 2 : 0;
    return user_name(uniform(rng_, first, s_.num_users - 1));
  }

  Conversation conversation(const std::string& id, int label, bool signal, bool force_branch) {
    const int n = uniform(rng_, s_.min_turns, s_.max_turns);
    const int context = n - 1;

    Conversation c;
    c.conv_id = id;
    c.label = label;
    c.turns.resize(static_cast<std::size_t>(n));

    // Participants and a reply tree shared by every signal type.
    const int pool = s_.num_users - (s_.signal == SignalType::user_grudge ? 2 : 0);
    const int cast_size = uniform(rng_, 2, std::min(4, pool));
    std::vector<std::string> cast;
    while (static_cast<int>(cast.size()) < cast_size) {
      std::string u = filler_user();
      if (std::find(cast.begin(), cast.end(), u) == cast.end()) cast.push_back(u);
    }
    for (int i = 0; i < n; ++i) {
      Turn& t = c.turns[static_cast<std::size_t>(i)];
      t.index = i;
      t.turn_id = id + "-t" + std::to_string(i);
      t.user_id = cast[static_cast<std::size_t>(uniform(rng_, 0, cast_size - 1))];
      t.text = sentence(3, 6);
      if (i > 0) {
        const int parent = (i >= 2 && coin(rng_, 0.3)) ? uniform(rng_, 0, i - 2) : i - 1;
        t.parent_id = c.turns[static_cast<std::size_t>(parent)].turn_id;
      }
    }
    if (force_branch && context >= 3) {
      c.turns[static_cast<std::size_t>(context - 1)].parent_id = c.turns[0].turn_id;
    }

    switch (s_.signal) {
      case SignalType::lexical:
        // First use somewhere in the first half of the context, then in every later turn.
        if (signal) {
          const int from = uniform(rng_, 0, (context - 1) / 2);
          for (int k = from; k < context; ++k) plant_token(c, k);
        }
        break;
      case SignalType::user_grudge:
        plant_exchange(c, context, signal, cast);
        break;
      case SignalType::vote_collapse:
        plant_scores(c, context, signal);
        break;
    }
    return c;
  }

  void plant_token(Conversation& c, int turn) {
    std::string& text = c.turns[static_cast<std::size_t>(turn)].text;
    std::vector<std::string> words;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find(' ', pos);
      if (end == std::string::npos) end = text.size();
      words.emplace_back(text.substr(pos, end - pos));
      pos = end + 1;
    }
    const int at = uniform(rng_, 0, static_cast<int>(words.size()));
    words.insert(words.begin() + at, std::string(kPlantedToken));
    text.clear();
    for (std::size_t i = 0; i < words.size(); ++i) text += (i ? " " : "") + words[i];
  }

  // Three consecutive context turns A, B, A, each replying to the one before.
  // Negatives get the same exchange between two fillers outside the cast
  // (when the pool allows), so only the identities differ between classes.
  void plant_exchange(Conversation& c, int context, bool signal, const std::vector<std::string>& cast) {
    std::string a;
    std::string b;
    if (signal) {
      a = std::string(kGrudgeUserA);
      b = std::string(kGrudgeUserB);
      if (coin(rng_, 0.5)) std::swap(a, b);
    } else {
      const bool room = s_.num_users - 2 >= static_cast<int>(cast.size()) + 2;
      auto pick = [&](const std::string& other) {
        std::string u;
        do {
          u = filler_user();
        } while (u == other || (room && std::find(cast.begin(), cast.end(), u) != cast.end()));
        return u;
      };
      a = pick("");
      b = pick(a);
    }
    const int start = uniform(rng_, 0, context - 3);
    for (int k = 0; k < 3; ++k) {
      Turn& t = c.turns[static_cast<std::size_t>(start + k)];
      t.user_id = k == 1 ? b : a;
      if (k > 0) t.parent_id = c.turns[static_cast<std::size_t>(start + k - 1)].turn_id;
    }
  }

  void plant_scores(Conversation& c, int context, bool signal) {
    for (auto& t : c.turns) t.score = uniform(rng_, 0, 25);
    if (!signal) return;
    const int slide = std::min(context, uniform(rng_, 2, 3));
    for (int k = 0; k < slide; ++k) {
      const int turn = context - slide + k;
      c.turns[static_cast<std::size_t>(turn)].score = -3 * (k + 1) - uniform(rng_, 0, 4);
    }
  }

  GeneratorSettings s_;
  Rng rng_;
  std::vector<std::string> vocab_;
};

}  // namespace

CorpusSplit generate_synthetic_corpus(const GeneratorSettings& settings, std::uint64_t seed) {
  if (settings.num_users < 2) throw ConfigError("infeasible spec: need at least 2 users");
  if (settings.signal == SignalType::user_grudge && settings.num_users < 4) {
    throw ConfigError("infeasible spec: user-grudge signal needs at least 4 users");
  }
  if (settings.min_turns < 4) throw ConfigError("infeasible spec: minimum turns must be at least 4");
  if (settings.max_turns < settings.min_turns) throw ConfigError("infeasible spec: turn range is empty");
  if (settings.train < 0 || settings.validation < 0 || settings.test < 0) {
    throw ConfigError("infeasible spec: negative conversation count");
  }
  if (settings.noise_rate < 0.0 || settings.noise_rate > 1.0) {
    throw ConfigError("infeasible spec: noise rate must lie in [0, 1]");
  }

  Generator gen(settings, seed);
  CorpusSplit split;
  split.provenance = Provenance::synthetic;
  split.train = gen.split("train", settings.train);
  split.validation = gen.split("validation", settings.validation);
  split.test = gen.split("test", settings.test);
  split.scored = settings.signal == SignalType::vote_collapse;
  return split;
}

}  // namespace derail
