#include "toxbuster/synth.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "toxbuster/chat_io.hpp"
#include "toxbuster/errors.hpp"
#include "toxbuster/rng.hpp"

namespace toxbuster {
namespace {

// Reference line counts per category (Hate .. Other Offensive) and Non-toxic.
constexpr std::array<double, kNumToxicCategories> kTableTwoCounts = {5482, 618, 625, 392, 456, 8824, 11127, 3117};
constexpr double kTableTwoNonToxic = 64937;

const std::vector<std::string> kNeutral = {
    "gg",     "wp",    "glhf",   "hf",    "gl",     "push",   "rotate", "site",   "defuse", "plant",  "nice",
    "lol",    "ok",    "yes",    "no",    "where",  "which",  "go",     "wait",   "help",   "thanks", "ty",
    "np",     "rush",  "flank",  "hold",  "left",   "right",  "mid",    "top",    "bottom", "stairs", "window",
    "door",   "drone", "scan",   "one",   "two",    "three",  "low",    "dead",   "reload", "again",  "round",
    "team",   "we",    "they",   "you",   "me",     "i",      "it",     "is",     "on",     "in",     "the",
    "a",      "b",     "just",   "now",   "later",  "good",   "shot",   "close",  "almost", "sorry",  "my",
    "bad",    "clutch", "play",  "map",   "pick",   "ban",    "attack", "defend", "roam",   "anchor", "trade",
    "util",   "smoke", "flash",  "heal",  "revive", "ult",    "enemy",  "behind", "above",  "under",  "watch",
    "cover",  "fast",  "slow",   "quiet", "loud",   "omg",    "wow",    "haha",   "brb",    "afk",    "ready",
};

class PseudoWords {
public:
  explicit PseudoWords(std::uint64_t seed) : rng_(seed) {
    used_.insert(kNeutral.begin(), kNeutral.end());
  }

  std::string next(int syllables) {
    static const char *kOnset[] = {"b", "d", "g", "k", "v", "z", "r", "t", "m", "n", "sk", "dr", "gr", "pl", "zh", "qu"};
    static const char *kVowel[] = {"a", "e", "i", "o", "u", "oo", "ai", "y"};
    for (;;) {
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += kOnset[rng_.below(std::size(kOnset))];
        w += kVowel[rng_.below(std::size(kVowel))];
      }
      if (rng_.bernoulli(0.5)) w += "x";
      if (used_.insert(w).second) return w;
    }
  }

private:
  Rng rng_;
  std::unordered_set<std::string> used_;
};

std::array<double, kNumToxicCategories> table_two_proportions() {
  double total = kTableTwoNonToxic;
  for (double c : kTableTwoCounts) total += c;
  std::array<double, kNumToxicCategories> p{};
  for (int i = 0; i < kNumToxicCategories; ++i) p[i] = kTableTwoCounts[i] / total;
  return p;
}

struct PlannedLine {
  int player = 0;
  ChatType type = ChatType::Team;
  ToxicCategory category = ToxicCategory::NonToxic;
  bool context_rule = false;
  bool trigger = false;
  bool clean_ambiguous = false;
};

struct WordTables {
  std::unordered_map<std::string, ToxicCategory> lexicon;
  std::unordered_map<std::string, ToxicCategory> ambiguous;
  std::unordered_set<std::string> triggers;
};

WordTables word_tables(const SynthConfig &cfg) {
  WordTables t;
  for (int c = 0; c < kNumToxicCategories; ++c) {
    for (const auto &w : cfg.lexicons[c]) t.lexicon.emplace(w, category_of(c));
    for (const auto &w : cfg.ambiguous[c]) t.ambiguous.emplace(w, category_of(c));
  }
  t.triggers.insert(cfg.triggers.begin(), cfg.triggers.end());
  return t;
}

void insert_at_random(std::vector<std::string> &words, std::string w, Rng &rng) {
  const auto pos = static_cast<std::ptrdiff_t>(rng.below(words.size() + 1));
  words.insert(words.begin() + pos, std::move(w));
}

std::vector<std::string> neutral_words(const SynthConfig &cfg, Rng &rng, int n) {
  std::vector<std::string> words;
  for (int i = 0; i < n; ++i) words.push_back(rng.pick(cfg.neutral));
  return words;
}

std::string join(const std::vector<std::string> &words) {
  std::string s;
  for (const auto &w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

// One candidate match (before anonymization) plus gold labels.
struct RawMatch {
  Match match;
  std::vector<LineLabels> gold;
};

RawMatch generate_match(const SynthConfig &cfg, const WordTables &tables, Rng &rng, const std::string &match_id) {
  const int n = cfg.lines_per_match;
  const int players = cfg.players_per_match;
  std::vector<PlannedLine> plan(static_cast<std::size_t>(n));
  const std::span<const double> weights(cfg.proportions.data(), cfg.proportions.size());
  for (auto &p : plan) {
    p.player = static_cast<int>(rng.below(static_cast<std::uint64_t>(players)));
    p.type = rng.bernoulli(cfg.all_chat_rate) ? ChatType::All : ChatType::Team;
    const std::size_t c = rng.categorical(weights, /*residual=*/true);
    p.category = c < kNumToxicCategories ? category_of(static_cast<int>(c)) : ToxicCategory::NonToxic;
  }

  const bool trigger_match = n > 1 && !cfg.triggers.empty() && rng.bernoulli(cfg.context_rule_rate);
  int trigger_line = n;
  if (trigger_match) {
    trigger_line = rng.range(0, std::min(cfg.trigger_max_line, n - 2));
    plan[static_cast<std::size_t>(trigger_line)].trigger = true;
    plan[static_cast<std::size_t>(trigger_line)].type = ChatType::All;
    for (int i = trigger_line + 1; i < n; ++i) {
      auto &p = plan[static_cast<std::size_t>(i)];
      if (is_toxic(p.category) && !cfg.ambiguous[label_of(p.category)].empty()) p.context_rule = true;
    }
  }
  std::array<double, kNumToxicCategories> ambiguous_weights{};
  bool has_ambiguous = false;
  for (int c = 0; c < kNumToxicCategories; ++c) {
    if (cfg.ambiguous[c].empty()) continue;
    has_ambiguous = true;
    ambiguous_weights[c] = cfg.proportions[c] > 0.0 ? cfg.proportions[c] : 1e-9;
  }
  if (has_ambiguous) {
    for (int i = 0; i < std::min(n, trigger_line + 1); ++i) {
      auto &p = plan[static_cast<std::size_t>(i)];
      if (!is_toxic(p.category) && rng.bernoulli(cfg.ambiguous_in_clean_rate)) p.clean_ambiguous = true;
    }
  }

  const std::string team_names[2] = {"0", "1"};
  RawMatch out;
  out.match.match_id = match_id;
  for (int i = 0; i < n; ++i) {
    const auto &p = plan[static_cast<std::size_t>(i)];
    std::vector<std::string> words;
    const int len = rng.range(cfg.min_words, cfg.max_words);
    if (p.category == ToxicCategory::Spam && !p.context_rule) {
      const std::string &w = rng.pick(cfg.lexicons[label_of(ToxicCategory::Spam)]);
      words.assign(static_cast<std::size_t>(std::max(3, len)), w);
    } else if (is_toxic(p.category)) {
      const auto &source = p.context_rule ? cfg.ambiguous[label_of(p.category)] : cfg.lexicons[label_of(p.category)];
      // Context-rule lines keep the clean-line length distribution.
      words = neutral_words(cfg, rng, p.context_rule ? len - 1 : std::max(1, len - 1));
      insert_at_random(words, rng.pick(source), rng);
      if (!p.context_rule && len > 3 && rng.bernoulli(0.3)) insert_at_random(words, rng.pick(source), rng);
    } else {
      words = neutral_words(cfg, rng, len);
      if (p.clean_ambiguous) {
        // Same category mix as licensed ambiguous words, so no single word predicts its label.
        const std::size_t c = rng.categorical(ambiguous_weights);
        words[rng.below(words.size())] = rng.pick(cfg.ambiguous[c]);
      }
    }
    if (p.trigger) insert_at_random(words, rng.pick(cfg.triggers), rng);

    ChatLine line;
    line.match_id = match_id;
    line.line_index = i;
    line.player_id = match_id + ":" + std::to_string(p.player);
    line.team_id = team_names[p.player < players / 2 ? 0 : 1];
    line.chat_type = p.type;
    line.text = join(words);
    line.game = cfg.game;
    out.match.lines.push_back(std::move(line));
  }

  // Gold follows the labeling rule directly, independent of the plan.
  for (std::size_t i = 0; i < out.match.lines.size(); ++i) {
    LineLabels labels;
    bool licensed = false;
    for (std::size_t j = 0; j < i && !licensed; ++j) {
      if (!globally_visible(out.match, j, i)) continue;
      for (auto w : split_words(out.match.lines[j].text))
        if (tables.triggers.count(std::string(w))) licensed = true;
    }
    for (auto w : split_words(out.match.lines[i].text)) {
      const std::string word(w);
      if (auto it = tables.lexicon.find(word); it != tables.lexicon.end()) {
        labels.push_back(it->second);
      } else if (auto at = tables.ambiguous.find(word); at != tables.ambiguous.end() && licensed) {
        labels.push_back(at->second);
      } else {
        labels.push_back(ToxicCategory::NonToxic);
      }
    }
    out.gold.push_back(std::move(labels));
  }

  // Chat reports for repeat offenders, behavior reports at random.
  std::map<std::string, int> toxic_lines;
  std::set<std::string> roster;
  for (std::size_t i = 0; i < out.match.lines.size(); ++i) {
    roster.insert(out.match.lines[i].player_id);
    const SeverityOrder order;
    if (is_toxic(order.most_severe(out.gold[i]))) ++toxic_lines[out.match.lines[i].player_id];
  }
  auto reporter_for = [&](const std::string &reported) {
    std::string r;
    do {
      r = match_id + ":" + std::to_string(rng.below(static_cast<std::uint64_t>(players)));
    } while (r == reported && players > 1);
    return r;
  };
  for (const auto &[player, count] : toxic_lines) {
    if (count >= cfg.report_threshold) out.match.reports.push_back({reporter_for(player), player, ReportReason::Chat});
  }
  if (cfg.behavior_report_rate > 0.0) {
    for (const auto &player : roster) {
      if (rng.bernoulli(cfg.behavior_report_rate))
        out.match.reports.push_back({reporter_for(player), player, ReportReason::Behavior});
    }
  }
  return out;
}

std::string match_name(const std::string &prefix, std::size_t k) {
  std::string digits = std::to_string(k);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + digits;
}

} // namespace

std::array<std::vector<std::string>, kNumToxicCategories> default_lexicons(int words_per_category, std::uint64_t salt) {
  PseudoWords factory(mix_seed(0x7e11c0, salt));
  std::array<std::vector<std::string>, kNumToxicCategories> lex;
  for (auto &l : lex)
    for (int i = 0; i < words_per_category; ++i) l.push_back(factory.next(3));
  return lex;
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.proportions = table_two_proportions();
  c.lexicons = default_lexicons();
  // Ambiguous words and triggers come from the same stream, after the lexicons,
  // so every list stays disjoint from the rest.
  PseudoWords factory(mix_seed(0x7e11c0, 0));
  for (int k = 0; k < kNumToxicCategories * 12; ++k) factory.next(3);
  for (auto &a : c.ambiguous)
    for (int i = 0; i < 4; ++i) a.push_back(factory.next(2));
  for (int i = 0; i < 4; ++i) c.triggers.push_back(factory.next(2));
  c.neutral = kNeutral;
  c.context_rule_rate = 0.2;
  c.ambiguous_in_clean_rate = 0.2;
  return c;
}

SynthConfig SynthConfig::separable() {
  SynthConfig c = defaults();
  c.context_rule_rate = 0.0;
  c.ambiguous_in_clean_rate = 0.0;
  return c;
}

SynthConfig SynthConfig::context_rule() {
  SynthConfig c = defaults();
  // 55% toxic lines in the default mix and 55% trigger matches, so licensed and
  // unlicensed ambiguous words are roughly balanced. Short lines make ambiguous
  // words a large share of all tokens.
  const auto base = table_two_proportions();
  double toxic = 0.0;
  for (double p : base) toxic += p;
  for (int i = 0; i < kNumToxicCategories; ++i) c.proportions[i] = base[i] * 0.55 / toxic;
  c.context_rule_rate = 0.55;
  c.ambiguous_in_clean_rate = 1.0;
  c.lines_per_match = 12;
  c.min_words = 1;
  c.max_words = 3;
  return c;
}

void SynthConfig::validate() const {
  double total = 0.0;
  for (int c = 0; c < kNumToxicCategories; ++c) {
    if (proportions[c] < 0.0) throw ConfigError("negative proportion for " + std::string(to_string(category_of(c))));
    total += proportions[c];
    if (proportions[c] > 0.0 && lexicons[c].empty())
      throw ConfigError("empty lexicon for " + std::string(to_string(category_of(c))) + " with nonzero proportion");
  }
  if (total > 1.0 + 1e-9) throw ConfigError("category proportions sum to more than 1");
  if (context_rule_rate < 0.0 || context_rule_rate > 1.0) throw ConfigError("context_rule_rate outside [0, 1]");
  if (ambiguous_in_clean_rate < 0.0 || ambiguous_in_clean_rate > 1.0)
    throw ConfigError("ambiguous_in_clean_rate outside [0, 1]");
  if (neutral.empty()) throw ConfigError("neutral vocabulary is empty");
  if (n_matches < 0 || lines_per_match < 1) throw ConfigError("n_matches and lines_per_match must be positive");
  if (players_per_match < 2) throw ConfigError("players_per_match must be at least 2");
  if (min_words < 1 || max_words < min_words) throw ConfigError("invalid word count range");
  if (reported_match_weight < 1.0) throw ConfigError("reported_match_weight must be >= 1");
  if (context_rule_rate > 0.0 && triggers.empty()) throw ConfigError("context_rule_rate > 0 needs trigger words");

  std::unordered_map<std::string, std::string> owner;
  auto claim = [&](const std::string &w, const std::string &list) {
    if (w.empty() || split_words(w).size() != 1) throw ConfigError("lexicon entry '" + w + "' must be a single word");
    auto [it, fresh] = owner.emplace(w, list);
    if (!fresh) throw ConfigError("word '" + w + "' appears in both " + it->second + " and " + list);
  };
  for (int c = 0; c < kNumToxicCategories; ++c) {
    const std::string name(to_string(category_of(c)));
    std::unordered_set<std::string> seen;
    for (const auto &w : lexicons[c])
      if (seen.insert(w).second) claim(w, "lexicon:" + name);
  }
  for (int c = 0; c < kNumToxicCategories; ++c) {
    for (const auto &w : ambiguous[c]) claim(w, "ambiguous:" + std::string(to_string(category_of(c))));
  }
  for (const auto &w : triggers) claim(w, "triggers");
  std::unordered_set<std::string> neutral_seen;
  for (const auto &w : neutral) {
    if (!neutral_seen.insert(w).second) continue;
    claim(w, "neutral");
  }
}

bool globally_visible(const Match &m, std::size_t earlier, std::size_t target) {
  const ChatLine &e = m.lines[earlier];
  const ChatLine &t = m.lines[target];
  return e.player_id == t.player_id || e.team_id == t.team_id || e.chat_type == ChatType::All;
}

Corpus generate_synthetic_corpus(const SynthConfig &cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const WordTables tables = word_tables(cfg);
  std::vector<RawMatch> kept;
  const std::size_t target = static_cast<std::size_t>(cfg.n_matches);
  const std::size_t max_attempts = 100 * target + 100;
  std::size_t attempts = 0;
  while (kept.size() < target) {
    RawMatch m = generate_match(cfg, tables, rng, match_name(cfg.match_prefix, kept.size()));
    ++attempts;
    const bool keep = !m.match.reports.empty() || cfg.reported_match_weight <= 1.0 ||
                      attempts > max_attempts || rng.bernoulli(1.0 / cfg.reported_match_weight);
    if (keep) kept.push_back(std::move(m));
  }

  Corpus corpus;
  for (auto &k : kept) corpus.matches.push_back(std::move(k.match));
  anonymize_players(corpus.matches);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto &m = corpus.matches[i];
    for (std::size_t l = 0; l < m.lines.size(); ++l) corpus.gold.set(m.match_id, static_cast<int>(l), kept[i].gold[l]);
  }
  return corpus;
}

namespace {

template <typename Arr> nlohmann::json per_category(const Arr &a) {
  nlohmann::json j = nlohmann::json::object();
  for (int c = 0; c < kNumToxicCategories; ++c) j[std::string(to_string(category_of(c)))] = a[c];
  return j;
}

template <typename Arr> void read_per_category(const nlohmann::json &j, Arr &a) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto c = parse_category(it.key());
    if (!c || !is_toxic(*c)) throw ConfigError("unknown toxic category '" + it.key() + "'");
    it.value().get_to(a[label_of(*c)]);
  }
}

} // namespace

void to_json(nlohmann::json &j, const SynthConfig &c) {
  j = nlohmann::json{{"proportions", per_category(c.proportions)},
                     {"lexicons", per_category(c.lexicons)},
                     {"ambiguous", per_category(c.ambiguous)},
                     {"triggers", c.triggers},
                     {"neutral", c.neutral},
                     {"context_rule_rate", c.context_rule_rate},
                     {"ambiguous_in_clean_rate", c.ambiguous_in_clean_rate},
                     {"trigger_max_line", c.trigger_max_line},
                     {"n_matches", c.n_matches},
                     {"players_per_match", c.players_per_match},
                     {"lines_per_match", c.lines_per_match},
                     {"all_chat_rate", c.all_chat_rate},
                     {"min_words", c.min_words},
                     {"max_words", c.max_words},
                     {"report_threshold", c.report_threshold},
                     {"behavior_report_rate", c.behavior_report_rate},
                     {"reported_match_weight", c.reported_match_weight},
                     {"game", to_string(c.game)},
                     {"match_prefix", c.match_prefix},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json &j, SynthConfig &c) {
  // Unspecified fields keep the default values; "preset" selects a base.
  const std::string preset = j.value("preset", std::string("default"));
  if (preset == "separable") {
    c = SynthConfig::separable();
  } else if (preset == "context_rule") {
    c = SynthConfig::context_rule();
  } else if (preset == "default") {
    c = SynthConfig::defaults();
  } else {
    throw ConfigError("unknown synth preset '" + preset + "'");
  }
  if (j.contains("proportions")) read_per_category(j["proportions"], c.proportions);
  if (j.contains("lexicons")) read_per_category(j["lexicons"], c.lexicons);
  if (j.contains("ambiguous")) read_per_category(j["ambiguous"], c.ambiguous);
  if (j.contains("game")) c.game = parse_game(j["game"].get<std::string>());
  auto opt = [&](const char *k, auto &field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  opt("triggers", c.triggers);
  opt("neutral", c.neutral);
  opt("context_rule_rate", c.context_rule_rate);
  opt("ambiguous_in_clean_rate", c.ambiguous_in_clean_rate);
  opt("trigger_max_line", c.trigger_max_line);
  opt("n_matches", c.n_matches);
  opt("players_per_match", c.players_per_match);
  opt("lines_per_match", c.lines_per_match);
  opt("all_chat_rate", c.all_chat_rate);
  opt("min_words", c.min_words);
  opt("max_words", c.max_words);
  opt("report_threshold", c.report_threshold);
  opt("behavior_report_rate", c.behavior_report_rate);
  opt("reported_match_weight", c.reported_match_weight);
  opt("match_prefix", c.match_prefix);
  opt("seed", c.seed);
}

} // namespace toxbuster
