#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "toxbuster/context.hpp"
#include "toxbuster/synth.hpp"

using namespace toxbuster;

namespace {
std::set<std::string> as_set(const std::vector<std::string> &v) { return {v.begin(), v.end()}; }
} // namespace

TEST_CASE("synthetic corpus is a pure function of its seed") {
  auto cfg = SynthConfig::defaults();
  cfg.n_matches = 20;
  const auto a = generate_synthetic_corpus(cfg);
  const auto b = generate_synthetic_corpus(cfg);
  CHECK(a.matches == b.matches);
  CHECK(a.gold == b.gold);
  cfg.seed = 2;
  CHECK_FALSE(generate_synthetic_corpus(cfg).matches == a.matches);
}

TEST_CASE("gold has one label per word and matches are well formed") {
  auto cfg = SynthConfig::defaults();
  cfg.n_matches = 30;
  const auto c = generate_synthetic_corpus(cfg);
  CHECK(c.matches.size() == 30);
  for (const auto &m : c.matches) {
    CHECK(m.lines.size() == static_cast<std::size_t>(cfg.lines_per_match));
    for (std::size_t i = 0; i < m.lines.size(); ++i) {
      const auto &l = m.lines[i];
      CHECK(l.line_index == static_cast<int>(i));
      const auto *g = c.gold.find(m.match_id, l.line_index);
      REQUIRE(g != nullptr);
      CHECK(g->size() == word_count(l.text));
      CHECK(word_count(l.text) >= static_cast<std::size_t>(cfg.min_words));
    }
  }
}

TEST_CASE("line category proportions follow the configuration") {
  auto cfg = SynthConfig::separable();
  cfg.n_matches = 600;
  const auto c = generate_synthetic_corpus(cfg);
  std::map<ToxicCategory, double> counts;
  double total = 0;
  for (const auto &m : c.matches)
    for (const auto &l : m.lines) {
      counts[c.gold.line_category(m.match_id, l.line_index)] += 1;
      total += 1;
    }
  for (int k = 0; k < kNumToxicCategories; ++k) {
    const double p = cfg.proportions[k];
    const double observed = counts[category_of(k)] / total;
    CHECK(std::abs(observed - p) <= 5 * std::sqrt(p * (1 - p) / total) + 1e-3);
  }
}

TEST_CASE("a single-category configuration labels every line with it") {
  auto cfg = SynthConfig::separable();
  cfg.proportions = {};
  cfg.proportions[static_cast<int>(ToxicCategory::Spam)] = 1.0;
  cfg.n_matches = 10;
  const auto c = generate_synthetic_corpus(cfg);
  for (const auto &m : c.matches)
    for (const auto &l : m.lines) CHECK(c.gold.line_category(m.match_id, l.line_index) == ToxicCategory::Spam);
}

TEST_CASE("lexicon words carry their category and neutral words are clean") {
  auto cfg = SynthConfig::separable();
  cfg.n_matches = 40;
  const auto c = generate_synthetic_corpus(cfg);
  std::map<std::string, ToxicCategory> lex;
  for (int k = 0; k < kNumToxicCategories; ++k)
    for (const auto &w : cfg.lexicons[k]) lex[w] = category_of(k);
  const auto neutral = as_set(cfg.neutral);
  for (const auto &m : c.matches)
    for (const auto &l : m.lines) {
      const auto words = split_words(l.text);
      const auto &g = *c.gold.find(m.match_id, l.line_index);
      for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string w(words[i]);
        if (auto it = lex.find(w); it != lex.end()) CHECK(g[i] == it->second);
        if (neutral.count(w)) CHECK(g[i] == ToxicCategory::NonToxic);
      }
    }
}

TEST_CASE("ambiguous words are toxic exactly when a trigger is globally visible before them") {
  auto cfg = SynthConfig::context_rule();
  cfg.n_matches = 80;
  const auto c = generate_synthetic_corpus(cfg);
  std::map<std::string, ToxicCategory> amb;
  for (int k = 0; k < kNumToxicCategories; ++k)
    for (const auto &w : cfg.ambiguous[k]) amb[w] = category_of(k);
  const auto triggers = as_set(cfg.triggers);
  std::size_t licensed = 0, unlicensed = 0;
  for (const auto &m : c.matches) {
    for (std::size_t t = 0; t < m.lines.size(); ++t) {
      bool visible_trigger = false;
      for (std::size_t h : filter_history(m, t, ChatMode::Global))
        for (auto w : split_words(m.lines[h].text))
          if (triggers.count(std::string(w))) visible_trigger = true;
      const auto words = split_words(m.lines[t].text);
      const auto &g = *c.gold.find(m.match_id, static_cast<int>(t));
      for (std::size_t i = 0; i < words.size(); ++i) {
        auto it = amb.find(std::string(words[i]));
        if (it == amb.end()) continue;
        CHECK(g[i] == (visible_trigger ? it->second : ToxicCategory::NonToxic));
        ++(visible_trigger ? licensed : unlicensed);
      }
    }
  }
  CHECK(licensed > 50);
  CHECK(unlicensed > 50);
}

TEST_CASE("chat reports cover players at the toxic-line threshold") {
  auto cfg = SynthConfig::defaults();
  cfg.n_matches = 50;
  const auto c = generate_synthetic_corpus(cfg);
  for (const auto &m : c.matches) {
    std::map<std::string, int> toxic_lines;
    for (const auto &l : m.lines)
      if (c.gold.line_category(m.match_id, l.line_index) != ToxicCategory::NonToxic) ++toxic_lines[l.player_id];
    std::set<std::string> expected, reported;
    for (const auto &[p, n] : toxic_lines)
      if (n >= cfg.report_threshold) expected.insert(p);
    for (const auto &r : m.reports)
      if (r.reason == ReportReason::Chat) reported.insert(r.reported);
    CHECK(reported == expected);
  }
}

TEST_CASE("reported-match weighting keeps every reported match") {
  auto cfg = SynthConfig::defaults();
  cfg.n_matches = 200;
  cfg.reported_match_weight = 1e9;
  const auto c = generate_synthetic_corpus(cfg);
  for (const auto &m : c.matches) CHECK_FALSE(m.reports.empty());
}

TEST_CASE("synth config validation") {
  auto cfg = SynthConfig::defaults();
  cfg.proportions[0] = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig::defaults();
  cfg.ambiguous[0].push_back(cfg.lexicons[1][0]);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig::defaults();
  cfg.triggers.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig::defaults();
  const nlohmann::json j = cfg;
  const auto back = j.get<SynthConfig>();
  CHECK(back.lexicons == cfg.lexicons);
  CHECK(back.context_rule_rate == cfg.context_rule_rate);
}

TEST_CASE("an ambiguous word alone does not predict its label") {
  auto cfg = SynthConfig::context_rule();
  cfg.n_matches = 400;
  const auto c = generate_synthetic_corpus(cfg);
  std::map<std::string, std::pair<int, int>> seen; // toxic, total
  std::set<std::string> amb;
  for (const auto &a : cfg.ambiguous) amb.insert(a.begin(), a.end());
  for (const auto &m : c.matches)
    for (const auto &l : m.lines) {
      const auto words = split_words(l.text);
      const auto &g = *c.gold.find(m.match_id, l.line_index);
      for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string w(words[i]);
        if (!amb.count(w)) continue;
        seen[w].first += is_toxic(g[i]);
        seen[w].second += 1;
      }
    }
  int checked = 0;
  for (const auto &[w, n] : seen) {
    if (n.second < 40) continue;
    const double rate = static_cast<double>(n.first) / n.second;
    INFO(w << " toxic in " << n.first << " of " << n.second);
    CHECK(rate > 0.25);
    CHECK(rate < 0.75);
    ++checked;
  }
  CHECK(checked >= 4);
}
