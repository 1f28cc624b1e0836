#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/category.hpp"
#include "toxbuster/chat.hpp"
#include "toxbuster/corpus.hpp"

namespace toxbuster {

/// Parameters of the synthetic chat generator.
///
/// Toxic lines normally carry words from their category's lexicon. A fraction
/// `context_rule_rate` of matches are trigger matches: an all-chat line near the
/// start carries a trigger word, and every later toxic line instead carries an
/// ambiguous word of its category. An ambiguous word is toxic exactly when a
/// trigger occurs earlier in the match in a line visible to the writer under
/// Global mode; otherwise it is NonToxic. Clean lines of matches without a
/// trigger receive ambiguous words with probability `ambiguous_in_clean_rate`,
/// so the word alone carries no signal.
struct SynthConfig {
  /// Fraction of lines per toxic category; the remainder is NonToxic.
  std::array<double, kNumToxicCategories> proportions{};
  std::array<std::vector<std::string>, kNumToxicCategories> lexicons;
  /// Context-only words per category (disjoint from lexicons and neutral words).
  std::array<std::vector<std::string>, kNumToxicCategories> ambiguous;
  std::vector<std::string> triggers;
  std::vector<std::string> neutral;

  double context_rule_rate = 0.0;
  /// Probability that a clean line with no visible trigger receives an ambiguous word.
  double ambiguous_in_clean_rate = 0.0;
  /// Trigger lines are drawn uniformly from [0, trigger_max_line].
  int trigger_max_line = 2;

  int n_matches = 100;
  int players_per_match = 10;
  int lines_per_match = 20;
  double all_chat_rate = 0.3;
  int min_words = 2;
  int max_words = 7;

  /// Players with at least this many toxic lines get chat-reported.
  int report_threshold = 3;
  /// Per-player probability of a behavior report.
  double behavior_report_rate = 0.0;
  /// Matches without any report are kept with probability 1 / weight (>= 1).
  double reported_match_weight = 1.0;

  Game game = Game::Synthetic;
  std::string match_prefix = "m";
  std::uint64_t seed = 1;

  /// Production-like category mix and built-in lexicons.
  static SynthConfig defaults();
  /// Only lexicon toxicity, no context rule.
  static SynthConfig separable();
  /// Most toxic lines are context-rule lines.
  static SynthConfig context_rule();

  void validate() const; // throws ConfigError
};

void to_json(nlohmann::json &j, const SynthConfig &c);
void from_json(const nlohmann::json &j, SynthConfig &c);

/// Deterministic given `cfg.seed`. Gold marks lexicon words with their category
/// and ambiguous words with their category when licensed by a visible trigger.
Corpus generate_synthetic_corpus(const SynthConfig &cfg);

/// True when line `target` of `m` is visible to its writer's Global history
/// from a line with index `earlier`.
bool globally_visible(const Match &m, std::size_t earlier, std::size_t target);

/// Pseudo-word lexicons used by the defaults; exposed for the keyword baseline.
std::array<std::vector<std::string>, kNumToxicCategories> default_lexicons(int words_per_category = 12,
                                                                          std::uint64_t salt = 0);

} // namespace toxbuster
