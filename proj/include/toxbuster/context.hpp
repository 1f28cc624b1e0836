#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toxbuster/category.hpp"
#include "toxbuster/chat.hpp"
#include "toxbuster/corpus.hpp"
#include "toxbuster/errors.hpp"

namespace toxbuster {

/// History visibility, strictly nested: Personal ⊆ Team ⊆ Global ⊆ Moderator.
enum class ChatMode { Personal, Team, Global, Moderator };

std::string_view to_string(ChatMode m);
ChatMode parse_chat_mode(std::string_view s);

/// Indices (into match.lines) of lines before `target_index` visible under `mode`,
/// in original order. Throws std::out_of_range for a bad target.
std::vector<std::size_t> filter_history(const Match &match, std::size_t target_index, ChatMode mode);
bool visible_in_mode(const ChatLine &candidate, const ChatLine &target, ChatMode mode);

enum class IdOrder {
  Backward, // first appearance scanning from the most recent history line
  Forward,  // first appearance scanning from the oldest history line
};

struct RelativeIds {
  int player = 0;
  int team = 0;
  bool operator==(const RelativeIds &) const = default;
};

inline constexpr int kDefaultMaxSpeakers = 16;

/// Writer of `target` is player 0 / team 0. Other players are numbered from 1 by
/// first appearance (see IdOrder), clamped to max_speakers - 1; other teams are 1.
/// Returns one entry per history line, in history order.
std::vector<RelativeIds> assign_relative_ids(const std::vector<const ChatLine *> &history, const ChatLine &target,
                                             int max_speakers = kDefaultMaxSpeakers,
                                             IdOrder order = IdOrder::Backward);

/// Number of reserved special slots around a sentence pair: start, separator, end.
inline constexpr std::size_t kPairSpecialTokens = 3;

/// Fits a sentence pair into `budget` tokens including the three specials:
/// drops from the left of `history` first, then from the right of `current`.
template <typename Token>
std::pair<std::vector<Token>, std::vector<Token>> truncate_pair(std::vector<Token> history, std::vector<Token> current,
                                                                std::size_t budget) {
  if (budget < kPairSpecialTokens) {
    throw ConfigError("truncation budget " + std::to_string(budget) + " below the 3 reserved special tokens");
  }
  const std::size_t room = budget - kPairSpecialTokens;
  if (history.size() + current.size() <= room) return {std::move(history), std::move(current)};
  if (current.size() >= room) {
    history.clear();
    current.resize(room);
  } else {
    const std::size_t keep = room - current.size();
    history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(keep));
  }
  return {std::move(history), std::move(current)};
}

/// Which metadata fields are written in-line in front of each line ("[P0] [T0] [ALL]").
struct InlineFields {
  bool player = false;
  bool team = false;
  bool chat_type = false;

  bool any() const { return player || team || chat_type; }
  bool operator==(const InlineFields &) const = default;
};

std::vector<std::string> inline_metadata_prefix(ChatType type, RelativeIds ids, InlineFields fields);
/// Prefix tokens followed by the line's words.
std::vector<std::string> encode_inline_metadata(const ChatLine &line, RelativeIds ids, InlineFields fields);

struct AssembledWord {
  std::string text;
  int player = 0;
  int team = 0;
  ChatType chat_type = ChatType::Team;
  int label = kIgnoreLabel;
  bool line_separator = false; // boundary marker between consecutive history lines
  bool metadata = false;       // in-line metadata word; maps to its reserved token verbatim
};

struct AssembledSequence {
  std::vector<AssembledWord> history;
  std::vector<AssembledWord> current;
  std::size_t history_lines = 0;
};

struct ContextOptions {
  std::optional<ChatMode> mode = ChatMode::Global; // nullopt: no history
  IdOrder id_order = IdOrder::Backward;
  int max_speakers = kDefaultMaxSpeakers;
  InlineFields inline_fields{};

  bool operator==(const ContextOptions &) const = default;
};

/// Builds the sentence pair for `match.lines[target_index]`. `labels` are the
/// target line's per-word gold labels (nullptr: all NonToxic). History words and
/// in-line metadata words carry the ignore label.
AssembledSequence assemble_sequence(const Match &match, std::size_t target_index, const LineLabels *labels,
                                    const ContextOptions &opts);

} // namespace toxbuster
