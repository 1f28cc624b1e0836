#include "toxbuster/context.hpp"

#include <unordered_map>

#include "toxbuster/errors.hpp"

namespace toxbuster {

std::string_view to_string(ChatMode m) {
  switch (m) {
  case ChatMode::Personal: return "personal";
  case ChatMode::Team: return "team";
  case ChatMode::Global: return "global";
  case ChatMode::Moderator: return "moderator";
  }
  return "?";
}

ChatMode parse_chat_mode(std::string_view s) {
  if (s == "personal") return ChatMode::Personal;
  if (s == "team") return ChatMode::Team;
  if (s == "global") return ChatMode::Global;
  if (s == "moderator") return ChatMode::Moderator;
  throw ParseError("unknown chat mode '" + std::string(s) + "'");
}

bool visible_in_mode(const ChatLine &candidate, const ChatLine &target, ChatMode mode) {
  switch (mode) {
  case ChatMode::Moderator: return true;
  case ChatMode::Global:
    if (candidate.chat_type == ChatType::All) return true;
    [[fallthrough]];
  case ChatMode::Team:
    if (candidate.team_id == target.team_id) return true;
    [[fallthrough]];
  case ChatMode::Personal: return candidate.player_id == target.player_id;
  }
  return false;
}

std::vector<std::size_t> filter_history(const Match &match, std::size_t target_index, ChatMode mode) {
  if (target_index >= match.lines.size()) {
    throw std::out_of_range("target index " + std::to_string(target_index) + " outside match '" + match.match_id +
                            "' with " + std::to_string(match.lines.size()) + " lines");
  }
  const ChatLine &target = match.lines[target_index];
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < target_index; ++i) {
    if (visible_in_mode(match.lines[i], target, mode)) out.push_back(i);
  }
  return out;
}

std::vector<RelativeIds> assign_relative_ids(const std::vector<const ChatLine *> &history, const ChatLine &target,
                                             int max_speakers, IdOrder order) {
  if (max_speakers < 1) throw ConfigError("max_speakers must be at least 1");
  std::unordered_map<std::string_view, int> ids{{target.player_id, 0}};
  auto visit = [&](const ChatLine &l) {
    if (!ids.count(l.player_id)) ids.emplace(l.player_id, std::min(static_cast<int>(ids.size()), max_speakers - 1));
  };
  if (order == IdOrder::Backward) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) visit(**it);
  } else {
    for (const ChatLine *l : history) visit(*l);
  }
  std::vector<RelativeIds> out;
  out.reserve(history.size());
  for (const ChatLine *l : history) out.push_back({ids.at(l->player_id), l->team_id == target.team_id ? 0 : 1});
  return out;
}

std::vector<std::string> inline_metadata_prefix(ChatType type, RelativeIds ids, InlineFields fields) {
  std::vector<std::string> out;
  if (fields.player) out.push_back("[P" + std::to_string(ids.player) + "]");
  if (fields.team) out.push_back("[T" + std::to_string(ids.team) + "]");
  if (fields.chat_type) out.push_back(type == ChatType::All ? "[ALL]" : "[TEAM]");
  return out;
}

std::vector<std::string> encode_inline_metadata(const ChatLine &line, RelativeIds ids, InlineFields fields) {
  std::vector<std::string> out = inline_metadata_prefix(line.chat_type, ids, fields);
  for (auto w : split_words(line.text)) out.emplace_back(w);
  return out;
}

namespace {

void append_line(std::vector<AssembledWord> &out, const ChatLine &line, RelativeIds ids, InlineFields fields,
                 const LineLabels *labels) {
  for (auto &p : inline_metadata_prefix(line.chat_type, ids, fields))
    out.push_back({std::move(p), ids.player, ids.team, line.chat_type, kIgnoreLabel, false, true});
  const auto words = split_words(line.text);
  if (labels && labels->size() != words.size()) {
    throw IntegrityError("labels for line " + std::to_string(line.line_index) + " of match '" + line.match_id +
                         "' cover " + std::to_string(labels->size()) + " words, line has " +
                         std::to_string(words.size()));
  }
  for (std::size_t i = 0; i < words.size(); ++i) {
    int label = kIgnoreLabel;
    if (labels) label = label_of((*labels)[i]);
    out.push_back({std::string(words[i]), ids.player, ids.team, line.chat_type, label, false});
  }
}

} // namespace

AssembledSequence assemble_sequence(const Match &match, std::size_t target_index, const LineLabels *labels,
                                    const ContextOptions &opts) {
  if (target_index >= match.lines.size()) {
    throw std::out_of_range("target index " + std::to_string(target_index) + " outside match '" + match.match_id + "'");
  }
  const ChatLine &target = match.lines[target_index];
  AssembledSequence seq;
  if (opts.mode) {
    std::vector<const ChatLine *> history;
    for (std::size_t i : filter_history(match, target_index, *opts.mode)) history.push_back(&match.lines[i]);
    const auto ids = assign_relative_ids(history, target, opts.max_speakers, opts.id_order);
    for (std::size_t h = 0; h < history.size(); ++h) {
      if (h > 0) seq.history.push_back({"", ids[h].player, ids[h].team, history[h]->chat_type, kIgnoreLabel, true});
      append_line(seq.history, *history[h], ids[h], opts.inline_fields, nullptr);
    }
    seq.history_lines = history.size();
  }
  const LineLabels all_clean(word_count(target.text), ToxicCategory::NonToxic);
  append_line(seq.current, target, {0, 0}, opts.inline_fields, labels ? labels : &all_clean);
  // In-line metadata words are never labeled.
  if (opts.inline_fields.any()) {
    const auto prefix = inline_metadata_prefix(target.chat_type, {0, 0}, opts.inline_fields).size();
    for (std::size_t i = 0; i < prefix; ++i) seq.current[i].label = kIgnoreLabel;
  }
  return seq;
}

} // namespace toxbuster
