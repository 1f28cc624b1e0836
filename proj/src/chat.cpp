#include "toxbuster/chat.hpp"

#include <algorithm>
#include <cctype>

#include "toxbuster/errors.hpp"

namespace toxbuster {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

} // namespace

std::string_view to_string(ChatType t) { return t == ChatType::All ? "all" : "team"; }

std::string_view to_string(Game g) {
  switch (g) {
  case Game::R6S: return "R6S";
  case Game::FH: return "FH";
  case Game::Synthetic: return "Synthetic";
  }
  return "Synthetic";
}

std::string_view to_string(ReportReason r) { return r == ReportReason::Chat ? "chat" : "behavior"; }

ChatType parse_chat_type(std::string_view s) {
  const std::string l = lower(s);
  if (l == "team") return ChatType::Team;
  if (l == "all") return ChatType::All;
  throw ParseError("unknown chat_type '" + std::string(s) + "'");
}

Game parse_game(std::string_view s) {
  const std::string l = lower(s);
  if (l == "r6s") return Game::R6S;
  if (l == "fh") return Game::FH;
  if (l == "synthetic") return Game::Synthetic;
  throw ParseError("unknown game '" + std::string(s) + "'");
}

ReportReason parse_report_reason(std::string_view s) {
  const std::string l = lower(s);
  if (l == "chat") return ReportReason::Chat;
  if (l == "behavior" || l == "behaviour") return ReportReason::Behavior;
  throw ParseError("unknown report reason '" + std::string(s) + "'");
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void finalize_match(Match &m) {
  m.teams.clear();
  for (const auto &l : m.lines) m.teams[l.player_id] = l.team_id;
  std::sort(m.reports.begin(), m.reports.end());
  m.reports.erase(std::unique(m.reports.begin(), m.reports.end()), m.reports.end());
}

} // namespace toxbuster
