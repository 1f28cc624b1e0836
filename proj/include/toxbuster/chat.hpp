#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace toxbuster {

enum class ChatType { Team, All };
enum class Game { R6S, FH, Synthetic };
enum class ReportReason { Chat, Behavior };

std::string_view to_string(ChatType t);
std::string_view to_string(Game g);
std::string_view to_string(ReportReason r);
ChatType parse_chat_type(std::string_view s);
Game parse_game(std::string_view s);
ReportReason parse_report_reason(std::string_view s);

struct ChatLine {
  std::string match_id;
  int line_index = 0;
  std::string player_id;
  std::string team_id;
  ChatType chat_type = ChatType::Team;
  std::string text;
  Game game = Game::Synthetic;

  bool operator==(const ChatLine &) const = default;
};

struct Report {
  std::string reporter;
  std::string reported;
  ReportReason reason = ReportReason::Chat;

  bool operator==(const Report &) const = default;
  auto operator<=>(const Report &) const = default;
};

struct Match {
  std::string match_id;
  std::vector<ChatLine> lines;
  std::map<std::string, std::string> teams; // player_id -> team_id
  std::vector<Report> reports;              // sorted, unique

  bool operator==(const Match &) const = default;
};

/// Maximal runs of non-whitespace characters.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t word_count(std::string_view text);
std::string_view trim(std::string_view s);

/// Rebuilds `teams` from the lines and sorts/deduplicates reports.
void finalize_match(Match &m);

} // namespace toxbuster
