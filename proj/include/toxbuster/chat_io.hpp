#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/chat.hpp"

namespace toxbuster {

/// One chat-line record; ParseError carries `line` (0 when not from a file).
ChatLine chat_line_from_json(const nlohmann::json &rec, std::size_t line = 0);
nlohmann::ordered_json chat_line_to_json(const ChatLine &l);

struct LoadOptions {
  /// Replace player ids by ordinal integers in first-appearance order
  /// (matches in file order, lines in index order, then report-only players).
  bool anonymize_players = true;
  /// Read a sibling `reports.jsonl` next to the chat log when it exists.
  bool sibling_reports = true;
};

/// Reads chat-line JSONL. Lines are grouped per match (matches in order of first
/// appearance), sorted by line_index and reindexed gaplessly from 0.
/// Throws ParseError (with 1-based record line) or IntegrityError on duplicates.
std::vector<Match> load_chat_log(const std::filesystem::path &path, const LoadOptions &opts = {});
/// `reports` (optional) holds reports.jsonl records; they are attached before
/// anonymization so both files share one player mapping.
std::vector<Match> read_chat_log(std::istream &in, const LoadOptions &opts = {}, std::istream *reports = nullptr);

void save_chat_log(const std::filesystem::path &path, const std::vector<Match> &matches);
void write_chat_log(std::ostream &out, const std::vector<Match> &matches);
void save_reports(const std::filesystem::path &path, const std::vector<Match> &matches);
void write_reports(std::ostream &out, const std::vector<Match> &matches);

/// Global first-appearance anonymization over a set of matches; returns the map used.
std::vector<std::pair<std::string, std::string>> anonymize_players(std::vector<Match> &matches);

} // namespace toxbuster
