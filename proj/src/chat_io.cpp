#include "toxbuster/chat_io.hpp"

#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "toxbuster/errors.hpp"
#include "toxbuster/log.hpp"

namespace toxbuster {
namespace {

using nlohmann::json;

std::string id_field(const json &rec, const char *key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) throw ParseError(line, std::string("missing field '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(line, std::string("field '") + key + "' must be a string or integer");
}

std::string string_field(const json &rec, const char *key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) throw ParseError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

template <typename F> auto with_line(std::size_t line, F &&f) {
  try {
    return f();
  } catch (const ParseError &e) {
    if (e.line() != 0) throw;
    throw ParseError(line, e.what());
  }
}

template <typename F> void for_each_record(std::istream &in, F &&f) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (trim(raw).empty()) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::exception &e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    f(rec, line);
  }
}

std::ifstream open_in(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path &path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

} // namespace

ChatLine chat_line_from_json(const nlohmann::json &rec, std::size_t line) {
  if (!rec.is_object()) throw ParseError(line, "record is not a JSON object");
  ChatLine l;
  l.match_id = id_field(rec, "match_id", line);
  auto idx = rec.find("line_index");
  if (idx == rec.end()) throw ParseError(line, "missing field 'line_index'");
  if (!idx->is_number_integer() || idx->get<long long>() < 0)
    throw ParseError(line, "field 'line_index' must be a non-negative integer");
  l.line_index = static_cast<int>(idx->get<long long>());
  l.player_id = id_field(rec, "player_id", line);
  l.team_id = id_field(rec, "team_id", line);
  l.chat_type = with_line(line, [&] { return parse_chat_type(string_field(rec, "chat_type", line)); });
  l.text = string_field(rec, "text", line);
  if (trim(l.text).empty()) throw ParseError(line, "field 'text' is empty");
  l.game = with_line(line, [&] { return parse_game(string_field(rec, "game", line)); });
  return l;
}

nlohmann::ordered_json chat_line_to_json(const ChatLine &l) {
  nlohmann::ordered_json j;
  j["match_id"] = l.match_id;
  j["line_index"] = l.line_index;
  j["player_id"] = l.player_id;
  j["team_id"] = l.team_id;
  j["chat_type"] = to_string(l.chat_type);
  j["text"] = l.text;
  j["game"] = to_string(l.game);
  return j;
}


std::vector<std::pair<std::string, std::string>> anonymize_players(std::vector<Match> &matches) {
  std::unordered_map<std::string, std::string> map;
  std::vector<std::pair<std::string, std::string>> order;
  auto id_for = [&](const std::string &orig) -> const std::string & {
    auto [it, inserted] = map.try_emplace(orig, std::to_string(map.size()));
    if (inserted) order.emplace_back(orig, it->second);
    return it->second;
  };
  for (auto &m : matches)
    for (auto &l : m.lines) l.player_id = id_for(l.player_id);
  for (auto &m : matches) {
    for (auto &r : m.reports) {
      r.reporter = id_for(r.reporter);
      r.reported = id_for(r.reported);
    }
    finalize_match(m);
  }
  return order;
}

std::vector<Match> read_chat_log(std::istream &in, const LoadOptions &opts, std::istream *reports) {
  std::vector<Match> matches;
  std::unordered_map<std::string, std::size_t> by_id;
  std::vector<std::map<int, std::size_t>> seen; // original index -> record line, per match

  for_each_record(in, [&](const json &rec, std::size_t line) {
    ChatLine l = chat_line_from_json(rec, line);
    auto [it, inserted] = by_id.try_emplace(l.match_id, matches.size());
    if (inserted) {
      matches.push_back(Match{l.match_id, {}, {}, {}});
      seen.emplace_back();
    }
    auto &s = seen[it->second];
    auto [prev, fresh] = s.emplace(l.line_index, line);
    if (!fresh) {
      throw IntegrityError("duplicate (match_id, line_index) = (" + l.match_id + ", " + std::to_string(l.line_index) +
                           ") at lines " + std::to_string(prev->second) + " and " + std::to_string(line));
    }
    matches[it->second].lines.push_back(std::move(l));
  });

  for (auto &m : matches) {
    std::stable_sort(m.lines.begin(), m.lines.end(),
                     [](const ChatLine &a, const ChatLine &b) { return a.line_index < b.line_index; });
    for (std::size_t i = 0; i < m.lines.size(); ++i) m.lines[i].line_index = static_cast<int>(i);
  }

  if (reports != nullptr) {
    std::size_t orphans = 0;
    for_each_record(*reports, [&](const json &rec, std::size_t line) {
      if (!rec.is_object()) throw ParseError(line, "record is not a JSON object");
      const std::string mid = id_field(rec, "match_id", line);
      Report r;
      r.reporter = id_field(rec, "reporter", line);
      r.reported = id_field(rec, "reported", line);
      r.reason = with_line(line, [&] { return parse_report_reason(string_field(rec, "reason", line)); });
      auto it = by_id.find(mid);
      if (it == by_id.end()) {
        ++orphans;
        return;
      }
      matches[it->second].reports.push_back(std::move(r));
    });
    if (orphans > 0) log::warn(std::to_string(orphans) + " report(s) reference unknown matches and were skipped");
  }

  if (opts.anonymize_players) {
    anonymize_players(matches);
  } else {
    for (auto &m : matches) finalize_match(m);
  }
  return matches;
}

std::vector<Match> load_chat_log(const std::filesystem::path &path, const LoadOptions &opts) {
  auto in = open_in(path);
  const auto sibling = path.parent_path() / "reports.jsonl";
  if (opts.sibling_reports && std::filesystem::exists(sibling)) {
    auto rin = open_in(sibling);
    return read_chat_log(in, opts, &rin);
  }
  return read_chat_log(in, opts);
}

void write_chat_log(std::ostream &out, const std::vector<Match> &matches) {
  for (const auto &m : matches) {
    for (const auto &l : m.lines) {
      const auto j = chat_line_to_json(l);
      out << j.dump() << '\n';
    }
  }
}

void write_reports(std::ostream &out, const std::vector<Match> &matches) {
  for (const auto &m : matches) {
    for (const auto &r : m.reports) {
      nlohmann::ordered_json j;
      j["match_id"] = m.match_id;
      j["reporter"] = r.reporter;
      j["reported"] = r.reported;
      j["reason"] = to_string(r.reason);
      out << j.dump() << '\n';
    }
  }
}

void save_chat_log(const std::filesystem::path &path, const std::vector<Match> &matches) {
  auto out = open_out(path);
  write_chat_log(out, matches);
}

void save_reports(const std::filesystem::path &path, const std::vector<Match> &matches) {
  auto out = open_out(path);
  write_reports(out, matches);
}

} // namespace toxbuster
