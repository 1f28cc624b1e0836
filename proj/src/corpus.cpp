#include "toxbuster/corpus.hpp"

#include <fstream>

#include "json.hpp"
#include "toxbuster/chat_io.hpp"
#include "toxbuster/errors.hpp"
#include "toxbuster/log.hpp"

namespace toxbuster {

void GoldLabels::set(const std::string &match_id, int line_index, LineLabels labels) {
  auto &lines = by_match_[match_id];
  const auto idx = static_cast<std::size_t>(line_index);
  if (lines.size() <= idx) lines.resize(idx + 1);
  lines[idx] = std::move(labels);
}

const LineLabels *GoldLabels::find(const std::string &match_id, int line_index) const {
  auto it = by_match_.find(match_id);
  if (it == by_match_.end() || line_index < 0 || static_cast<std::size_t>(line_index) >= it->second.size()) {
    return nullptr;
  }
  return &it->second[static_cast<std::size_t>(line_index)];
}

ToxicCategory GoldLabels::line_category(const std::string &match_id, int line_index,
                                        const SeverityOrder &order) const {
  const LineLabels *l = find(match_id, line_index);
  return l ? order.most_severe(*l) : ToxicCategory::NonToxic;
}

std::size_t GoldLabels::size() const {
  std::size_t n = 0;
  for (const auto &[_, v] : by_match_) n += v.size();
  return n;
}

std::size_t Corpus::line_count() const {
  std::size_t n = 0;
  for (const auto &m : matches) n += m.lines.size();
  return n;
}

void save_gold(const std::filesystem::path &path, const std::vector<Match> &matches, const GoldLabels &gold) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto &m : matches) {
    for (const auto &l : m.lines) {
      const LineLabels *labels = gold.find(m.match_id, l.line_index);
      nlohmann::ordered_json j;
      j["match_id"] = m.match_id;
      j["line_index"] = l.line_index;
      auto arr = nlohmann::ordered_json::array();
      if (labels) {
        for (ToxicCategory c : *labels) arr.push_back(to_string(c));
      } else {
        for (std::size_t i = 0; i < word_count(l.text); ++i) arr.push_back(to_string(ToxicCategory::NonToxic));
      }
      j["labels"] = std::move(arr);
      out << j.dump() << '\n';
    }
  }
}

GoldLabels load_gold(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  GoldLabels gold;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
      LineLabels labels;
      for (const auto &v : j.at("labels")) {
        auto c = parse_category(v.get<std::string>());
        if (!c) throw ParseError(line, "unknown category '" + v.get<std::string>() + "'");
        labels.push_back(*c);
      }
      const auto &mid = j.at("match_id");
      gold.set(mid.is_string() ? mid.get<std::string>() : mid.dump(), j.at("line_index").get<int>(),
               std::move(labels));
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(line, std::string("invalid gold record: ") + e.what());
    }
  }
  return gold;
}

void save_corpus(const std::filesystem::path &dir, const Corpus &corpus) {
  std::filesystem::create_directories(dir);
  save_chat_log(dir / "lines.jsonl", corpus.matches);
  save_reports(dir / "reports.jsonl", corpus.matches);
  save_gold(dir / "gold.jsonl", corpus.matches, corpus.gold);
}

Corpus load_corpus(const std::filesystem::path &dir) {
  auto matches = load_chat_log(dir / "lines.jsonl");
  const auto gold_path = dir / "gold.jsonl";
  GoldLabels gold = std::filesystem::exists(gold_path) ? load_gold(gold_path) : GoldLabels{};
  return attach_gold(std::move(matches), gold);
}

Corpus attach_gold(std::vector<Match> matches, const GoldLabels &gold) {
  Corpus c;
  std::size_t missing = 0;
  for (const auto &m : matches) {
    for (const auto &l : m.lines) {
      const std::size_t words = word_count(l.text);
      const LineLabels *labels = gold.find(m.match_id, l.line_index);
      if (labels == nullptr || labels->empty()) {
        ++missing;
        c.gold.set(m.match_id, l.line_index, LineLabels(words, ToxicCategory::NonToxic));
        continue;
      }
      if (labels->size() != words) {
        throw IntegrityError("gold labels for (" + m.match_id + ", " + std::to_string(l.line_index) + ") have " +
                             std::to_string(labels->size()) + " entries for " + std::to_string(words) + " words");
      }
      c.gold.set(m.match_id, l.line_index, *labels);
    }
  }
  if (missing > 0) log::warn(std::to_string(missing) + " line(s) without gold labels treated as NonToxic");
  c.matches = std::move(matches);
  return c;
}

} // namespace toxbuster
