#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "toxbuster/category.hpp"
#include "toxbuster/chat.hpp"

namespace toxbuster {

using LineLabels = std::vector<ToxicCategory>; // one entry per word

/// Gold per-word labels keyed by (match_id, line_index).
class GoldLabels {
public:
  void set(const std::string &match_id, int line_index, LineLabels labels);
  const LineLabels *find(const std::string &match_id, int line_index) const;
  /// Line-level category: most severe word label, NonToxic when clean.
  ToxicCategory line_category(const std::string &match_id, int line_index,
                              const SeverityOrder &order = {}) const;
  std::size_t size() const;
  bool operator==(const GoldLabels &) const = default;

  const std::map<std::string, std::vector<LineLabels>> &entries() const { return by_match_; }

private:
  std::map<std::string, std::vector<LineLabels>> by_match_;
};

struct Corpus {
  std::vector<Match> matches;
  GoldLabels gold;

  std::size_t line_count() const;
};

/// gold.jsonl: {"match_id", "line_index", "labels": [category per word]}.
void save_gold(const std::filesystem::path &path, const std::vector<Match> &matches, const GoldLabels &gold);
GoldLabels load_gold(const std::filesystem::path &path);

/// Directory layout: lines.jsonl, reports.jsonl, gold.jsonl.
void save_corpus(const std::filesystem::path &dir, const Corpus &corpus);
Corpus load_corpus(const std::filesystem::path &dir);

/// Lines not covered by gold are labeled all-NonToxic; word counts are checked.
Corpus attach_gold(std::vector<Match> matches, const GoldLabels &gold);

} // namespace toxbuster
