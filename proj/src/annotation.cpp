#include "toxbuster/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "toxbuster/errors.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/rng.hpp"

namespace toxbuster {
namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool overlaps(const AnnotatedSpan &a, const AnnotatedSpan &b) {
  return a.word_start < b.word_end && b.word_start < a.word_end;
}

std::string span_where(const AnnotatedSpan &s) {
  return "span [" + std::to_string(s.word_start) + ", " + std::to_string(s.word_end) + ") by '" + s.annotator_id +
         "' on line " + std::to_string(s.line_index) + " of match '" + s.match_id + "'";
}

} // namespace

AggregatedLabel aggregate_spans(std::span<const AnnotatedSpan> spans, std::size_t word_count, int quorum,
                                const SeverityOrder &order) {
  if (quorum != 2 && quorum != 3) throw ConfigError("quorum must be 2 or 3, got " + std::to_string(quorum));
  AggregatedLabel out;
  out.words.assign(word_count, ToxicCategory::NonToxic);
  if (spans.empty()) return out;
  out.match_id = spans.front().match_id;
  out.line_index = spans.front().line_index;

  for (const auto &s : spans) {
    if (s.match_id != out.match_id || s.line_index != out.line_index)
      throw IntegrityError(span_where(s) + " does not belong to line " + std::to_string(out.line_index) +
                           " of match '" + out.match_id + "'");
    if (s.word_start < 0 || s.word_start >= s.word_end || static_cast<std::size_t>(s.word_end) > word_count)
      throw IntegrityError(span_where(s) + " is outside the line's " + std::to_string(word_count) + " words");
    if (!is_toxic(s.category)) throw IntegrityError(span_where(s) + " carries a non-toxic category");
  }

  DisjointSets sets(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i)
    for (std::size_t j = i + 1; j < spans.size(); ++j)
      if (spans[i].annotator_id != spans[j].annotator_id && overlaps(spans[i], spans[j])) sets.unite(i, j);

  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < spans.size(); ++i) clusters[sets.find(i)].push_back(i);

  for (const auto &[_, members] : clusters) {
    // Each annotator votes once, with their most severe category in the cluster.
    std::map<std::string, ToxicCategory> votes;
    int lo = 0, hi = static_cast<int>(word_count);
    for (std::size_t i : members) {
      const auto &s = spans[i];
      auto [it, fresh] = votes.try_emplace(s.annotator_id, s.category);
      if (!fresh) it->second = order.more_severe(it->second, s.category);
      lo = std::max(lo, s.word_start);
      hi = std::min(hi, s.word_end);
    }
    if (votes.size() < static_cast<std::size_t>(quorum) || lo >= hi) continue;

    std::array<int, kNumToxicCategories> tally{};
    for (const auto &[a, c] : votes) ++tally[label_of(c)];
    const int top = *std::max_element(tally.begin(), tally.end());
    ToxicCategory winner = ToxicCategory::NonToxic;
    for (int c = 0; c < kNumToxicCategories; ++c)
      if (tally[c] == top) winner = order.more_severe(winner, category_of(c));

    for (int w = lo; w < hi; ++w) out.words[w] = order.more_severe(out.words[w], winner);
  }
  return out;
}

double fleiss_kappa(const RatingMatrix &ratings) { return agreement_report(ratings).fleiss_kappa; }

AgreementReport agreement_report(const RatingMatrix &ratings) {
  if (ratings.size() < 2) throw ConfigError("Fleiss kappa needs at least 2 items");
  const std::size_t n = ratings.front().size();
  if (n < 2) throw ConfigError("Fleiss kappa needs at least 2 raters");
  std::map<int, std::size_t> column;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (ratings[i].size() != n)
      throw ConfigError("rating row " + std::to_string(i) + " has " + std::to_string(ratings[i].size()) +
                        " raters, expected " + std::to_string(n));
    for (int c : ratings[i]) column.try_emplace(c, column.size());
  }

  const std::size_t items = ratings.size();
  const std::size_t k = column.size();
  std::vector<double> category_total(k, 0.0);
  double p_bar = 0.0;
  std::vector<double> counts(k);
  for (const auto &row : ratings) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (int c : row) counts[column.at(c)] += 1.0;
    double agree = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      agree += counts[j] * (counts[j] - 1.0);
      category_total[j] += counts[j];
    }
    p_bar += agree / (static_cast<double>(n) * static_cast<double>(n - 1));
  }
  p_bar /= static_cast<double>(items);
  double p_e = 0.0;
  for (double t : category_total) {
    const double p = t / (static_cast<double>(items) * static_cast<double>(n));
    p_e += p * p;
  }

  AgreementReport r;
  r.n_items = items;
  r.n_raters = n;
  r.n_categories = k;
  if (k == 1) {
    log::warn("Fleiss kappa is degenerate: every rating uses a single category; reporting 1");
    r.degenerate = true;
    r.fleiss_kappa = 1.0;
    return r;
  }
  r.fleiss_kappa = (p_bar - p_e) / (1.0 - p_e);
  return r;
}

RatingMatrix line_level_ratings(std::span<const AnnotatedSpan> spans, std::span<const std::string> annotators,
                                std::span<const std::pair<std::string, int>> lines, const SeverityOrder &order) {
  std::map<std::pair<std::string, int>, std::size_t> row_of;
  for (std::size_t i = 0; i < lines.size(); ++i) row_of.emplace(lines[i], i);
  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < annotators.size(); ++j) col_of.emplace(annotators[j], j);

  std::vector<std::vector<ToxicCategory>> cats(lines.size(),
                                               std::vector<ToxicCategory>(annotators.size(), ToxicCategory::NonToxic));
  for (const auto &s : spans) {
    auto r = row_of.find({s.match_id, s.line_index});
    auto c = col_of.find(s.annotator_id);
    if (r == row_of.end() || c == col_of.end()) continue;
    auto &cell = cats[r->second][c->second];
    cell = order.more_severe(cell, s.category);
  }
  RatingMatrix m(lines.size(), std::vector<int>(annotators.size()));
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t j = 0; j < annotators.size(); ++j) m[i][j] = label_of(cats[i][j]);
  return m;
}

GoldLabels aggregate_corpus(const std::vector<Match> &matches, std::span<const AnnotatedSpan> spans, int quorum,
                            const SeverityOrder &order) {
  std::map<std::pair<std::string, int>, std::vector<AnnotatedSpan>> by_line;
  for (const auto &s : spans) by_line[{s.match_id, s.line_index}].push_back(s);

  GoldLabels gold;
  std::size_t used = 0;
  for (const auto &m : matches) {
    for (const auto &l : m.lines) {
      auto it = by_line.find({m.match_id, l.line_index});
      if (it == by_line.end()) {
        gold.set(m.match_id, l.line_index, LineLabels(word_count(l.text), ToxicCategory::NonToxic));
        continue;
      }
      ++used;
      gold.set(m.match_id, l.line_index, aggregate_spans(it->second, word_count(l.text), quorum, order).words);
    }
  }
  if (used != by_line.size()) {
    for (const auto &[key, v] : by_line) {
      bool known = false;
      for (const auto &m : matches) known |= m.match_id == key.first && key.second >= 0 &&
                                             static_cast<std::size_t>(key.second) < m.lines.size();
      if (!known) throw IntegrityError(span_where(v.front()) + " references a line absent from the chat log");
    }
  }
  return gold;
}

std::vector<AnnotatedSpan> simulate_annotators(const Corpus &corpus, const AnnotatorSimConfig &cfg) {
  if (cfg.n_annotators < 1) throw ConfigError("n_annotators must be positive");
  Rng rng(cfg.seed);
  std::vector<AnnotatedSpan> out;
  for (const auto &m : corpus.matches) {
    for (const auto &l : m.lines) {
      const LineLabels *gold = corpus.gold.find(m.match_id, l.line_index);
      const int words = static_cast<int>(word_count(l.text));
      std::vector<std::pair<int, int>> runs; // [start, end)
      if (gold) {
        for (int w = 0; w < words;) {
          const auto c = (*gold)[w];
          int e = w + 1;
          while (e < words && (*gold)[e] == c) ++e;
          if (is_toxic(c)) runs.emplace_back(w, e);
          w = e;
        }
      }
      for (int a = 0; a < cfg.n_annotators; ++a) {
        const std::string who = "a" + std::to_string(a);
        for (auto [s, e] : runs) {
          AnnotatedSpan span{who, m.match_id, l.line_index, s, e, (*gold)[s]};
          if (rng.bernoulli(cfg.noise)) {
            const auto kind = rng.below(3);
            if (kind == 0) continue;
            if (kind == 1) {
              span.category = category_of(static_cast<int>(rng.below(kNumToxicCategories)));
            } else if (e - s > 1 && rng.bernoulli(0.5)) {
              --span.word_end;
            } else if (span.word_end < words) {
              ++span.word_end;
            } else if (span.word_start > 0) {
              --span.word_start;
            }
          }
          out.push_back(span);
        }
        if (runs.empty() && words > 0 && rng.bernoulli(cfg.false_positive_rate)) {
          const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(words)));
          out.push_back({who, m.match_id, l.line_index, s, s + 1,
                         category_of(static_cast<int>(rng.below(kNumToxicCategories)))});
        }
      }
    }
  }
  return out;
}

std::vector<AnnotatedSpan> load_annotations(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<AnnotatedSpan> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (trim(raw).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(raw);
      AnnotatedSpan s;
      s.annotator_id = j.at("annotator_id").is_string() ? j.at("annotator_id").get<std::string>()
                                                        : j.at("annotator_id").dump();
      s.match_id = j.at("match_id").is_string() ? j.at("match_id").get<std::string>() : j.at("match_id").dump();
      s.line_index = j.at("line_index").get<int>();
      s.word_start = j.at("word_start").get<int>();
      s.word_end = j.at("word_end").get<int>();
      const auto name = j.at("category").get<std::string>();
      const auto c = parse_category(name);
      if (!c || !is_toxic(*c)) throw ParseError(line, "unknown toxic category '" + name + "'");
      s.category = *c;
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(line, e.what());
    }
  }
  return out;
}

void save_annotations(const std::filesystem::path &path, std::span<const AnnotatedSpan> spans) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto &s : spans) {
    nlohmann::ordered_json j = {{"annotator_id", s.annotator_id}, {"match_id", s.match_id},
                                {"line_index", s.line_index},     {"word_start", s.word_start},
                                {"word_end", s.word_end},         {"category", to_string(s.category)}};
    out << j.dump() << '\n';
  }
}

} // namespace toxbuster
