#include "toxbuster/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "json.hpp"
#include "toxbuster/errors.hpp"

namespace toxbuster {
namespace {

constexpr int kFormatVersion = 1;

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Byte length of the UTF-8 sequence starting with `lead`; malformed leads count as one byte.
std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

std::vector<std::string_view> codepoints(std::string_view s) {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < s.size();) {
    const std::size_t n = std::min(utf8_len(static_cast<unsigned char>(s[i])), s.size() - i);
    out.push_back(s.substr(i, n));
    i += n;
  }
  return out;
}

std::string continuation(std::string_view piece) { return std::string(kContinuationPrefix) + std::string(piece); }

// Descending count, then ascending token: a total, deterministic order.
std::vector<std::string> by_frequency(const std::map<std::string, std::size_t> &counts) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(v.size());
  for (auto &[t, c] : v) out.push_back(t);
  return out;
}

std::map<std::string, std::size_t> count_pretokens(std::span<const std::string> lines) {
  std::map<std::string, std::size_t> counts;
  for (const auto &l : lines)
    for (auto &p : pretokenize(l)) ++counts[p];
  return counts;
}

std::vector<std::string> match_lines(const std::vector<Match> &matches) {
  std::vector<std::string> lines;
  for (const auto &m : matches)
    for (const auto &l : m.lines) lines.push_back(l.text);
  return lines;
}

} // namespace

const std::vector<std::string> &reserved_tokens() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[END]", "[LSEP]"};
    for (int p = 0; p < kDefaultMaxSpeakers; ++p) t.push_back("[P" + std::to_string(p) + "]");
    t.insert(t.end(), {"[T0]", "[T1]", "[TEAM]", "[ALL]"});
    return t;
  }();
  return tokens;
}

std::size_t reserved_token_count() { return reserved_tokens().size(); }

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto &p : pretokenize(text)) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto &t : reserved_tokens()) add(t);
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

int Vocabulary::add(const std::string &token) {
  if (token.empty()) throw ConfigError("vocabulary tokens must be non-empty");
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) {
    tokens_.push_back(token);
    max_piece_bytes_ = std::max(max_piece_bytes_, token.size());
  }
  return it->second;
}

std::vector<int> Vocabulary::tokenize_pretoken(std::string_view pretoken) const {
  std::vector<int> out;
  if (pretoken.empty()) return out;
  // Candidate ends at codepoint boundaries only.
  std::vector<std::size_t> bounds;
  for (std::size_t i = 0; i < pretoken.size();) {
    i += std::min(utf8_len(static_cast<unsigned char>(pretoken[i])), pretoken.size() - i);
    bounds.push_back(i);
  }
  std::size_t start = 0;
  std::string key;
  while (start < pretoken.size()) {
    int found = -1;
    std::size_t found_end = start;
    for (auto it = bounds.rbegin(); it != bounds.rend() && *it > start; ++it) {
      const std::size_t end = *it;
      if (end - start > max_piece_bytes_) continue;
      key.assign(start == 0 ? "" : kContinuationPrefix);
      key.append(pretoken.substr(start, end - start));
      if (auto f = index_.find(key); f != index_.end() && !is_reserved(f->second)) {
        found = f->second;
        found_end = end;
        break;
      }
    }
    if (found < 0) return {static_cast<int>(Special::Unknown)};
    out.push_back(found);
    start = found_end;
  }
  return out;
}

std::vector<int> Vocabulary::tokenize_word(std::string_view word) const {
  std::vector<int> out;
  for (const auto &p : pretokenize(word)) {
    auto ids = tokenize_pretoken(p);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::vector<int> Vocabulary::encode(std::string_view text) const { return tokenize_word(text); }

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    if (id < 6 && id != static_cast<int>(Special::Unknown)) continue;
    const std::string &t = tokens_[static_cast<std::size_t>(id)];
    if (t.starts_with(kContinuationPrefix) && t.size() > kContinuationPrefix.size() && !out.empty()) {
      out.append(t, kContinuationPrefix.size());
    } else {
      if (!out.empty()) out += ' ';
      out += t;
    }
  }
  return out;
}

void Vocabulary::save(std::ostream &out) const {
  nlohmann::ordered_json header = {{"format", "toxbuster-vocab"},
                                   {"version", kFormatVersion},
                                   {"size", tokens_.size()},
                                   {"reserved", reserved_token_count()},
                                   {"continuation_prefix", kContinuationPrefix}};
  out << header.dump() << '\n';
  for (const auto &t : tokens_) out << t << '\n';
}

void Vocabulary::save(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary to " + path.string());
  save(out);
  if (!out) throw std::runtime_error("failed writing vocabulary to " + path.string());
}

Vocabulary Vocabulary::load(std::istream &in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("vocabulary file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(1, std::string("vocabulary header: ") + e.what());
  }
  if (header.value("format", "") != "toxbuster-vocab") throw ParseError(1, "not a vocabulary file");
  if (header.value("version", 0) != kFormatVersion)
    throw IntegrityError("unsupported vocabulary version " + header.value("version", nlohmann::json(0)).dump());
  const auto size = header.at("size").get<std::size_t>();
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  v.max_piece_bytes_ = 0;
  std::size_t lineno = 1;
  while (v.tokens_.size() < size && std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(lineno, "empty token");
    const std::size_t before = v.tokens_.size();
    v.add(line);
    if (v.tokens_.size() == before) throw IntegrityError("duplicate token '" + line + "' at line " + std::to_string(lineno));
  }
  if (v.tokens_.size() != size)
    throw IntegrityError("vocabulary truncated: " + std::to_string(v.tokens_.size()) + " of " + std::to_string(size) +
                         " tokens");
  const auto &reserved = reserved_tokens();
  if (size < reserved.size() || !std::equal(reserved.begin(), reserved.end(), v.tokens_.begin()))
    throw IntegrityError("vocabulary reserved tokens differ from this build");
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  return load(in);
}

Vocabulary build_vocab(std::span<const std::string> lines, std::size_t size) {
  const std::size_t floor = reserved_token_count() + 26;
  if (size < floor)
    throw ConfigError("vocabulary size " + std::to_string(size) + " below minimum " + std::to_string(floor));
  const auto words = count_pretokens(lines);
  if (words.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");

  Vocabulary v;
  auto full = [&] { return v.size() >= size; };

  std::map<std::string, std::size_t> chars;
  for (const auto &[w, c] : words) {
    const auto cps = codepoints(w);
    for (std::size_t i = 0; i < cps.size(); ++i) chars[i == 0 ? std::string(cps[i]) : continuation(cps[i])] += c;
  }
  for (const auto &t : by_frequency(chars)) {
    if (full()) return v;
    v.add(t);
  }

  const std::size_t word_budget = v.size() + (size - v.size()) * 9 / 10;
  std::vector<std::string> leftover;
  for (const auto &w : by_frequency(words)) {
    if (v.contains(w)) continue;
    if (v.size() < word_budget) {
      v.add(w);
    } else {
      leftover.push_back(w);
    }
  }

  std::map<std::string, std::size_t> grams;
  for (const auto &w : leftover) {
    const auto cps = codepoints(w);
    const std::size_t c = words.at(w);
    for (std::size_t i = 1; i < cps.size(); ++i) {
      std::string g;
      for (std::size_t n = 0; n < 4 && i + n < cps.size(); ++n) {
        g.append(cps[i + n]);
        if (n >= 1) grams[continuation(g)] += c;
      }
    }
  }
  for (const auto &t : by_frequency(grams)) {
    if (full()) return v;
    v.add(t);
  }
  for (const auto &w : leftover) {
    if (full()) return v;
    v.add(w);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<Match> &matches, std::size_t size) {
  const auto lines = match_lines(matches);
  return build_vocab(std::span<const std::string>(lines), size);
}

Vocabulary extend_vocab(const Vocabulary &base, const std::vector<Match> &matches, std::size_t extra) {
  Vocabulary v = base;
  const auto lines = match_lines(matches);
  const auto words = count_pretokens(lines);
  std::map<std::string, std::size_t> chars;
  for (const auto &[w, c] : words) {
    const auto cps = codepoints(w);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string t = i == 0 ? std::string(cps[i]) : continuation(cps[i]);
      if (!v.contains(t)) chars[t] += c;
    }
  }
  std::size_t added = 0;
  for (const auto &t : by_frequency(chars)) {
    if (added == extra) return v;
    v.add(t);
    ++added;
  }
  for (const auto &w : by_frequency(words)) {
    if (added == extra) break;
    if (v.contains(w)) continue;
    v.add(w);
    ++added;
  }
  return v;
}

std::size_t EncoderInput::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(label_ids.begin(), label_ids.end(), [](int l) { return l != kIgnoreLabel; }));
}

namespace {

struct Piece {
  int id;
  int player;
  int team;
  int chat_type;
  int label;
};

void append_word(std::vector<Piece> &out, const AssembledWord &w, const Vocabulary &vocab) {
  const int ct = chat_type_id(w.chat_type);
  if (w.line_separator) {
    out.push_back({static_cast<int>(Special::LineSeparator), w.player, w.team, ct, kIgnoreLabel});
    return;
  }
  std::vector<int> ids;
  if (w.metadata) {
    const int id = vocab.id(w.text);
    if (id < 0) throw ConfigError("metadata token '" + w.text + "' missing from vocabulary");
    ids.push_back(id);
  } else {
    ids = vocab.tokenize_word(w.text);
    if (ids.empty()) ids.push_back(static_cast<int>(Special::Unknown));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], w.player, w.team, ct, i == 0 ? w.label : kIgnoreLabel});
}

} // namespace

EncoderInput tokenize_aligned(const AssembledSequence &seq, const Vocabulary &vocab, std::size_t max_len) {
  std::vector<Piece> a, b;
  for (const auto &w : seq.history) append_word(a, w, vocab);
  for (const auto &w : seq.current) append_word(b, w, vocab);
  auto [history, current] = truncate_pair(std::move(a), std::move(b), max_len);

  const int ct = seq.current.empty() ? chat_type_id(ChatType::Team) : chat_type_id(seq.current.front().chat_type);
  EncoderInput in;
  auto push = [&](const Piece &p, int segment) {
    in.token_ids.push_back(p.id);
    in.position_ids.push_back(static_cast<int>(in.position_ids.size()));
    in.segment_ids.push_back(segment);
    in.team_ids.push_back(p.team);
    in.chat_type_ids.push_back(p.chat_type);
    in.player_ids.push_back(p.player);
    in.label_ids.push_back(p.label);
  };
  auto special = [&](Special s) { return Piece{static_cast<int>(s), 0, 0, ct, kIgnoreLabel}; };
  push(special(Special::Start), 0);
  for (const auto &p : history) push(p, 0);
  push(special(Special::Separator), 0);
  for (const auto &p : current) push(p, 1);
  push(special(Special::End), 1);
  return in;
}

void pad_to(EncoderInput &input, std::size_t length) {
  while (input.size() < length) {
    input.token_ids.push_back(static_cast<int>(Special::Pad));
    input.position_ids.push_back(static_cast<int>(input.position_ids.size()));
    input.segment_ids.push_back(0);
    input.team_ids.push_back(0);
    input.chat_type_ids.push_back(0);
    input.player_ids.push_back(0);
    input.label_ids.push_back(kIgnoreLabel);
  }
}

int sentence_label(const EncoderInput &input, const SeverityOrder &order) {
  ToxicCategory best = ToxicCategory::NonToxic;
  for (int l : input.label_ids)
    if (l != kIgnoreLabel) best = order.more_severe(best, category_of(l));
  return label_of(best);
}

} // namespace toxbuster
