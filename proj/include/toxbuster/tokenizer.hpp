#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "toxbuster/context.hpp"

namespace toxbuster {

/// Structural special tokens; ids are fixed.
enum class Special : int { Pad = 0, Unknown = 1, Start = 2, Separator = 3, End = 4, LineSeparator = 5 };

inline constexpr std::string_view kContinuationPrefix = "##";

/// Fixed reserved tokens: six structural specials followed by the in-line
/// metadata tokens [P0]..[P15], [T0], [T1], [TEAM], [ALL].
const std::vector<std::string> &reserved_tokens();
std::size_t reserved_token_count();

/// Lowercases ASCII, splits on whitespace and isolates ASCII punctuation.
/// Chat text never produces reserved tokens: "[P3]" typed by a player is split
/// like any other text.
std::vector<std::string> pretokenize(std::string_view text);
/// Pre-tokens of `text` joined by single spaces.
std::string normalize_text(std::string_view text);

class Vocabulary {
public:
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const; // -1 when absent
  bool contains(std::string_view token) const { return id(token) >= 0; }
  const std::string &token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string> &tokens() const { return tokens_; }
  bool is_reserved(int id) const { return id >= 0 && static_cast<std::size_t>(id) < reserved_token_count(); }

  /// Appends a learned token; no-op when already present.
  int add(const std::string &token);

  /// WordPiece greedy longest-match over one pre-token; [UNK] when some
  /// position has no matching piece.
  std::vector<int> tokenize_pretoken(std::string_view pretoken) const;
  /// Subword ids of a whitespace word (pretokenize + tokenize_pretoken).
  std::vector<int> tokenize_word(std::string_view word) const;
  std::vector<int> encode(std::string_view text) const;
  /// Joins pieces, gluing continuations and skipping structural specials.
  std::string decode(std::span<const int> ids) const;

  /// Header line of JSON, then one token per line (line k holds id k).
  void save(std::ostream &out) const;
  void save(const std::filesystem::path &path) const;
  static Vocabulary load(std::istream &in);
  static Vocabulary load(const std::filesystem::path &path);

  bool operator==(const Vocabulary &o) const { return tokens_ == o.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_piece_bytes_ = 0;
};

inline constexpr std::size_t kDefaultVocabSize = 8192;

/// Deterministic frequency-greedy subword vocabulary built from raw lines:
/// every observed character (word-initial and "##" continuation), then whole
/// words by descending frequency, then frequent continuation n-grams of words
/// that did not fit. Throws ConfigError when size < reserved + 26.
Vocabulary build_vocab(std::span<const std::string> lines, std::size_t size = kDefaultVocabSize);
Vocabulary build_vocab(const std::vector<Match> &matches, std::size_t size = kDefaultVocabSize);

/// Adds up to `extra` whole words of `matches` missing from `base`, by frequency.
Vocabulary extend_vocab(const Vocabulary &base, const std::vector<Match> &matches, std::size_t extra);

/// Aligned encoder input: seven parallel sequences of equal length.
struct EncoderInput {
  std::vector<int> token_ids;
  std::vector<int> position_ids;
  std::vector<int> segment_ids; // 0: start + history + separator, 1: current + end
  std::vector<int> team_ids;
  std::vector<int> chat_type_ids;
  std::vector<int> player_ids;
  std::vector<int> label_ids;

  std::size_t size() const { return token_ids.size(); }
  std::size_t labeled_count() const;
  bool operator==(const EncoderInput &) const = default;
};

inline constexpr int chat_type_id(ChatType t) { return t == ChatType::All ? 1 : 0; }

/// Layout [start] history [separator] current [end], truncated in subword units.
/// Each subword inherits its word's metadata; the label sits on the first
/// subword of each current-line word. Specials carry the current line's metadata.
EncoderInput tokenize_aligned(const AssembledSequence &seq, const Vocabulary &vocab, std::size_t max_len);

/// Pads with [PAD] (label ignored) up to `length`.
void pad_to(EncoderInput &input, std::size_t length);

/// Most severe labeled class of the input (for sentence-level classification).
int sentence_label(const EncoderInput &input, const SeverityOrder &order = {});

} // namespace toxbuster
