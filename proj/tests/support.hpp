#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "toxbuster/chat.hpp"
#include "toxbuster/encoder.hpp"
#include "toxbuster/tokenizer.hpp"

namespace toxbuster::testing {

// Five lines of one match; players 0-4 form one team and 5-9 the other.
//   0: (Team) P0 "Hf"   1: (All) P1 "Hf"   2: (Team) P6 "Which site?"
//   3: (Team) P7 "A"    4: (All) P7 "Glhf"
inline Match five_line_fixture() {
  Match m;
  m.match_id = "t3";
  auto add = [&](int player, ChatType type, std::string text) {
    ChatLine l;
    l.match_id = m.match_id;
    l.line_index = static_cast<int>(m.lines.size());
    l.player_id = std::to_string(player);
    l.team_id = player < 5 ? "A" : "B";
    l.chat_type = type;
    l.text = std::move(text);
    m.lines.push_back(l);
  };
  add(0, ChatType::Team, "Hf");
  add(1, ChatType::All, "Hf");
  add(6, ChatType::Team, "Which site?");
  add(7, ChatType::Team, "A");
  add(7, ChatType::All, "Glhf");
  finalize_match(m);
  return m;
}

inline ChatLine make_line(const std::string &match, int index, const std::string &player, const std::string &team,
                          ChatType type, const std::string &text) {
  ChatLine l;
  l.match_id = match;
  l.line_index = index;
  l.player_id = player;
  l.team_id = team;
  l.chat_type = type;
  l.text = text;
  return l;
}

inline EncoderConfig tiny_config(int vocab = 40, int layers = 1) {
  EncoderConfig c;
  c.layers = layers;
  c.heads = 2;
  c.hidden = 16;
  c.ff = 32;
  c.max_len = 16;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  return c;
}

// Random input whose ids are within the bounds of `cfg`.
inline EncoderInput random_input(const EncoderConfig &cfg, std::size_t len, std::mt19937_64 &rng) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  EncoderInput in;
  const std::size_t split = 1 + len / 2;
  for (std::size_t i = 0; i < len; ++i) {
    in.token_ids.push_back(pick(cfg.vocab_size));
    in.position_ids.push_back(static_cast<int>(i));
    in.segment_ids.push_back(i < split ? 0 : 1);
    in.team_ids.push_back(pick(cfg.n_teams));
    in.chat_type_ids.push_back(pick(cfg.n_chat_types));
    in.player_ids.push_back(pick(cfg.n_players));
    in.label_ids.push_back(i >= split && i + 1 < len ? pick(cfg.n_labels) : kIgnoreLabel);
  }
  return in;
}

class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("toxbuster-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

} // namespace toxbuster::testing
