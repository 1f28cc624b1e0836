#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "toxbuster/context.hpp"

using namespace toxbuster;
using testing::five_line_fixture;

namespace {
std::vector<std::size_t> idx(std::initializer_list<std::size_t> v) { return v; }

Match random_match(std::mt19937_64 &rng, int lines, int players) {
  Match m;
  m.match_id = "r";
  for (int i = 0; i < lines; ++i) {
    const int p = static_cast<int>(rng() % static_cast<unsigned>(players));
    m.lines.push_back(testing::make_line("r", i, std::to_string(p), p < players / 2 ? "0" : "1",
                                         rng() % 3 == 0 ? ChatType::All : ChatType::Team, "w" + std::to_string(i)));
  }
  finalize_match(m);
  return m;
}
} // namespace

TEST_CASE("filter_history on the five-line fixture") {
  const Match m = five_line_fixture();
  CHECK(filter_history(m, 4, ChatMode::Personal) == idx({3}));
  CHECK(filter_history(m, 4, ChatMode::Team) == idx({2, 3}));
  CHECK(filter_history(m, 4, ChatMode::Global) == idx({1, 2, 3}));
  CHECK(filter_history(m, 4, ChatMode::Moderator) == idx({0, 1, 2, 3}));
}

TEST_CASE("filter_history: first line has no history; bad target throws") {
  const Match m = five_line_fixture();
  for (auto mode : {ChatMode::Personal, ChatMode::Team, ChatMode::Global, ChatMode::Moderator})
    CHECK(filter_history(m, 0, mode).empty());
  CHECK_THROWS_AS(filter_history(m, 5, ChatMode::Global), std::out_of_range);
}

TEST_CASE("filter_history: modes nest and a lone speaker sees everything in every mode") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Match m = random_match(rng, 12, 6);
    for (std::size_t t = 0; t < m.lines.size(); ++t) {
      std::set<std::size_t> prev;
      for (auto mode : {ChatMode::Personal, ChatMode::Team, ChatMode::Global, ChatMode::Moderator}) {
        const auto h = filter_history(m, t, mode);
        CHECK(std::is_sorted(h.begin(), h.end()));
        const std::set<std::size_t> cur(h.begin(), h.end());
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
      }
    }
  }
  Match solo = random_match(rng, 8, 1);
  for (auto mode : {ChatMode::Personal, ChatMode::Team, ChatMode::Global})
    CHECK(filter_history(solo, 7, mode) == filter_history(solo, 7, ChatMode::Moderator));
}

TEST_CASE("relative ids on the fixture, moderator history") {
  const Match m = five_line_fixture();
  std::vector<const ChatLine *> hist;
  for (auto i : filter_history(m, 4, ChatMode::Moderator)) hist.push_back(&m.lines[i]);
  const auto ids = assign_relative_ids(hist, m.lines[4]);
  REQUIRE(ids.size() == 4);
  // lines 0..3 by players 0, 1, 6, 7
  CHECK(ids[3] == RelativeIds{0, 0});
  CHECK(ids[2] == RelativeIds{1, 0});
  CHECK(ids[1] == RelativeIds{2, 1});
  CHECK(ids[0] == RelativeIds{3, 1});
}

TEST_CASE("relative ids: forward order numbers from the oldest line") {
  const Match m = five_line_fixture();
  std::vector<const ChatLine *> hist;
  for (auto i : filter_history(m, 4, ChatMode::Moderator)) hist.push_back(&m.lines[i]);
  const auto ids = assign_relative_ids(hist, m.lines[4], 16, IdOrder::Forward);
  CHECK(ids[0].player == 1);
  CHECK(ids[1].player == 2);
  CHECK(ids[2].player == 3);
}

TEST_CASE("relative ids clamp to max_speakers - 1") {
  Match m;
  m.match_id = "c";
  for (int p = 0; p < 20; ++p)
    m.lines.push_back(testing::make_line("c", p, std::to_string(p), "0", ChatType::All, "x"));
  m.lines.push_back(testing::make_line("c", 20, "target", "0", ChatType::All, "x"));
  std::vector<const ChatLine *> hist;
  for (int i = 0; i < 20; ++i) hist.push_back(&m.lines[static_cast<std::size_t>(i)]);
  const auto ids = assign_relative_ids(hist, m.lines[20], 16);
  // speaker 19 is most recent (id 1) ... speaker 5 gets 15, older ones share 15
  CHECK(ids[19].player == 1);
  for (int i = 0; i <= 4; ++i) CHECK(ids[static_cast<std::size_t>(i)].player == 15);
  CHECK_THROWS_AS(assign_relative_ids(hist, m.lines[20], 0), ConfigError);
}

TEST_CASE("relative ids: adding older history never renumbers recent speakers") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Match m = random_match(rng, 15, 10);
    std::vector<const ChatLine *> full;
    for (std::size_t i = 0; i + 1 < m.lines.size(); ++i) full.push_back(&m.lines[i]);
    const auto all = assign_relative_ids(full, m.lines.back());
    const std::size_t cut = rng() % full.size();
    std::vector<const ChatLine *> recent(full.begin() + static_cast<std::ptrdiff_t>(cut), full.end());
    const auto part = assign_relative_ids(recent, m.lines.back());
    for (std::size_t k = 0; k < recent.size(); ++k) CHECK(part[k] == all[cut + k]);
  }
}

TEST_CASE("truncate_pair worked examples") {
  auto seq = [](int n, int base) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = base + i;
    return v;
  };
  {
    auto [a, b] = truncate_pair(seq(6, 0), seq(4, 100), 13);
    CHECK(a == seq(6, 0));
    CHECK(b == seq(4, 100));
  }
  {
    auto [a, b] = truncate_pair(seq(6, 0), seq(4, 100), 10);
    CHECK(a == std::vector<int>{3, 4, 5});
    CHECK(b == seq(4, 100));
  }
  {
    auto [a, b] = truncate_pair(seq(6, 0), seq(10, 100), 8);
    CHECK(a.empty());
    CHECK(b == seq(5, 100));
  }
  CHECK_THROWS_AS(truncate_pair(seq(1, 0), seq(1, 0), 2), ConfigError);
}

TEST_CASE("inline metadata prefixes") {
  const auto own = testing::make_line("m", 0, "7", "B", ChatType::Team, "gg");
  CHECK(encode_inline_metadata(own, {0, 0}, {true, true, true}) == std::vector<std::string>{"[P0]", "[T0]", "[TEAM]", "gg"});
  CHECK(encode_inline_metadata(own, {1, 1}, {true, true, true}) == std::vector<std::string>{"[P1]", "[T1]", "[TEAM]", "gg"});
  CHECK(encode_inline_metadata(own, {0, 0}, {}) == std::vector<std::string>{"gg"});
  CHECK(inline_metadata_prefix(ChatType::All, {3, 1}, {false, false, true}) == std::vector<std::string>{"[ALL]"});
}

TEST_CASE("assemble_sequence: labels only on the current line, ids relative to the writer") {
  const Match m = five_line_fixture();
  const LineLabels gold = {ToxicCategory::Spam};
  ContextOptions opts;
  opts.mode = ChatMode::Global;
  const auto seq = assemble_sequence(m, 4, &gold, opts);
  CHECK(seq.history_lines == 3);
  for (const auto &w : seq.history) CHECK(w.label == kIgnoreLabel);
  REQUIRE(seq.current.size() == 1);
  CHECK(seq.current[0].label == label_of(ToxicCategory::Spam));
  CHECK(seq.current[0].player == 0);
  CHECK(seq.current[0].team == 0);
  CHECK(seq.current[0].chat_type == ChatType::All);
  // history: "Hf" (P1), sep, "Which" "site?" (P6), sep, "A" (P7)
  std::vector<std::string> words;
  for (const auto &w : seq.history) words.push_back(w.line_separator ? "|" : w.text);
  CHECK(words == std::vector<std::string>{"Hf", "|", "Which", "site?", "|", "A"});
  CHECK(seq.history[0].player == 2);
  CHECK(seq.history[0].team == 1);
  CHECK(seq.history[2].player == 1);
  CHECK(seq.history[5].player == 0);

  opts.mode = std::nullopt;
  const auto none = assemble_sequence(m, 4, &gold, opts);
  CHECK(none.history.empty());
}

TEST_CASE("assemble_sequence: in-line metadata words are ignored by the loss") {
  const Match m = five_line_fixture();
  ContextOptions opts;
  opts.mode = ChatMode::Team;
  opts.inline_fields = {true, true, true};
  const auto seq = assemble_sequence(m, 4, nullptr, opts);
  REQUIRE(seq.current.size() == 4);
  for (int i = 0; i < 3; ++i) {
    CHECK(seq.current[static_cast<std::size_t>(i)].metadata);
    CHECK(seq.current[static_cast<std::size_t>(i)].label == kIgnoreLabel);
  }
  CHECK(seq.current[3].label == kNonToxicLabel);
  const LineLabels wrong = {ToxicCategory::Spam, ToxicCategory::Spam};
  CHECK_THROWS_AS(assemble_sequence(m, 4, &wrong, opts), IntegrityError);
}
