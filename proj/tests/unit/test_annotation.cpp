#include <algorithm>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "toxbuster/annotation.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/synth.hpp"

using namespace toxbuster;

namespace {
AnnotatedSpan span(std::string who, int a, int b, ToxicCategory c) { return {std::move(who), "m", 0, a, b, c}; }
constexpr auto N = ToxicCategory::NonToxic;
constexpr auto S = ToxicCategory::Spam;
constexpr auto H = ToxicCategory::HateAndHarassment;
} // namespace

TEST_CASE("aggregate: three overlapping spans keep their intersection") {
  const std::vector spans = {span("a", 0, 3, S), span("b", 1, 4, S), span("c", 1, 3, S)};
  CHECK(aggregate_spans(spans, 5).words == LineLabels{N, S, S, N, N});
}

TEST_CASE("aggregate: a three-way tie resolves to the most severe category") {
  const std::vector spans = {span("a", 0, 2, ToxicCategory::Threats), span("b", 0, 2, H),
                             span("c", 0, 2, ToxicCategory::InsultsAndFlaming)};
  CHECK(aggregate_spans(spans, 3).words == LineLabels{H, H, N});
}

TEST_CASE("aggregate: quorum unmet leaves the line clean") {
  const std::vector spans = {span("a", 0, 2, S)};
  CHECK(aggregate_spans(spans, 3).words == LineLabels{N, N, N});
  CHECK(aggregate_spans(spans, 3, 2).words == LineLabels{N, N, N});
}

TEST_CASE("aggregate: quorum two and plurality vote") {
  const std::vector spans = {span("a", 0, 2, S), span("b", 1, 3, S), span("c", 1, 2, H)};
  CHECK(aggregate_spans(spans, 3, 2).words == LineLabels{N, S, N});
  CHECK(aggregate_spans(std::vector{span("a", 0, 2, S), span("b", 1, 3, S)}, 3, 2).words == LineLabels{N, S, N});
}

TEST_CASE("aggregate: invalid spans and quorum") {
  CHECK_THROWS_AS(aggregate_spans(std::vector{span("a", 0, 6, S)}, 5), IntegrityError);
  CHECK_THROWS_AS(aggregate_spans(std::vector{span("a", 2, 2, S)}, 5), IntegrityError);
  CHECK_THROWS_AS(aggregate_spans(std::vector{span("a", 0, 1, N)}, 5), IntegrityError);
  auto other = span("a", 0, 1, S);
  other.line_index = 1;
  CHECK_THROWS_AS(aggregate_spans(std::vector{span("b", 0, 1, S), other}, 5), IntegrityError);
  CHECK_THROWS_AS(aggregate_spans(std::vector<AnnotatedSpan>{}, 5, 4), ConfigError);
}

TEST_CASE("aggregate: permutation invariance and subset properties") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int words = 1 + static_cast<int>(rng() % 8);
    std::vector<AnnotatedSpan> spans;
    const int n = static_cast<int>(rng() % 7);
    for (int k = 0; k < n; ++k) {
      const int a = static_cast<int>(rng() % static_cast<unsigned>(words));
      const int b = a + 1 + static_cast<int>(rng() % static_cast<unsigned>(words - a));
      spans.push_back(span(std::string(1, static_cast<char>('a' + rng() % 3)), a, b, category_of(static_cast<int>(rng() % 8))));
    }
    const auto ref = aggregate_spans(spans, static_cast<std::size_t>(words), 2);
    std::vector<char> covered(static_cast<std::size_t>(words), 0);
    for (const auto &s : spans)
      for (int w = s.word_start; w < s.word_end; ++w) covered[static_cast<std::size_t>(w)] = 1;
    for (int w = 0; w < words; ++w)
      if (is_toxic(ref.words[static_cast<std::size_t>(w)])) CHECK(covered[static_cast<std::size_t>(w)]);
    for (int p = 0; p < 5; ++p) {
      std::shuffle(spans.begin(), spans.end(), rng);
      CHECK(aggregate_spans(spans, static_cast<std::size_t>(words), 2) == ref);
    }
  }
}

TEST_CASE("fleiss kappa: perfect agreement, direct formula and relabeling") {
  CHECK(fleiss_kappa({{1, 1, 1}, {2, 2, 2}, {1, 1, 1}}) == doctest::Approx(1.0));
  // items (A,A,B), (B,B,B): P = 2/3, Pe = 5/9
  CHECK(fleiss_kappa({{0, 0, 1}, {1, 1, 1}}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(fleiss_kappa({{7, 7, 3}, {3, 3, 3}}) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("fleiss kappa: degenerate and invalid matrices") {
  log::ScopedCapture cap;
  const auto rep = agreement_report({{4, 4}, {4, 4}});
  CHECK(rep.fleiss_kappa == 1.0);
  CHECK(rep.degenerate);
  CHECK(cap.warnings().size() == 1);
  CHECK_THROWS_AS(fleiss_kappa({{1, 2}}), ConfigError);
  CHECK_THROWS_AS(fleiss_kappa({{1}, {2}}), ConfigError);
  CHECK_THROWS_AS(fleiss_kappa({{1, 2}, {1}}), ConfigError);
}

TEST_CASE("line-level ratings use each annotator's most severe category") {
  const std::vector spans = {span("a", 0, 1, S), span("a", 1, 2, H), span("b", 0, 1, S)};
  const std::vector<std::string> ann = {"a", "b", "c"};
  const std::vector<std::pair<std::string, int>> lines = {{"m", 0}, {"m", 1}};
  const auto r = line_level_ratings(spans, ann, lines);
  CHECK(r == RatingMatrix{{label_of(H), label_of(S), kNonToxicLabel}, {kNonToxicLabel, kNonToxicLabel, kNonToxicLabel}});
}

TEST_CASE("simulated annotators: clean annotators reproduce gold, noisy ones give kappa in (0, 1)") {
  auto cfg = SynthConfig::defaults();
  cfg.n_matches = 40;
  const Corpus corpus = generate_synthetic_corpus(cfg);

  AnnotatorSimConfig clean;
  const auto spans = simulate_annotators(corpus, clean);
  CHECK(aggregate_corpus(corpus.matches, spans) == corpus.gold);

  AnnotatorSimConfig noisy;
  noisy.noise = 0.2;
  noisy.false_positive_rate = 0.02;
  const auto nspans = simulate_annotators(corpus, noisy);
  std::vector<std::string> ann = {"a0", "a1", "a2"};
  std::vector<std::pair<std::string, int>> lines;
  for (const auto &m : corpus.matches)
    for (const auto &l : m.lines) lines.emplace_back(m.match_id, l.line_index);
  const double k = fleiss_kappa(line_level_ratings(nspans, ann, lines));
  CHECK(k > 0.0);
  CHECK(k < 1.0);
}

TEST_CASE("annotations round-trip through JSONL") {
  testing::TempDir dir("ann");
  const std::vector spans = {span("a", 0, 3, S), span("b", 1, 2, H)};
  save_annotations(dir / "a.jsonl", spans);
  CHECK(load_annotations(dir / "a.jsonl") == spans);
}
