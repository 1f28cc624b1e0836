#include <atomic>

#include "doctest.h"
#include "support.hpp"
#include "toxbuster/experiments.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/synth.hpp"

using namespace toxbuster;

namespace {
Corpus tiny_corpus(std::uint64_t seed = 1, Game game = Game::Synthetic) {
  auto cfg = SynthConfig::separable();
  cfg.n_matches = 12;
  cfg.lines_per_match = 8;
  cfg.seed = seed;
  cfg.game = game;
  return generate_synthetic_corpus(cfg);
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.lr = 3e-3;
  t.max_epochs = 1;
  t.batch_size = 16;
  t.vocab_size = 200;
  t.seeds = {1, 2};
  return t;
}

EncoderConfig tiny_model() {
  auto m = testing::tiny_config();
  m.max_len = 32;
  return m;
}
} // namespace

TEST_CASE("arms parse, print and round trip") {
  CHECK_FALSE(parse_arm("nocontext").mode.has_value());
  CHECK_FALSE(parse_arm("none").mode.has_value());
  const auto a = parse_arm("global+inline:player");
  CHECK(*a.mode == ChatMode::Global);
  CHECK(a.kind == MetadataKind::Inline);
  CHECK(a.fields == MetadataFields{false, false, true});
  const auto b = parse_arm("team+seg:team|chat");
  CHECK(b.kind == MetadataKind::Segmentation);
  CHECK(b.fields == MetadataFields{true, true, false});
  CHECK(parse_arm("global+segmentation:full").fields == MetadataFields{true, true, true});
  for (const char *s : {"nocontext", "global", "moderator+inline:team|chat|player", "personal+seg:player"})
    CHECK(parse_arm(parse_arm(s).name()) == parse_arm(s));
  CHECK_THROWS_AS(parse_arm("galaxy"), ConfigError);
  CHECK_THROWS_AS(parse_arm("global+inline"), ConfigError);
  CHECK_THROWS_AS(parse_arm("global+inline:shoe"), ConfigError);
  CHECK_THROWS_AS(parse_arm("global+magic:team"), ConfigError);
  const auto arms = parse_arms("nocontext,global,global+seg:full");
  REQUIRE(arms.size() == 3);
  CHECK(arms[2].kind == MetadataKind::Segmentation);
}

TEST_CASE("apply_arm sets exactly one metadata route") {
  EncoderConfig m;
  ContextOptions c;
  apply_arm(parse_arm("global+inline:team|chat"), m, c);
  CHECK(*c.mode == ChatMode::Global);
  CHECK(c.inline_fields == InlineFields{false, true, true});
  CHECK_FALSE(m.use_team);
  CHECK_FALSE(m.use_player);
  apply_arm(parse_arm("nocontext"), m, c);
  CHECK_FALSE(c.mode.has_value());
  CHECK_FALSE(c.inline_fields.any());
  apply_arm(parse_arm("global+seg:player"), m, c);
  CHECK(m.use_player);
  CHECK_FALSE(m.use_team);
  CHECK_FALSE(c.inline_fields.any());
  CHECK(m.use_segment);
}

TEST_CASE("zero-initialised metadata tables leave the untrained model unchanged") {
  const Corpus corpus = tiny_corpus();
  const auto vocab = build_vocab(corpus.matches, 200);
  EncoderConfig plain = tiny_model(), seg = tiny_model();
  ContextOptions ctx_plain, ctx_seg;
  apply_arm(parse_arm("global"), plain, ctx_plain);
  apply_arm(parse_arm("global+seg:full"), seg, ctx_seg);
  plain.vocab_size = seg.vocab_size = static_cast<int>(vocab.size());
  const auto ex = build_examples(corpus.matches, corpus.gold, vocab, ctx_seg, 32);
  const auto a = predict(init_parameters<float>(plain, 4), ex);
  const auto b = predict(init_parameters<float>(seg, 4), ex);
  for (std::size_t i = 0; i < ex.size(); ++i) CHECK(a[i].toxic_score == b[i].toxic_score);
}

TEST_CASE("parallel_jobs runs every index once and rethrows failures") {
  std::vector<std::atomic<int>> hits(37);
  parallel_jobs(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (auto &h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_jobs(10, 3, [](std::size_t i) {
                    if (i == 7) throw ConfigError("seven");
                  }),
                  ConfigError);
}

TEST_CASE("ablation results do not depend on the job count") {
  const Corpus corpus = tiny_corpus();
  const auto arms = parse_arms("nocontext,global+seg:full");
  const auto serial = run_ablation(corpus, arms, tiny_model(), tiny_train(), 1);
  const auto parallel = run_ablation(corpus, arms, tiny_model(), tiny_train(), 3);
  CHECK(to_json(serial).dump() == to_json(parallel).dump());
  REQUIRE(serial.arms.size() == 2);
  CHECK(serial.arms[0].report.seeds.size() == 2);
  testing::TempDir dir("ablate");
  write_ablation_table(dir / "t.csv", serial);
  CHECK(std::filesystem::file_size(dir / "t.csv") > 0);
  CHECK_FALSE(serial.keyword.has_value());
}

TEST_CASE("ablation scores the keyword baseline on each seed's test split") {
  const Corpus corpus = tiny_corpus();
  const KeywordFilter filter(lexicon_rules(SynthConfig::separable().lexicons));
  const auto rep = run_ablation(corpus, parse_arms("nocontext"), tiny_model(), tiny_train(), 1, &filter);
  REQUIRE(rep.keyword.has_value());
  REQUIRE(rep.keyword->seeds.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto split = split_dataset(corpus.matches, tiny_train().seeds[i], tiny_train().split);
    const auto oracle = evaluate_predictions(keyword_predictions(filter, split.test, corpus.gold));
    CHECK(rep.keyword->seeds[i].seed == tiny_train().seeds[i]);
    CHECK(rep.keyword->seeds[i].token.weighted_f1 == oracle.token.weighted_f1);
    CHECK(rep.keyword->seeds[i].token.weighted_f1 == 1.0);
  }
  CHECK(to_json(rep).contains("keyword_baseline"));
}

TEST_CASE("transfer clamps oversized requests and keeps the source vocabulary ids") {
  const Corpus source = tiny_corpus(1);
  const auto run = run_seed(source, tiny_model(), {}, tiny_train(), 1);
  Checkpoint ckpt{run.params.config, run.context, run.vocab, run.params};
  const Corpus target = tiny_corpus(9, Game::FH);
  TransferConfig tc;
  tc.n_grid = {0, 10, 100000};
  tc.extra_vocab = 50;
  log::ScopedCapture cap;
  const auto rep = transfer_finetune(ckpt, target, tc, tiny_train(), 1);
  REQUIRE(rep.finetune.size() == 3);
  CHECK(rep.finetune[0].n_used == 0);
  CHECK(rep.finetune[1].n_used == 10);
  CHECK(rep.finetune[2].n_used < 100000);
  CHECK(rep.finetune[2].n_used > 10);
  CHECK(cap.contains("clamp"));
  CHECK(rep.scratch_lines == rep.finetune[2].n_used);
  const auto j = to_json(rep);
  CHECK(j.contains("scratch"));
}
