#include "toxbuster/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "toxbuster/errors.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/rng.hpp"

namespace toxbuster {
namespace {

constexpr std::uint64_t kInitSalt = 0x1417;

std::string pm(const MeanStd &m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

// Copies rows of shared tokens from `src`; new tokens keep their fresh init.
void transplant_tokens(const Parameters<float> &src, const Vocabulary &src_vocab, Parameters<float> &dst,
                       const Vocabulary &dst_vocab) {
  for (std::size_t t = 0; t < dst.tensors.size(); ++t) {
    if (static_cast<int>(t) == dst.layout->token) {
      const std::size_t d = dst.layout->specs()[t].cols;
      for (std::size_t id = 0; id < dst_vocab.size(); ++id) {
        const int s = src_vocab.id(dst_vocab.token(static_cast<int>(id)));
        if (s < 0) continue;
        std::copy_n(src.at(src.layout->token).begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * d), d,
                    dst.tensors[t].begin() + static_cast<std::ptrdiff_t>(id * d));
      }
    } else {
      dst.tensors[t] = src.tensors[t];
    }
  }
}

} // namespace

void parallel_jobs(std::size_t n, int jobs, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto &t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RunResult run_seed(const Corpus &corpus, EncoderConfig model, const ContextOptions &context, const TrainConfig &train,
                   std::uint64_t seed, const EpochCallback &on_epoch) {
  train.validate();
  const DatasetSplit split = split_dataset(corpus.matches, seed, train.split);
  RunResult r;
  r.seed = seed;
  r.context = context;
  r.vocab = build_vocab(split.train, train.vocab_size);
  model.vocab_size = static_cast<int>(r.vocab.size());
  const auto max_len = static_cast<std::size_t>(model.max_len);
  const auto train_ex = build_examples(split.train, corpus.gold, r.vocab, context, max_len);
  const auto val_ex = build_examples(split.val, corpus.gold, r.vocab, context, max_len);
  const auto test_ex = build_examples(split.test, corpus.gold, r.vocab, context, max_len);

  auto result = train_model(init_parameters<float>(model, mix_seed(seed, kInitSalt)), train, train_ex, val_ex, seed,
                            on_epoch);
  r.params = std::move(result.params);
  r.history = std::move(result.history);
  r.best_epoch = result.best_epoch;
  r.test = evaluate_predictions(predict(r.params, test_ex));
  r.test.seed = seed;
  r.calibration = calibrate(predict(r.params, val_ex));
  return r;
}

// ---------------------------------------------------------------- arms

std::string Arm::name() const {
  std::string s = mode ? std::string(to_string(*mode)) : "nocontext";
  if (kind == MetadataKind::None) return s;
  s += kind == MetadataKind::Inline ? "+inline:" : "+seg:";
  if (fields.team && fields.chat_type && fields.player) return s + "full";
  std::string f;
  if (fields.team) f += "team";
  if (fields.chat_type) f += std::string(f.empty() ? "" : "|") + "chat";
  if (fields.player) f += std::string(f.empty() ? "" : "|") + "player";
  return s + f;
}

Arm parse_arm(std::string_view s) {
  Arm arm;
  const auto plus = s.find('+');
  const std::string mode(s.substr(0, plus));
  if (mode == "nocontext" || mode == "none") {
    arm.mode = std::nullopt;
  } else {
    try {
      arm.mode = parse_chat_mode(mode);
    } catch (const ParseError &) {
      throw ConfigError("unknown arm context '" + mode + "'");
    }
  }
  if (plus == std::string_view::npos) return arm;
  const std::string_view rest = s.substr(plus + 1);
  const auto colon = rest.find(':');
  const std::string kind(rest.substr(0, colon));
  if (kind == "inline") {
    arm.kind = MetadataKind::Inline;
  } else if (kind == "seg" || kind == "segmentation") {
    arm.kind = MetadataKind::Segmentation;
  } else {
    throw ConfigError("unknown metadata kind '" + kind + "' in arm '" + std::string(s) + "'");
  }
  if (colon == std::string_view::npos) throw ConfigError("arm '" + std::string(s) + "' names no metadata field");
  std::string_view fields = rest.substr(colon + 1);
  while (!fields.empty()) {
    const auto bar = fields.find('|');
    const std::string f(fields.substr(0, bar));
    if (f == "team" || f == "teamid") {
      arm.fields.team = true;
    } else if (f == "chat" || f == "chat_type" || f == "chattype") {
      arm.fields.chat_type = true;
    } else if (f == "player" || f == "playerid") {
      arm.fields.player = true;
    } else if (f == "full") {
      arm.fields = {true, true, true};
    } else {
      throw ConfigError("unknown metadata field '" + f + "' in arm '" + std::string(s) + "'");
    }
    if (bar == std::string_view::npos) break;
    fields.remove_prefix(bar + 1);
  }
  return arm;
}

std::vector<Arm> parse_arms(std::string_view list) {
  std::vector<Arm> arms;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto item = trim(list.substr(0, comma));
    if (!item.empty()) arms.push_back(parse_arm(item));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  if (arms.empty()) throw ConfigError("no ablation arms given");
  return arms;
}

void apply_arm(const Arm &arm, EncoderConfig &model, ContextOptions &context) {
  context.mode = arm.mode;
  context.inline_fields = {};
  model.use_team = model.use_chat_type = model.use_player = false;
  if (arm.kind == MetadataKind::Inline) {
    context.inline_fields = {arm.fields.player, arm.fields.team, arm.fields.chat_type};
  } else if (arm.kind == MetadataKind::Segmentation) {
    model.use_team = arm.fields.team;
    model.use_chat_type = arm.fields.chat_type;
    model.use_player = arm.fields.player;
  }
}

AblationReport run_ablation(const Corpus &corpus, const std::vector<Arm> &arms, const EncoderConfig &model,
                            const TrainConfig &train, int jobs, const KeywordFilter *keywords) {
  train.validate();
  const std::size_t n_seeds = train.seeds.size();
  std::vector<SeedReport> results(arms.size() * n_seeds);
  parallel_jobs(results.size(), jobs, [&](std::size_t k) {
    const Arm &arm = arms[k / n_seeds];
    const std::uint64_t seed = train.seeds[k % n_seeds];
    EncoderConfig m = model;
    ContextOptions ctx;
    apply_arm(arm, m, ctx);
    log::info("arm " + arm.name() + " seed " + std::to_string(seed) + ": training");
    results[k] = run_seed(corpus, m, ctx, train, seed).test;
    log::info("arm " + arm.name() + " seed " + std::to_string(seed) + ": weighted F1 " +
              std::to_string(results[k].token.weighted_f1));
  });
  AblationReport report;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::vector<SeedReport> seeds(results.begin() + static_cast<std::ptrdiff_t>(a * n_seeds),
                                  results.begin() + static_cast<std::ptrdiff_t>((a + 1) * n_seeds));
    report.arms.push_back({arms[a], aggregate_reports(std::move(seeds))});
  }
  if (keywords) {
    std::vector<SeedReport> seeds;
    for (const std::uint64_t seed : train.seeds) {
      const DatasetSplit split = split_dataset(corpus.matches, seed, train.split);
      seeds.push_back(evaluate_predictions(keyword_predictions(*keywords, split.test, corpus.gold)));
      seeds.back().seed = seed;
    }
    report.keyword = aggregate_reports(std::move(seeds));
  }
  return report;
}

nlohmann::json to_json(const AblationReport &r) {
  auto arms = nlohmann::json::array();
  for (const auto &a : r.arms) arms.push_back({{"arm", a.arm.name()}, {"report", to_json(a.report)}});
  nlohmann::json j = {{"arms", arms}};
  if (r.keyword) j["keyword_baseline"] = to_json(*r.keyword);
  return j;
}

void write_ablation_table(const std::filesystem::path &csv, const AblationReport &r) {
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "arm,precision,recall,f1,line_f1\n";
  auto row = [&](const std::string &name, const EvaluationReport &e) {
    out << name << ",\"" << pm(e.weighted_precision) << "\",\"" << pm(e.weighted_recall) << "\",\"" << pm(e.weighted_f1)
        << "\",\"" << pm(e.line_binary_f1) << "\"\n";
  };
  for (const auto &a : r.arms) row(a.arm.name(), a.report);
  if (r.keyword) row("keyword", *r.keyword);
}

// ---------------------------------------------------------------- transfer

void to_json(nlohmann::json &j, const TransferConfig &c) { j = {{"n_grid", c.n_grid}, {"extra_vocab", c.extra_vocab}}; }

void from_json(const nlohmann::json &j, TransferConfig &c) {
  if (j.contains("n_grid")) j.at("n_grid").get_to(c.n_grid);
  if (j.contains("extra_vocab")) j.at("extra_vocab").get_to(c.extra_vocab);
}

TransferReport transfer_finetune(const Checkpoint &source, const Corpus &target, const TransferConfig &cfg,
                                 const TrainConfig &train, std::uint64_t seed) {
  train.validate();
  if (cfg.n_grid.empty()) throw ConfigError("transfer n_grid is empty");
  const DatasetSplit split = split_dataset(target.matches, seed, train.split);
  const Vocabulary vocab = extend_vocab(source.vocab, split.train, cfg.extra_vocab);
  EncoderConfig model = source.config;
  model.vocab_size = static_cast<int>(vocab.size());
  Parameters<float> base = init_parameters<float>(model, mix_seed(seed, kInitSalt));
  transplant_tokens(source.params, source.vocab, base, vocab);

  const auto max_len = static_cast<std::size_t>(model.max_len);
  const auto pool = build_examples(split.train, target.gold, vocab, source.context, max_len);
  const auto val_ex = build_examples(split.val, target.gold, vocab, source.context, max_len);
  const auto test_ex = build_examples(split.test, target.gold, vocab, source.context, max_len);

  TransferReport report;
  report.seed = seed;
  std::size_t largest = 0;
  for (std::size_t n : cfg.n_grid) {
    TransferPoint pt;
    pt.n_requested = n;
    pt.n_used = n;
    if (n > pool.size()) {
      log::warn("transfer n=" + std::to_string(n) + " exceeds the " + std::to_string(pool.size()) +
                " available game-B training lines; clamping");
      pt.n_used = pool.size();
    }
    largest = std::max(largest, pt.n_used);
    if (pt.n_used == 0) {
      pt.test = evaluate_predictions(predict(base, test_ex));
    } else {
      const std::vector<Example> subset(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(pt.n_used));
      auto res = train_model(base, train, subset, val_ex, seed);
      pt.test = evaluate_predictions(predict(res.params, test_ex));
    }
    pt.test.seed = seed;
    log::info("transfer n=" + std::to_string(pt.n_used) + ": weighted F1 " + std::to_string(pt.test.token.weighted_f1));
    report.finetune.push_back(std::move(pt));
  }

  // Game-B-only model on the largest prefix, with a vocabulary of its own.
  report.scratch_lines = largest;
  if (largest > 0) {
    const Vocabulary own = build_vocab(split.train, train.vocab_size);
    EncoderConfig m = source.config;
    m.vocab_size = static_cast<int>(own.size());
    auto own_pool = build_examples(split.train, target.gold, own, source.context, max_len);
    own_pool.resize(largest);
    const auto own_val = build_examples(split.val, target.gold, own, source.context, max_len);
    const auto own_test = build_examples(split.test, target.gold, own, source.context, max_len);
    auto res = train_model(init_parameters<float>(m, mix_seed(seed, kInitSalt)), train, own_pool, own_val, seed);
    report.scratch = evaluate_predictions(predict(res.params, own_test));
    report.scratch.seed = seed;
  }
  return report;
}

nlohmann::json to_json(const TransferReport &r) {
  auto pts = nlohmann::json::array();
  for (const auto &p : r.finetune)
    pts.push_back({{"n_requested", p.n_requested}, {"n_used", p.n_used}, {"test", to_json(p.test, false)}});
  return {{"seed", r.seed},
          {"finetune", pts},
          {"scratch_lines", r.scratch_lines},
          {"scratch", r.scratch_lines ? to_json(r.scratch, false) : nlohmann::json(nullptr)}};
}

} // namespace toxbuster
