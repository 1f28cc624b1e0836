#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "toxbuster/checkpoint.hpp"
#include "toxbuster/corpus.hpp"
#include "toxbuster/train.hpp"

namespace toxbuster {

/// Everything produced by training one seed on one corpus.
struct RunResult {
  std::uint64_t seed = 0;
  Parameters<float> params;
  Vocabulary vocab;
  ContextOptions context;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  SeedReport test;
  std::vector<OperatingPoint> calibration; // on the validation split
};

/// Splits by `seed`, builds the vocabulary on the train split, trains and
/// evaluates. Parameter init uses `seed` too, so arms sharing a seed share splits
/// and initial weights.
RunResult run_seed(const Corpus &corpus, EncoderConfig model, const ContextOptions &context, const TrainConfig &train,
                   std::uint64_t seed, const EpochCallback &on_epoch = {});

enum class MetadataKind { None, Inline, Segmentation };

struct MetadataFields {
  bool team = false;
  bool chat_type = false;
  bool player = false;
  bool operator==(const MetadataFields &) const = default;
};

/// One ablation arm: context mode plus how metadata reaches the model.
struct Arm {
  std::optional<ChatMode> mode; // nullopt: no context
  MetadataKind kind = MetadataKind::None;
  MetadataFields fields;

  /// e.g. "nocontext", "global", "global+inline:player", "global+seg:full".
  std::string name() const;
  bool operator==(const Arm &) const = default;
};

Arm parse_arm(std::string_view s); // throws ConfigError
std::vector<Arm> parse_arms(std::string_view comma_separated);
/// Sets context mode, inline fields and metadata tables for the arm.
void apply_arm(const Arm &arm, EncoderConfig &model, ContextOptions &context);

struct ArmResult {
  Arm arm;
  EvaluationReport report;
};

struct AblationReport {
  std::vector<ArmResult> arms;
  /// Keyword filter scored on each seed's test split, when rules were given.
  std::optional<EvaluationReport> keyword;
};

/// Trains every arm on every seed with identical splits and init seeds. Arms and
/// seeds run as up to `jobs` concurrent jobs; results are assembled in arm order.
AblationReport run_ablation(const Corpus &corpus, const std::vector<Arm> &arms, const EncoderConfig &model,
                            const TrainConfig &train, int jobs = 1, const KeywordFilter *keywords = nullptr);

nlohmann::json to_json(const AblationReport &r);
/// Summary table: arm, weighted precision, recall and F1 (mean ± std, percent).
void write_ablation_table(const std::filesystem::path &csv, const AblationReport &r);

struct TransferConfig {
  std::vector<std::size_t> n_grid = {0, 100, 500, 1000, 5000};
  std::size_t extra_vocab = 2048; // whole words of game B added to game A's vocabulary
};

void to_json(nlohmann::json &j, const TransferConfig &c);
void from_json(const nlohmann::json &j, TransferConfig &c);

struct TransferPoint {
  std::size_t n_requested = 0;
  std::size_t n_used = 0;
  SeedReport test;
};

struct TransferReport {
  std::uint64_t seed = 0;
  std::vector<TransferPoint> finetune;
  std::size_t scratch_lines = 0;
  SeedReport scratch; // game-B-only model trained on the largest n
};

/// Fine-tunes `source` on growing prefixes of game B's training lines and
/// evaluates on game B's test split; n = 0 is zero-shot. Requests beyond the
/// available lines are clamped with a warning.
TransferReport transfer_finetune(const Checkpoint &source, const Corpus &target, const TransferConfig &cfg,
                                 const TrainConfig &train, std::uint64_t seed);

nlohmann::json to_json(const TransferReport &r);

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_jobs(std::size_t n, int jobs, const std::function<void(std::size_t)> &fn);

} // namespace toxbuster
