#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/context.hpp"
#include "toxbuster/corpus.hpp"
#include "toxbuster/encoder.hpp"
#include "toxbuster/metrics.hpp"
#include "toxbuster/tokenizer.hpp"

namespace toxbuster {

struct TrainConfig {
  double lr = 1e-5;
  double warmup_ratio = 0.05;
  int max_epochs = 100;
  int patience = 5;
  int batch_size = 32;
  double weight_decay = 0.01;
  std::array<double, 3> split = {0.6, 0.2, 0.2};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t vocab_size = kDefaultVocabSize;

  void validate() const; // throws ConfigError
};

void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);

struct DatasetSplit {
  std::vector<Match> train, val, test;
};

/// Match-granular split. Matches are shuffled by `seed`; the first three seed
/// train, val and test, then each match goes to the split with the largest line
/// deficit against its target fraction (ties: train, val, test).
/// Throws ConfigError with fewer than 3 matches.
DatasetSplit split_dataset(const std::vector<Match> &matches, std::uint64_t seed,
                           std::array<double, 3> fractions = {0.6, 0.2, 0.2});

struct Example {
  std::string match_id;
  int line_index = 0;
  EncoderInput input;
};

/// One example per line: assembled context, tokenized to at most `max_len`.
std::vector<Example> build_examples(const std::vector<Match> &matches, const GoldLabels &gold, const Vocabulary &vocab,
                                    const ContextOptions &context, std::size_t max_len);

/// Stops once `patience` consecutive epochs fail to improve on the best score.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience);
  /// Records the score of the next epoch; true when training should stop.
  bool update(double score);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; } // 1-based, 0 before any update
  double best() const { return best_; }
  int epochs() const { return epoch_; }

private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_weighted_f1 = 0.0;
  double lr = 0.0; // at the end of the epoch
};

struct TrainResult {
  Parameters<float> params; // best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_weighted_f1 = 0.0;
  bool early_stopped = false;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord &)>;

/// AdamW with warmup-then-linear-decay over max_epochs * batches_per_epoch
/// steps. Batch gradients are reduced in example order, so results do not
/// depend on the thread count. Throws NumericError (naming the step) when the
/// loss becomes non-finite.
TrainResult train_model(Parameters<float> init, const TrainConfig &cfg, const std::vector<Example> &train,
                        const std::vector<Example> &val, std::uint64_t seed, const EpochCallback &on_epoch = {});

/// Per-example outputs over labeled positions (one position in sentence mode).
struct ExamplePrediction {
  std::string match_id;
  int line_index = 0;
  std::vector<int> gold;
  std::vector<int> predicted;
  std::vector<double> toxic_score; // 1 - P(NonToxic)
  std::vector<std::array<double, kNumLabels>> probs;
  double line_score = 0.0; // max toxic_score, 0 without labeled positions
  bool line_gold = false;      // any gold toxic label
  bool line_predicted = false; // any predicted toxic label
};

using Predictions = std::vector<ExamplePrediction>;

/// Scores each example independently (dropout off); parallel across examples.
Predictions predict(const Parameters<float> &params, const std::vector<Example> &examples);
/// Scores for one input, identical to what `predict` computes for it.
ExamplePrediction predict_one(const Parameters<float> &params, const EncoderInput &input);

struct SeedReport {
  std::uint64_t seed = 0;
  MetricsSummary token;
  BinaryMetrics token_binary;
  BinaryMetrics line_binary;
  std::optional<double> average_precision;
  std::array<std::optional<double>, kNumToxicCategories> category_ap{};
  PrCurve curve;
  std::vector<OperatingPoint> operating_points;
};

SeedReport evaluate_predictions(const Predictions &preds, std::span<const double> levels = kDefaultLevels);

/// Operating points computed on `preds` (the validation split at train time).
std::vector<OperatingPoint> calibrate(const Predictions &preds, std::span<const double> levels = kDefaultLevels);

struct EvaluationReport {
  std::vector<SeedReport> seeds;
  std::array<MeanStd, kNumLabels> precision{}, recall{}, f1{};
  MeanStd weighted_precision, weighted_recall, weighted_f1, token_binary_f1, token_binary_precision, token_binary_recall;
  MeanStd line_binary_f1, line_binary_precision, line_binary_recall;
  MeanStd average_precision;
};

/// Mean and sample std across the given seeds.
EvaluationReport aggregate_reports(std::vector<SeedReport> seeds);

nlohmann::json to_json(const SeedReport &r, bool include_curve = true);
nlohmann::json to_json(const EvaluationReport &r);
/// report.json, per_category.csv, binary.csv and pr_curve_seed<k>.csv under `dir`.
void write_report(const std::filesystem::path &dir, const EvaluationReport &r);

struct KeywordRule {
  std::string pattern; // ECMAScript regex matched against whole words, case-insensitive
  ToxicCategory category = ToxicCategory::Spam;
};

/// Regex keyword filter standing in for a commercial profanity filter.
class KeywordFilter {
public:
  /// Throws ConfigError on an invalid pattern or a non-toxic category.
  explicit KeywordFilter(std::vector<KeywordRule> rules, const SeverityOrder &order = {});

  /// Per-word category (most severe matching rule, NonToxic otherwise).
  LineLabels predict_words(std::string_view text) const;
  bool flags(std::string_view text) const;
  std::size_t size() const { return rules_.size(); }

private:
  std::vector<KeywordRule> rules_;
  std::vector<std::regex> compiled_;
  SeverityOrder order_;
};

/// Literal whole-word rules for every lexicon word.
std::vector<KeywordRule> lexicon_rules(const std::array<std::vector<std::string>, kNumToxicCategories> &lexicons);
std::vector<KeywordRule> load_keyword_rules(const nlohmann::json &j); // {"pattern": "category", ...} or [{...}]

/// Baseline predictions in the same shape as model predictions; scores are 0 or 1.
Predictions keyword_predictions(const KeywordFilter &filter, const std::vector<Match> &matches, const GoldLabels &gold);

} // namespace toxbuster
