#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/category.hpp"
#include "toxbuster/chat.hpp"

namespace toxbuster {

/// Rows are gold classes, columns predictions.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t classes = kNumLabels);

  void add(int gold, int predicted, std::size_t count = 1);
  std::size_t at(int gold, int predicted) const;
  std::size_t classes() const { return n_; }
  std::size_t total() const;
  std::size_t support(int gold) const;
  std::size_t predicted(int label) const;

private:
  std::size_t n_;
  std::vector<std::size_t> cells_;
};

/// Precision, recall, F1; 0 whenever the denominator is empty.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsSummary {
  std::vector<ClassMetrics> per_class;
  double weighted_precision = 0.0; // support-weighted means of the per-class values
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

MetricsSummary summarize(const ConfusionMatrix &cm);
/// Builds the confusion matrix from aligned gold/prediction labels, skipping the ignore label in gold.
MetricsSummary classification_metrics(std::span<const int> gold, std::span<const int> predicted,
                                       std::size_t classes = kNumLabels);

struct BinaryMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

BinaryMetrics binary_metrics(std::span<const char> gold, std::span<const char> predicted);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Points for every distinct score (predict positive when score >= threshold),
/// by descending threshold. `interpolated` replaces each precision with the
/// maximum precision at any recall >= its own.
struct PrCurve {
  std::vector<PrPoint> raw;
  std::vector<PrPoint> interpolated;
  std::size_t positives = 0;
  std::size_t total = 0;
  bool degenerate = false; // no positives or no negatives
};

PrCurve pr_curve(std::span<const double> scores, std::span<const char> labels);

/// Step-wise average precision: sum over thresholds of (R_k - R_{k-1}) * P_k.
/// nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const char> labels);

struct OperatingPoint {
  double level = 0.0;
  std::optional<double> threshold; // nullopt when the level is unattainable
  double precision = 0.0;
  double recall = 0.0;
  double intercept = 0.0; // fraction of lines whose line score >= threshold
  std::array<std::optional<double>, kNumToxicCategories> category_recall{};
};

/// For each level, the smallest distinct score whose precision reaches the
/// level. `line_scores` (max token score per line) feed the intercept.
/// `categories` (gold category per item, optional) feed per-category recall.
std::vector<OperatingPoint> operating_points(std::span<const double> scores, std::span<const char> labels,
                                             std::span<const double> levels, std::span<const double> line_scores = {},
                                             std::span<const int> categories = {});

inline constexpr std::array<double, 3> kDefaultLevels = {0.90, 0.99, 0.999};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0; // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

/// Percentages of distinct players; nullopt when the denominator is empty.
struct KpiReport {
  std::size_t players = 0;
  std::size_t flagged = 0;
  std::size_t chat_reported = 0;
  std::size_t reported = 0;
  std::size_t flagged_and_chat_reported = 0;
  std::size_t flagged_and_reported = 0;
  std::optional<double> pct_flagged;
  std::optional<double> pct_flagged_chat_reported;
  std::optional<double> pct_flagged_reported;
};

/// %F = |F| / |U|, %F∩CR = |F ∩ CR| / |CR|, %F∩R = |F ∩ R| / |R|.
/// Throws ConfigError when a flagged or reported player is outside the universe.
KpiReport kpi_report(const std::set<std::string> &universe, const std::set<std::string> &flagged,
                     const std::set<std::string> &chat_reported, const std::set<std::string> &reported);
/// Universe and report sets taken from the matches' lines and report records.
KpiReport kpi_report(const std::vector<Match> &matches, const std::set<std::string> &flagged);

void to_json(nlohmann::json &j, const ClassMetrics &m);
void to_json(nlohmann::json &j, const BinaryMetrics &m);
void to_json(nlohmann::json &j, const MeanStd &m);
void to_json(nlohmann::json &j, const OperatingPoint &p);
void to_json(nlohmann::json &j, const KpiReport &k);

} // namespace toxbuster
