#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "toxbuster/category.hpp"
#include "toxbuster/corpus.hpp"

namespace toxbuster {

struct AnnotatedSpan {
  std::string annotator_id;
  std::string match_id;
  int line_index = 0;
  int word_start = 0;
  int word_end = 0; // exclusive
  ToxicCategory category = ToxicCategory::Spam;

  bool operator==(const AnnotatedSpan &) const = default;
};

struct AggregatedLabel {
  std::string match_id;
  int line_index = 0;
  LineLabels words;

  bool operator==(const AggregatedLabel &) const = default;
};

struct AgreementReport {
  double fleiss_kappa = 0.0;
  std::size_t n_items = 0;
  std::size_t n_raters = 0;
  std::size_t n_categories = 0;
  bool degenerate = false;
};

/// Aggregates several annotators' spans on one line into per-word gold labels.
///
/// Spans are clustered as connected components of the relation "word ranges
/// overlap and annotators differ". A cluster backed by at least `quorum`
/// distinct annotators labels the intersection of its member ranges with the
/// plurality category (one vote per annotator: their most severe category in
/// the cluster); ties resolve to the most severe tied category. Everything else
/// is NonToxic. Throws IntegrityError on out-of-bounds spans, spans from another
/// line, or non-toxic span categories; ConfigError on quorum outside {2, 3}.
AggregatedLabel aggregate_spans(std::span<const AnnotatedSpan> spans, std::size_t word_count, int quorum = 3,
                                const SeverityOrder &order = {});

/// items x raters matrix of category codes (any integers).
using RatingMatrix = std::vector<std::vector<int>>;

/// Fleiss' kappa. Requires >= 2 items, >= 2 raters and a rectangular matrix
/// (ConfigError otherwise). When expected agreement is 1 (a single category used
/// everywhere) returns 1 and logs a degeneracy warning.
double fleiss_kappa(const RatingMatrix &ratings);
AgreementReport agreement_report(const RatingMatrix &ratings);

/// Line-level rating per annotator: their most severe category on the line,
/// NonToxic when they marked nothing. Rows follow `lines`, columns `annotators`.
RatingMatrix line_level_ratings(std::span<const AnnotatedSpan> spans, std::span<const std::string> annotators,
                                std::span<const std::pair<std::string, int>> lines,
                                const SeverityOrder &order = {});

/// Aggregates every line of `matches` (lines without spans become NonToxic).
GoldLabels aggregate_corpus(const std::vector<Match> &matches, std::span<const AnnotatedSpan> spans, int quorum = 3,
                            const SeverityOrder &order = {});

struct AnnotatorSimConfig {
  int n_annotators = 3;
  /// Per-annotator, per-gold-span probability of a corrupted annotation
  /// (dropped, miscategorised, or boundary-shifted).
  double noise = 0.0;
  /// Per-annotator, per-clean-line probability of a spurious span.
  double false_positive_rate = 0.0;
  std::uint64_t seed = 7;
};

/// Simulates independent annotators over gold labels: each maximal run of
/// equal toxic labels is a gold span that every annotator marks, up to noise.
std::vector<AnnotatedSpan> simulate_annotators(const Corpus &corpus, const AnnotatorSimConfig &cfg);

std::vector<AnnotatedSpan> load_annotations(const std::filesystem::path &path);
void save_annotations(const std::filesystem::path &path, std::span<const AnnotatedSpan> spans);

} // namespace toxbuster
