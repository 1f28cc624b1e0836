#include "toxbuster/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "toxbuster/errors.hpp"

namespace toxbuster {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void require_aligned(std::size_t a, std::size_t b, const char *what) {
  if (a != b) throw ConfigError(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " entries");
}

// Distinct thresholds by descending score with cumulative counts at each.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<std::size_t> tp, fp;
  std::size_t positives = 0;
};

Sweep sweep(std::span<const double> scores, std::span<const char> labels) {
  require_aligned(scores.size(), labels.size(), "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Sweep s;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (std::isnan(scores[i])) throw ConfigError("NaN score in precision-recall input");
    (labels[i] ? tp : fp) += 1;
    if (k + 1 == order.size() || scores[order[k + 1]] != scores[i]) {
      s.thresholds.push_back(scores[i]);
      s.tp.push_back(tp);
      s.fp.push_back(fp);
    }
  }
  s.positives = tp;
  return s;
}

} // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : n_(classes), cells_(classes * classes, 0) {}

void ConfusionMatrix::add(int gold, int predicted, std::size_t count) {
  if (gold < 0 || predicted < 0 || static_cast<std::size_t>(gold) >= n_ || static_cast<std::size_t>(predicted) >= n_)
    throw ConfigError("label outside confusion matrix: gold " + std::to_string(gold) + ", predicted " +
                      std::to_string(predicted));
  cells_[static_cast<std::size_t>(gold) * n_ + static_cast<std::size_t>(predicted)] += count;
}

std::size_t ConfusionMatrix::at(int gold, int predicted) const {
  return cells_.at(static_cast<std::size_t>(gold) * n_ + static_cast<std::size_t>(predicted));
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(cells_.begin(), cells_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::support(int gold) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += cells_[static_cast<std::size_t>(gold) * n_ + p];
  return s;
}

std::size_t ConfusionMatrix::predicted(int label) const {
  std::size_t s = 0;
  for (std::size_t g = 0; g < n_; ++g) s += cells_[g * n_ + static_cast<std::size_t>(label)];
  return s;
}

MetricsSummary summarize(const ConfusionMatrix &cm) {
  MetricsSummary out;
  const std::size_t total = cm.total();
  std::size_t correct = 0;
  double weighted = 0.0, weighted_p = 0.0, weighted_r = 0.0, macro = 0.0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const int k = static_cast<int>(c);
    ClassMetrics m;
    const std::size_t tp = cm.at(k, k);
    correct += tp;
    m.support = cm.support(k);
    m.precision = ratio(tp, cm.predicted(k));
    m.recall = ratio(tp, m.support);
    m.f1 = f1_of(m.precision, m.recall);
    weighted += m.f1 * static_cast<double>(m.support);
    weighted_p += m.precision * static_cast<double>(m.support);
    weighted_r += m.recall * static_cast<double>(m.support);
    macro += m.f1;
    out.per_class.push_back(m);
  }
  const double denom = total == 0 ? 1.0 : static_cast<double>(total);
  out.weighted_f1 = weighted / denom;
  out.weighted_precision = weighted_p / denom;
  out.weighted_recall = weighted_r / denom;
  out.macro_f1 = cm.classes() == 0 ? 0.0 : macro / static_cast<double>(cm.classes());
  out.accuracy = ratio(correct, total);
  return out;
}

MetricsSummary classification_metrics(std::span<const int> gold, std::span<const int> predicted, std::size_t classes) {
  require_aligned(gold.size(), predicted.size(), "gold and predicted labels differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (gold[i] != kIgnoreLabel) cm.add(gold[i], predicted[i]);
  return summarize(cm);
}

BinaryMetrics binary_metrics(std::span<const char> gold, std::span<const char> predicted) {
  require_aligned(gold.size(), predicted.size(), "gold and predicted flags differ in length");
  BinaryMetrics m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] && predicted[i]) ++m.tp;
    else if (!gold[i] && predicted[i]) ++m.fp;
    else if (gold[i] && !predicted[i]) ++m.fn;
    else ++m.tn;
  }
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = f1_of(m.precision, m.recall);
  return m;
}

PrCurve pr_curve(std::span<const double> scores, std::span<const char> labels) {
  const Sweep s = sweep(scores, labels);
  PrCurve c;
  c.positives = s.positives;
  c.total = scores.size();
  c.degenerate = s.positives == 0 || s.positives == scores.size();
  for (std::size_t k = 0; k < s.thresholds.size(); ++k)
    c.raw.push_back({s.thresholds[k], ratio(s.tp[k], s.tp[k] + s.fp[k]), ratio(s.tp[k], s.positives)});
  c.interpolated = c.raw;
  double best = 0.0;
  for (auto it = c.interpolated.rbegin(); it != c.interpolated.rend(); ++it) {
    best = std::max(best, it->precision);
    it->precision = best;
  }
  return c;
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const char> labels) {
  const Sweep s = sweep(scores, labels);
  if (s.positives == 0) return std::nullopt;
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    const double r = ratio(s.tp[k], s.positives);
    ap += (r - prev_recall) * ratio(s.tp[k], s.tp[k] + s.fp[k]);
    prev_recall = r;
  }
  return ap;
}

std::vector<OperatingPoint> operating_points(std::span<const double> scores, std::span<const char> labels,
                                             std::span<const double> levels, std::span<const double> line_scores,
                                             std::span<const int> categories) {
  if (!categories.empty()) require_aligned(categories.size(), scores.size(), "categories and scores differ in length");
  const Sweep s = sweep(scores, labels);
  std::vector<OperatingPoint> out;
  for (double level : levels) {
    OperatingPoint op;
    op.level = level;
    // Thresholds ascend as k descends; the smallest qualifying threshold wins.
    for (std::size_t k = s.thresholds.size(); k-- > 0;) {
      const double p = ratio(s.tp[k], s.tp[k] + s.fp[k]);
      if (s.tp[k] > 0 && p >= level) {
        op.threshold = s.thresholds[k];
        op.precision = p;
        op.recall = ratio(s.tp[k], s.positives);
        break;
      }
    }
    if (op.threshold) {
      const double t = *op.threshold;
      const auto flagged = std::count_if(line_scores.begin(), line_scores.end(), [&](double v) { return v >= t; });
      op.intercept = line_scores.empty() ? 0.0 : static_cast<double>(flagged) / static_cast<double>(line_scores.size());
      if (!categories.empty()) {
        std::array<std::size_t, kNumToxicCategories> hit{}, sup{};
        for (std::size_t i = 0; i < scores.size(); ++i) {
          const int c = categories[i];
          if (c < 0 || c >= kNumToxicCategories) continue;
          ++sup[static_cast<std::size_t>(c)];
          if (scores[i] >= t) ++hit[static_cast<std::size_t>(c)];
        }
        for (std::size_t c = 0; c < sup.size(); ++c)
          if (sup[c] > 0) op.category_recall[c] = ratio(hit[c], sup[c]);
      }
    }
    out.push_back(op);
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

KpiReport kpi_report(const std::set<std::string> &universe, const std::set<std::string> &flagged,
                     const std::set<std::string> &chat_reported, const std::set<std::string> &reported) {
  auto require_subset = [&](const std::set<std::string> &s, const char *name) {
    for (const auto &p : s)
      if (!universe.count(p)) throw ConfigError(std::string(name) + " player '" + p + "' is not in the player universe");
  };
  require_subset(flagged, "flagged");
  require_subset(chat_reported, "chat-reported");
  require_subset(reported, "reported");
  auto common = [](const std::set<std::string> &a, const std::set<std::string> &b) {
    std::size_t n = 0;
    for (const auto &x : a) n += b.count(x);
    return n;
  };
  auto pct = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  KpiReport k;
  k.players = universe.size();
  k.flagged = flagged.size();
  k.chat_reported = chat_reported.size();
  k.reported = reported.size();
  k.flagged_and_chat_reported = common(flagged, chat_reported);
  k.flagged_and_reported = common(flagged, reported);
  k.pct_flagged = pct(k.flagged, k.players);
  k.pct_flagged_chat_reported = pct(k.flagged_and_chat_reported, k.chat_reported);
  k.pct_flagged_reported = pct(k.flagged_and_reported, k.reported);
  return k;
}

KpiReport kpi_report(const std::vector<Match> &matches, const std::set<std::string> &flagged) {
  std::set<std::string> universe, cr, r;
  for (const auto &m : matches) {
    for (const auto &l : m.lines) universe.insert(l.player_id);
    for (const auto &rep : m.reports) {
      universe.insert(rep.reported);
      r.insert(rep.reported);
      if (rep.reason == ReportReason::Chat) cr.insert(rep.reported);
    }
  }
  return kpi_report(universe, flagged, cr, r);
}

namespace {
nlohmann::json opt(const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
} // namespace

void to_json(nlohmann::json &j, const ClassMetrics &m) {
  j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

void to_json(nlohmann::json &j, const BinaryMetrics &m) {
  j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
       {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn}, {"tn", m.tn}};
}

void to_json(nlohmann::json &j, const MeanStd &m) { j = {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

void to_json(nlohmann::json &j, const OperatingPoint &p) {
  nlohmann::json cats = nlohmann::json::object();
  for (int c = 0; c < kNumToxicCategories; ++c)
    cats[std::string(to_string(category_of(c)))] = opt(p.category_recall[static_cast<std::size_t>(c)]);
  j = {{"level", p.level},
       {"attainable", p.threshold.has_value()},
       {"threshold", opt(p.threshold)},
       {"precision", p.precision},
       {"recall", p.recall},
       {"intercept", p.intercept},
       {"category_recall", cats}};
}

void to_json(nlohmann::json &j, const KpiReport &k) {
  j = {{"players", k.players},
       {"flagged", k.flagged},
       {"chat_reported", k.chat_reported},
       {"reported", k.reported},
       {"flagged_and_chat_reported", k.flagged_and_chat_reported},
       {"flagged_and_reported", k.flagged_and_reported},
       {"pct_flagged", opt(k.pct_flagged)},
       {"pct_flagged_chat_reported", opt(k.pct_flagged_chat_reported)},
       {"pct_flagged_reported", opt(k.pct_flagged_reported)}};
}

} // namespace toxbuster
