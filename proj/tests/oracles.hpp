#pragma once

// Brute-force reference computations used as independent oracles.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace toxbuster::oracle {

struct Prf {
  double p = 0, r = 0, f = 0;
  double support = 0;
};

// Per-class precision/recall/F1 by direct counting, skipping gold == ignore.
inline std::vector<Prf> per_class(const std::vector<int> &gold, const std::vector<int> &pred, int classes,
                                  int ignore = -100) {
  std::vector<Prf> out(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] == ignore) continue;
      const bool g = gold[i] == c, p = pred[i] == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    Prf &m = out[static_cast<std::size_t>(c)];
    m.p = tp + fp > 0 ? tp / (tp + fp) : 0;
    m.r = tp + fn > 0 ? tp / (tp + fn) : 0;
    m.f = m.p + m.r > 0 ? 2 * m.p * m.r / (m.p + m.r) : 0;
    m.support = tp + fn;
  }
  return out;
}

inline Prf weighted(const std::vector<Prf> &pc) {
  Prf w;
  double total = 0;
  for (const auto &m : pc) total += m.support;
  if (total == 0) return w;
  for (const auto &m : pc) {
    w.p += m.p * m.support / total;
    w.r += m.r * m.support / total;
    w.f += m.f * m.support / total;
  }
  return w;
}

// Step-wise AP: for each distinct threshold t (descending), predict score >= t.
inline std::optional<double> average_precision(const std::vector<double> &scores, const std::vector<char> &labels) {
  double positives = 0;
  for (char l : labels) positives += l != 0;
  if (positives == 0) return std::nullopt;
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    const double recall = tp / positives;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// Fleiss' kappa straight from the textbook definition.
inline double fleiss(const std::vector<std::vector<int>> &ratings) {
  const double N = static_cast<double>(ratings.size());
  const double n = static_cast<double>(ratings[0].size());
  std::map<int, double> totals;
  double pbar = 0;
  for (const auto &row : ratings) {
    std::map<int, double> counts;
    for (int c : row) counts[c] += 1;
    double s = 0;
    for (auto [c, k] : counts) {
      s += k * (k - 1);
      totals[c] += k;
    }
    pbar += s / (n * (n - 1));
  }
  pbar /= N;
  double pe = 0;
  for (auto [c, k] : totals) pe += (k / (N * n)) * (k / (N * n));
  if (pe == 1.0) return 1.0;
  return (pbar - pe) / (1 - pe);
}

struct Kpi {
  std::optional<double> f, f_cr, f_r;
};

inline Kpi kpi(const std::set<std::string> &u, const std::set<std::string> &flagged, const std::set<std::string> &cr,
               const std::set<std::string> &r) {
  auto inter = [](const std::set<std::string> &a, const std::set<std::string> &b) {
    std::vector<std::string> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return static_cast<double>(out.size());
  };
  Kpi k;
  if (!u.empty()) k.f = 100.0 * static_cast<double>(flagged.size()) / static_cast<double>(u.size());
  if (!cr.empty()) k.f_cr = 100.0 * inter(flagged, cr) / static_cast<double>(cr.size());
  if (!r.empty()) k.f_r = 100.0 * inter(flagged, r) / static_cast<double>(r.size());
  return k;
}

} // namespace toxbuster::oracle
