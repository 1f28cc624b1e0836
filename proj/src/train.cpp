#include "toxbuster/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <cstdio>

#include <omp.h>

#include "toxbuster/errors.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/optimizer.hpp"
#include "toxbuster/rng.hpp"

namespace toxbuster {

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  double sum = 0.0;
  for (double f : split) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

void to_json(nlohmann::json &j, const TrainConfig &c) {
  j = {{"lr", c.lr},
       {"warmup_ratio", c.warmup_ratio},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"batch_size", c.batch_size},
       {"weight_decay", c.weight_decay},
       {"split", c.split},
       {"seeds", c.seeds},
       {"vocab_size", c.vocab_size}};
}

void from_json(const nlohmann::json &j, TrainConfig &c) {
  auto opt = [&](const char *k, auto &field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  opt("lr", c.lr);
  opt("warmup_ratio", c.warmup_ratio);
  opt("max_epochs", c.max_epochs);
  opt("patience", c.patience);
  opt("batch_size", c.batch_size);
  opt("weight_decay", c.weight_decay);
  opt("split", c.split);
  opt("seeds", c.seeds);
  opt("vocab_size", c.vocab_size);
}

// ---------------------------------------------------------------- data

DatasetSplit split_dataset(const std::vector<Match> &matches, std::uint64_t seed, std::array<double, 3> fractions) {
  if (matches.size() < 3)
    throw ConfigError("splitting needs at least 3 matches, got " + std::to_string(matches.size()));
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5b1));
  rng.shuffle(order);

  std::array<std::vector<Match> *, 3> parts;
  DatasetSplit out;
  parts = {&out.train, &out.val, &out.test};
  std::array<double, 3> assigned{};
  double total = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Match &m = matches[order[k]];
    const auto lines = static_cast<double>(m.lines.size());
    total += lines;
    std::size_t target = k;
    if (k >= 3) {
      target = 0;
      double best = fractions[0] * total - assigned[0];
      for (std::size_t s = 1; s < 3; ++s) {
        const double deficit = fractions[s] * total - assigned[s];
        if (deficit > best) {
          best = deficit;
          target = s;
        }
      }
    }
    assigned[target] += lines;
    parts[target]->push_back(m);
  }
  return out;
}

std::vector<Example> build_examples(const std::vector<Match> &matches, const GoldLabels &gold, const Vocabulary &vocab,
                                    const ContextOptions &context, std::size_t max_len) {
  std::vector<std::pair<const Match *, std::size_t>> jobs;
  for (const auto &m : matches)
    for (std::size_t i = 0; i < m.lines.size(); ++i) jobs.emplace_back(&m, i);
  std::vector<Example> out(jobs.size());
  std::exception_ptr failure;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(jobs.size()); ++k) {
    try {
      const auto [m, i] = jobs[static_cast<std::size_t>(k)];
      const ChatLine &line = m->lines[i];
      const LineLabels *labels = gold.find(m->match_id, line.line_index);
      auto seq = assemble_sequence(*m, i, labels, context);
      out[static_cast<std::size_t>(k)] = {m->match_id, line.line_index, tokenize_aligned(seq, vocab, max_len)};
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------- training

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double score) {
  ++epoch_;
  improved_ = best_epoch_ == 0 || score > best_;
  if (improved_) {
    best_ = score;
    best_epoch_ = epoch_;
  }
  return epoch_ - best_epoch_ >= patience_;
}

namespace {

double validation_f1(const Parameters<float> &params, const std::vector<Example> &val) {
  const Predictions preds = predict(params, val);
  std::vector<int> gold, pred;
  for (const auto &p : preds) {
    gold.insert(gold.end(), p.gold.begin(), p.gold.end());
    pred.insert(pred.end(), p.predicted.begin(), p.predicted.end());
  }
  return classification_metrics(gold, pred, static_cast<std::size_t>(params.config.n_labels)).weighted_f1;
}

} // namespace

TrainResult train_model(Parameters<float> init, const TrainConfig &cfg, const std::vector<Example> &train,
                        const std::vector<Example> &val, std::uint64_t seed, const EpochCallback &on_epoch) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  const ClassificationMode mode = init.config.mode;
  Parameters<float> params = std::move(init);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (train.size() + batch - 1) / batch;
  const std::size_t total_steps = batches * static_cast<std::size_t>(cfg.max_epochs);

  AdamW opt(*params.layout, AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<Gradients<float>> slots(std::min(batch, train.size()), Gradients<float>(params.layout));
  Gradients<float> total(params.layout);
  std::vector<double> slot_loss(slots.size());
  EarlyStopping stopper(cfg.patience);

  TrainResult result;
  result.params = params;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t epoch_labeled = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * batch, end = std::min(train.size(), begin + batch);
      const std::size_t n = end - begin;
      std::vector<std::vector<int>> labels(n);
      std::size_t labeled = 0;
      for (std::size_t s = 0; s < n; ++s) {
        labels[s] = target_labels(train[order[begin + s]].input, mode);
        labeled += static_cast<std::size_t>(
            std::count_if(labels[s].begin(), labels[s].end(), [](int l) { return l != kIgnoreLabel; }));
      }
      const float scale = labeled ? 1.0f / static_cast<float>(labeled) : 0.0f;

      std::exception_ptr failure;
      std::mutex mu;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
        const auto s = static_cast<std::size_t>(si);
        try {
          const Example &ex = train[order[begin + s]];
          ForwardOptions fo{true, mix_seed(mix_seed(seed, step), s)};
          auto fwd = forward(ex.input, params, fo);
          slots[s].clear();
          slot_loss[s] = 0.0;
          const std::span<const int> lab(labels[s]);
          std::size_t count = 0;
          for (int l : lab) count += l != kIgnoreLabel;
          if (count) slot_loss[s] = static_cast<double>(cross_entropy(fwd.logits, lab)) * static_cast<double>(count);
          backward(fwd, ex.input, lab, params, scale, slots[s]);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) {
        try {
          std::rethrow_exception(failure);
        } catch (const NumericError &e) {
          throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
        }
      }

      total.clear();
      double batch_loss = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        total.accumulate(slots[s]);
        batch_loss += slot_loss[s];
      }
      if (!std::isfinite(batch_loss)) throw NumericError("training loss became non-finite at step " + std::to_string(step));
      epoch_loss += batch_loss;
      epoch_labeled += labeled;
      opt.step(params, total, scheduled_lr(step, total_steps, cfg.warmup_ratio, cfg.lr));
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_labeled ? epoch_loss / static_cast<double>(epoch_labeled) : 0.0;
    rec.val_weighted_f1 = val.empty() ? 0.0 : validation_f1(params, val);
    rec.lr = scheduled_lr(step, total_steps, cfg.warmup_ratio, cfg.lr);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.update(rec.val_weighted_f1);
    if (stopper.improved()) result.params = params;
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_weighted_f1 = stopper.best();
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------- prediction

ExamplePrediction predict_one(const Parameters<float> &params, const EncoderInput &input) {
  const auto fwd = forward(input, params);
  const Matrix<float> probs = probabilities(fwd.logits);
  const auto labels = target_labels(input, params.config.mode);
  ExamplePrediction p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    const auto row = probs.row(i);
    std::array<double, kNumLabels> pr{};
    for (std::size_t c = 0; c < row.size() && c < pr.size(); ++c) pr[c] = row[c];
    const int arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    const double score = 1.0 - static_cast<double>(row[static_cast<std::size_t>(kNonToxicLabel)]);
    p.gold.push_back(labels[i]);
    p.predicted.push_back(arg);
    p.toxic_score.push_back(score);
    p.probs.push_back(pr);
    p.line_score = std::max(p.line_score, score);
    p.line_gold = p.line_gold || labels[i] != kNonToxicLabel;
    p.line_predicted = p.line_predicted || arg != kNonToxicLabel;
  }
  return p;
}

Predictions predict(const Parameters<float> &params, const std::vector<Example> &examples) {
  Predictions out(examples.size());
  std::exception_ptr failure;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(examples.size()); ++k) {
    try {
      const auto &ex = examples[static_cast<std::size_t>(k)];
      auto p = predict_one(params, ex.input);
      p.match_id = ex.match_id;
      p.line_index = ex.line_index;
      out[static_cast<std::size_t>(k)] = std::move(p);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Flat {
  std::vector<int> gold, predicted;
  std::vector<double> scores;
  std::vector<char> toxic;
  std::vector<int> categories;
  std::vector<double> line_scores;
  std::vector<char> line_gold, line_predicted;
};

Flat flatten(const Predictions &preds) {
  Flat f;
  for (const auto &p : preds) {
    for (std::size_t i = 0; i < p.gold.size(); ++i) {
      f.gold.push_back(p.gold[i]);
      f.predicted.push_back(p.predicted[i]);
      f.scores.push_back(p.toxic_score[i]);
      f.toxic.push_back(p.gold[i] != kNonToxicLabel);
      f.categories.push_back(p.gold[i] == kNonToxicLabel ? -1 : p.gold[i]);
    }
    f.line_scores.push_back(p.line_score);
    f.line_gold.push_back(p.line_gold);
    f.line_predicted.push_back(p.line_predicted);
  }
  return f;
}

} // namespace

SeedReport evaluate_predictions(const Predictions &preds, std::span<const double> levels) {
  if (preds.empty()) throw ConfigError("cannot evaluate an empty test set");
  const Flat f = flatten(preds);
  SeedReport r;
  r.token = classification_metrics(f.gold, f.predicted);
  std::vector<char> pred_toxic(f.predicted.size());
  for (std::size_t i = 0; i < f.predicted.size(); ++i) pred_toxic[i] = f.predicted[i] != kNonToxicLabel;
  r.token_binary = binary_metrics(f.toxic, pred_toxic);
  r.line_binary = binary_metrics(f.line_gold, f.line_predicted);
  r.average_precision = average_precision(f.scores, f.toxic);
  r.curve = pr_curve(f.scores, f.toxic);
  if (r.curve.degenerate) log::warn("precision-recall curve is degenerate: test labels contain a single class");
  r.operating_points = operating_points(f.scores, f.toxic, levels, f.line_scores, f.categories);
  // One-vs-rest per category on the category's own probability.
  for (int c = 0; c < kNumToxicCategories; ++c) {
    std::vector<double> s;
    std::vector<char> l;
    for (const auto &p : preds) {
      for (std::size_t i = 0; i < p.gold.size(); ++i) {
        s.push_back(p.probs[i][static_cast<std::size_t>(c)]);
        l.push_back(p.gold[i] == c);
      }
    }
    r.category_ap[static_cast<std::size_t>(c)] = average_precision(s, l);
  }
  return r;
}

std::vector<OperatingPoint> calibrate(const Predictions &preds, std::span<const double> levels) {
  const Flat f = flatten(preds);
  return operating_points(f.scores, f.toxic, levels, f.line_scores, f.categories);
}

EvaluationReport aggregate_reports(std::vector<SeedReport> seeds) {
  EvaluationReport r;
  r.seeds = std::move(seeds);
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto &s : r.seeds) v.push_back(get(s));
    return mean_std(v);
  };
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    r.precision[c] = collect([&](const SeedReport &s) { return s.token.per_class[c].precision; });
    r.recall[c] = collect([&](const SeedReport &s) { return s.token.per_class[c].recall; });
    r.f1[c] = collect([&](const SeedReport &s) { return s.token.per_class[c].f1; });
  }
  r.weighted_precision = collect([](const SeedReport &s) { return s.token.weighted_precision; });
  r.weighted_recall = collect([](const SeedReport &s) { return s.token.weighted_recall; });
  r.weighted_f1 = collect([](const SeedReport &s) { return s.token.weighted_f1; });
  r.token_binary_f1 = collect([](const SeedReport &s) { return s.token_binary.f1; });
  r.token_binary_precision = collect([](const SeedReport &s) { return s.token_binary.precision; });
  r.token_binary_recall = collect([](const SeedReport &s) { return s.token_binary.recall; });
  r.line_binary_f1 = collect([](const SeedReport &s) { return s.line_binary.f1; });
  r.line_binary_precision = collect([](const SeedReport &s) { return s.line_binary.precision; });
  r.line_binary_recall = collect([](const SeedReport &s) { return s.line_binary.recall; });
  r.average_precision = collect([](const SeedReport &s) { return s.average_precision.value_or(0.0); });
  return r;
}

nlohmann::json to_json(const SeedReport &r, bool include_curve) {
  nlohmann::json per = nlohmann::json::object();
  for (int c = 0; c < kNumLabels; ++c) per[std::string(to_string(category_of(c)))] = r.token.per_class[static_cast<std::size_t>(c)];
  nlohmann::json cat_ap = nlohmann::json::object();
  for (int c = 0; c < kNumToxicCategories; ++c) {
    const auto &v = r.category_ap[static_cast<std::size_t>(c)];
    cat_ap[std::string(to_string(category_of(c)))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  nlohmann::json j = {{"seed", r.seed},
                      {"per_category", per},
                      {"weighted", {{"precision", r.token.weighted_precision},
                                    {"recall", r.token.weighted_recall},
                                    {"f1", r.token.weighted_f1}}},
                      {"macro_f1", r.token.macro_f1},
                      {"accuracy", r.token.accuracy},
                      {"token_binary", r.token_binary},
                      {"line_binary", r.line_binary},
                      {"average_precision", r.average_precision ? nlohmann::json(*r.average_precision) : nlohmann::json(nullptr)},
                      {"category_average_precision", cat_ap},
                      {"operating_points", r.operating_points},
                      {"pr_curve_degenerate", r.curve.degenerate}};
  if (include_curve) {
    auto pts = [](const std::vector<PrPoint> &v) {
      auto a = nlohmann::json::array();
      for (const auto &p : v) a.push_back({p.threshold, p.precision, p.recall});
      return a;
    };
    j["pr_curve"] = {{"columns", {"threshold", "precision", "recall"}},
                     {"raw", pts(r.curve.raw)},
                     {"interpolated", pts(r.curve.interpolated)}};
  }
  return j;
}

nlohmann::json to_json(const EvaluationReport &r) {
  nlohmann::json per = nlohmann::json::object();
  for (int c = 0; c < kNumLabels; ++c) {
    const auto k = static_cast<std::size_t>(c);
    per[std::string(to_string(category_of(c)))] = {{"precision", r.precision[k]}, {"recall", r.recall[k]}, {"f1", r.f1[k]}};
  }
  auto seeds = nlohmann::json::array();
  for (const auto &s : r.seeds) seeds.push_back(to_json(s, false));
  return {{"n_seeds", r.seeds.size()},
          {"per_category", per},
          {"weighted", {{"precision", r.weighted_precision}, {"recall", r.weighted_recall}, {"f1", r.weighted_f1}}},
          {"token_binary", {{"precision", r.token_binary_precision}, {"recall", r.token_binary_recall}, {"f1", r.token_binary_f1}}},
          {"line_binary", {{"precision", r.line_binary_precision}, {"recall", r.line_binary_recall}, {"f1", r.line_binary_f1}}},
          {"average_precision", r.average_precision},
          {"seeds", seeds}};
}

namespace {

std::ofstream open_report(const std::filesystem::path &p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.precision(10);
  return out;
}

std::string pm(const MeanStd &m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

} // namespace

void write_report(const std::filesystem::path &dir, const EvaluationReport &r) {
  std::filesystem::create_directories(dir);
  open_report(dir / "report.json") << to_json(r).dump(2) << '\n';
  {
    auto out = open_report(dir / "per_category.csv");
    out << "category,precision,recall,f1\n";
    for (int c = 0; c < kNumLabels; ++c) {
      const auto k = static_cast<std::size_t>(c);
      out << display_name(category_of(c)) << ",\"" << pm(r.precision[k]) << "\",\"" << pm(r.recall[k]) << "\",\""
          << pm(r.f1[k]) << "\"\n";
    }
    out << "Weighted,\"" << pm(r.weighted_precision) << "\",\"" << pm(r.weighted_recall) << "\",\"" << pm(r.weighted_f1)
        << "\"\n";
  }
  {
    auto out = open_report(dir / "binary.csv");
    out << "level,precision,recall,f1\n";
    out << "token,\"" << pm(r.token_binary_precision) << "\",\"" << pm(r.token_binary_recall) << "\",\""
        << pm(r.token_binary_f1) << "\"\n";
    out << "line,\"" << pm(r.line_binary_precision) << "\",\"" << pm(r.line_binary_recall) << "\",\""
        << pm(r.line_binary_f1) << "\"\n";
  }
  for (const auto &s : r.seeds) {
    auto out = open_report(dir / ("pr_curve_seed" + std::to_string(s.seed) + ".csv"));
    out << "kind,threshold,precision,recall\n";
    for (const auto &p : s.curve.raw) out << "raw," << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
    for (const auto &p : s.curve.interpolated)
      out << "interpolated," << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  }
}

// ---------------------------------------------------------------- keyword baseline

KeywordFilter::KeywordFilter(std::vector<KeywordRule> rules, const SeverityOrder &order)
    : rules_(std::move(rules)), order_(order) {
  for (const auto &r : rules_) {
    if (!is_toxic(r.category)) throw ConfigError("keyword rule '" + r.pattern + "' maps to NonToxic");
    try {
      compiled_.emplace_back(r.pattern, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    } catch (const std::regex_error &e) {
      throw ConfigError("invalid keyword pattern '" + r.pattern + "': " + e.what());
    }
  }
}

LineLabels KeywordFilter::predict_words(std::string_view text) const {
  LineLabels out;
  for (auto w : split_words(text)) {
    ToxicCategory c = ToxicCategory::NonToxic;
    for (std::size_t i = 0; i < compiled_.size(); ++i) {
      if (std::regex_match(w.begin(), w.end(), compiled_[i])) c = order_.more_severe(c, rules_[i].category);
    }
    out.push_back(c);
  }
  return out;
}

bool KeywordFilter::flags(std::string_view text) const {
  const auto words = predict_words(text);
  return std::any_of(words.begin(), words.end(), [](ToxicCategory c) { return is_toxic(c); });
}

std::vector<KeywordRule> lexicon_rules(const std::array<std::vector<std::string>, kNumToxicCategories> &lexicons) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\/])");
  std::vector<KeywordRule> rules;
  for (int c = 0; c < kNumToxicCategories; ++c)
    for (const auto &w : lexicons[static_cast<std::size_t>(c)])
      rules.push_back({std::regex_replace(w, special, R"(\$&)"), category_of(c)});
  return rules;
}

std::vector<KeywordRule> load_keyword_rules(const nlohmann::json &j) {
  std::vector<KeywordRule> rules;
  auto category = [](const std::string &name) {
    const auto c = parse_category(name);
    if (!c || !is_toxic(*c)) throw ConfigError("unknown toxic category '" + name + "' in keyword rules");
    return *c;
  };
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) rules.push_back({it.key(), category(it.value().get<std::string>())});
  } else if (j.is_array()) {
    for (const auto &r : j) rules.push_back({r.at("pattern").get<std::string>(), category(r.at("category").get<std::string>())});
  } else {
    throw ConfigError("keyword rules must be an object or an array");
  }
  return rules;
}

Predictions keyword_predictions(const KeywordFilter &filter, const std::vector<Match> &matches, const GoldLabels &gold) {
  Predictions out;
  for (const auto &m : matches) {
    for (const auto &l : m.lines) {
      ExamplePrediction p;
      p.match_id = m.match_id;
      p.line_index = l.line_index;
      const auto words = filter.predict_words(l.text);
      const LineLabels *g = gold.find(m.match_id, l.line_index);
      for (std::size_t i = 0; i < words.size(); ++i) {
        const int gl = g && i < g->size() ? label_of((*g)[i]) : kNonToxicLabel;
        const int pl = label_of(words[i]);
        std::array<double, kNumLabels> pr{};
        pr[static_cast<std::size_t>(pl)] = 1.0;
        p.gold.push_back(gl);
        p.predicted.push_back(pl);
        p.toxic_score.push_back(is_toxic(words[i]) ? 1.0 : 0.0);
        p.probs.push_back(pr);
        p.line_score = std::max(p.line_score, p.toxic_score.back());
        p.line_gold = p.line_gold || gl != kNonToxicLabel;
        p.line_predicted = p.line_predicted || pl != kNonToxicLabel;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

} // namespace toxbuster
