#include "toxbuster/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "toxbuster/annotation.hpp"
#include "toxbuster/chat_io.hpp"
#include "toxbuster/checkpoint.hpp"
#include "toxbuster/experiments.hpp"
#include "toxbuster/hash.hpp"
#include "toxbuster/http_api.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/service.hpp"
#include "toxbuster/synth.hpp"
#include "toxbuster/train.hpp"

namespace toxbuster {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  bool force = false;
  int verbose = 0;
  bool quiet = false;
};

json read_json_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// A config section: `key` when present, else the whole document.
json section(const json &cfg, const char *key, bool whole_fallback = false) {
  if (cfg.is_object() && cfg.contains(key)) return cfg.at(key);
  return whole_fallback ? cfg : json::object();
}

// Typos in a config must not silently fall back to defaults.
void reject_unknown_keys(const json &given, const json &known, const std::string &where) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

void check_top_level(const json &cfg) {
  if (cfg.is_null()) return;
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  static const json known = {{"synth", 0}, {"model", 0}, {"context", 0}, {"train", 0}, {"arm", 0}, {"transfer", 0}};
  reject_unknown_keys(cfg, known, "config");
}

template <typename T> T from_section(const json &cfg, const char *key, T value = {}) {
  const json s = section(cfg, key);
  reject_unknown_keys(s, json(value), std::string("config section '") + key + "'");
  if (s.is_object() && !s.empty()) {
    try {
      from_json(s, value);
    } catch (const json::exception &e) {
      throw ConfigError(std::string("config section '") + key + "': " + e.what());
    }
  }
  return value;
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::uint64_t> seed_list(int n) {
  if (n < 1) throw ConfigError("--seeds must be >= 1");
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

// Chat log directory (lines.jsonl + gold.jsonl) or a lines file with a gold
// file (default: gold.jsonl next to it). With need_gold the gold file must exist.
Corpus load_any_corpus(const fs::path &path, const std::string &gold = {}, bool need_gold = true) {
  if (!fs::exists(path)) throw ConfigError("no such corpus: " + path.string());
  const bool dir = fs::is_directory(path);
  const fs::path lines = dir ? path / "lines.jsonl" : path;
  const fs::path g = !gold.empty() ? fs::path(gold) : (dir ? path : path.parent_path()) / "gold.jsonl";
  if (!fs::exists(g)) {
    if (need_gold) throw ConfigError("no gold labels at " + g.string() + "; pass --gold or add gold.jsonl");
    return attach_gold(load_chat_log(lines), GoldLabels{});
  }
  return attach_gold(load_chat_log(lines), load_gold(g));
}

class Run {
public:
  Run(const std::string &name, const Common &common, CLI::App &sub, bool reuse_out = false)
      : name_(name), common_(common) {
    if (!common.config.empty()) config_ = read_json_file(common.config);
    if (name == "train" || name == "ablate" || name == "transfer") check_top_level(config_);
    manifest_ = {{"subcommand", name}, {"options", sub.config_to_str(true, false)}, {"config", config_}};
    run_id_ = to_hex(fnv1a64(manifest_.dump())).substr(0, 12);
    manifest_["run_id"] = run_id_;
    if (!common.out.empty()) {
      out_ = common.out;
    } else {
      const char *home = std::getenv("TOXBUSTER_HOME");
      out_ = fs::path(home && *home ? home : ".") / "runs" / (name + "-" + run_id_);
    }
    if (!reuse_out && fs::exists(out_) && !fs::is_empty(out_) && !common.force) {
      throw ConfigError("output directory " + out_.string() + " is not empty; pass --force to overwrite");
    }
    fs::create_directories(out_);
    write_json(out_ / "manifest.json", manifest_);
    if (!config_.is_null()) write_json(out_ / "config.json", config_);
    log::info(name + " run " + run_id_ + " -> " + out_.string());
  }

  const json &config() const { return config_; }
  const fs::path &out() const { return out_; }

private:
  std::string name_;
  Common common_;
  json config_;
  json manifest_;
  std::string run_id_;
  fs::path out_;
};

void add_common(CLI::App &sub, Common &c, bool with_config = true) {
  if (with_config) sub.add_option("-c,--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub.add_option("-o,--out", c.out, "Output directory (default: $TOXBUSTER_HOME/runs/<cmd>-<run id>)");
  sub.add_flag("--force", c.force, "Allow writing into a non-empty output directory");
  sub.add_flag("-v,--verbose", c.verbose, "More logging");
  sub.add_flag("-q,--quiet", c.quiet, "Only warnings and errors");
}

void apply_verbosity(const Common &c) {
  if (c.quiet) log::set_min_level(log::Level::Warn);
  else if (c.verbose > 0) log::set_min_level(log::Level::Debug);
}

std::string pm(const MeanStd &m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

json history_json(const std::vector<EpochRecord> &h) {
  auto a = json::array();
  for (const auto &e : h)
    a.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_weighted_f1", e.val_weighted_f1}, {"lr", e.lr}});
  return a;
}

volatile std::sig_atomic_t g_stop = 0;
HttpServer *g_server = nullptr;
extern "C" void on_signal(int) {
  g_stop = 1;
  if (g_server) g_server->stop();
}

} // namespace

int run_cli(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args);
}

int run_cli(const std::vector<std::string> &argv_in) {
  CLI::App app{"toxbuster: in-game chat toxicity detection pipeline", "toxbuster"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Common common;

  // gen
  auto *gen = app.add_subcommand("gen", "Generate a synthetic labeled chat corpus");
  add_common(*gen, common);
  std::optional<std::uint64_t> gen_seed;
  std::string preset;
  int annotators = 0;
  double annotator_noise = 0.0;
  gen->add_option("--seed", gen_seed, "Generator seed override");
  gen->add_option("--preset", preset, "default, separable or context_rule (overrides the config preset)");
  gen->add_option("--annotators", annotators, "Also simulate this many annotators' spans");
  gen->add_option("--noise", annotator_noise, "Per-span corruption probability of simulated annotators");

  // aggregate
  auto *agg = app.add_subcommand("aggregate", "Aggregate annotator spans into gold labels");
  add_common(*agg, common, false);
  std::string agg_corpus, agg_annotations;
  int quorum = 3;
  agg->add_option("--corpus", agg_corpus, "Corpus directory or lines file")->required();
  agg->add_option("--annotations", agg_annotations, "Span annotations (JSONL)")->required()->check(CLI::ExistingFile);
  agg->add_option("--quorum", quorum, "Annotators needed for a gold span (2 or 3)");

  // vocab
  auto *voc = app.add_subcommand("vocab", "Build a WordPiece vocabulary");
  add_common(*voc, common, false);
  std::string voc_corpus;
  std::size_t voc_size = kDefaultVocabSize;
  voc->add_option("--corpus", voc_corpus, "Corpus directory or lines file")->required();
  voc->add_option("--size", voc_size, "Vocabulary size");

  // train
  auto *trn = app.add_subcommand("train", "Train one model on a corpus split");
  add_common(*trn, common);
  std::string trn_corpus, trn_arm;
  std::optional<std::uint64_t> trn_seed;
  trn->add_option("--corpus", trn_corpus, "Corpus directory or lines file")->required();
  trn->add_option("--seed", trn_seed, "Split and init seed (default: first configured seed)");
  trn->add_option("--arm", trn_arm, "Context/metadata arm, e.g. global+seg:full");

  // eval
  auto *evl = app.add_subcommand("eval", "Evaluate a checkpoint on labeled chat");
  add_common(*evl, common, false);
  std::string evl_ckpt, evl_test, evl_gold, evl_keywords;
  evl->add_option("--checkpoint", evl_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  evl->add_option("--test", evl_test, "Test corpus directory or lines file")->required();
  evl->add_option("--gold", evl_gold, "Gold labels (default: gold.jsonl beside the test lines)");
  evl->add_option("--keywords", evl_keywords, "Keyword rules for the baseline report")->check(CLI::ExistingFile);

  // ablate
  auto *abl = app.add_subcommand("ablate", "Train and compare context/metadata arms across seeds");
  add_common(*abl, common);
  std::string abl_corpus, abl_arms = "nocontext,personal,team,global,moderator";
  int abl_seeds = 0, jobs = 1;
  abl->add_option("--corpus", abl_corpus, "Corpus directory or lines file")->required();
  abl->add_option("--arms", abl_arms, "Comma-separated arms");
  abl->add_option("--seeds", abl_seeds, "Use seeds 1..N (default: configured seeds)");
  abl->add_option("--jobs", jobs, "Concurrent training jobs");
  std::string abl_keywords;
  abl->add_option("--keywords", abl_keywords, "Keyword rules scored on each seed's test split")
      ->check(CLI::ExistingFile);

  // transfer
  auto *trf = app.add_subcommand("transfer", "Fine-tune a checkpoint on increasing amounts of another game");
  add_common(*trf, common);
  std::string trf_ckpt, trf_corpus;
  std::vector<std::size_t> n_grid;
  int trf_seeds = 0;
  trf->add_option("--checkpoint", trf_ckpt, "Source-game checkpoint")->required()->check(CLI::ExistingFile);
  trf->add_option("--corpus", trf_corpus, "Target-game corpus")->required();
  trf->add_option("--n", n_grid, "Target-game line counts (0: zero-shot)")->delimiter(',');
  trf->add_option("--seeds", trf_seeds, "Use seeds 1..N (default: configured seeds)");
  trf->add_option("--jobs", jobs, "Concurrent seeds");

  // calibrate
  auto *cal = app.add_subcommand("calibrate", "Compute precision operating points for a checkpoint");
  add_common(*cal, common, false);
  std::string cal_ckpt, cal_corpus, cal_gold;
  std::vector<double> levels(kDefaultLevels.begin(), kDefaultLevels.end());
  cal->add_option("--checkpoint", cal_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cal->add_option("--corpus", cal_corpus, "Calibration corpus (a validation split)")->required();
  cal->add_option("--gold", cal_gold, "Gold labels (default: gold.jsonl beside the lines)");
  cal->add_option("--levels", levels, "Precision levels")->delimiter(',');

  // serve
  auto *srv = app.add_subcommand("serve", "Run the streaming moderation service");
  add_common(*srv, common, false);
  std::string srv_ckpt, srv_cal, srv_audit, srv_mode = "global";
  HttpConfig http;
  ServiceConfig svc_cfg;
  srv->add_option("--checkpoint", srv_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  srv->add_option("--calibration", srv_cal, "Calibration JSON")->required()->check(CLI::ExistingFile);
  srv->add_option("--host", http.host, "Bind address");
  srv->add_option("--port", http.port, "Port (0: any free port)");
  srv->add_option("--token", http.api_token, "Static bearer token")->envname("TOXBUSTER_API_TOKEN");
  srv->add_option("--level", svc_cfg.level, "Initial precision operating level");
  srv->add_option("--mode", srv_mode, "Context mode: personal, team, global or moderator");
  srv->add_option("--audit-log", srv_audit, "Audit log path (default: <out>/audit.jsonl)");
  srv->add_option("--max-buffer-lines", svc_cfg.max_buffer_lines, "Hard cap on buffered lines per match");

  // kpi
  auto *kpi = app.add_subcommand("kpi", "Flagged-player KPIs against player reports");
  add_common(*kpi, common, false);
  std::string kpi_corpus, kpi_flags, kpi_ckpt, kpi_cal;
  double kpi_level = 0.90;
  kpi->add_option("--corpus", kpi_corpus, "Corpus directory with lines and reports")->required();
  kpi->add_option("--flags", kpi_flags, "JSON array of flagged player ids")->check(CLI::ExistingFile);
  kpi->add_option("--checkpoint", kpi_ckpt, "Flag players with this model instead")->check(CLI::ExistingFile);
  kpi->add_option("--calibration", kpi_cal, "Calibration JSON for --checkpoint")->check(CLI::ExistingFile);
  kpi->add_option("--level", kpi_level, "Operating level for --checkpoint");

  std::vector<std::string> rev(argv_in.rbegin(), argv_in.rend() - (argv_in.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n\n";
    auto *bad = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << bad->help();
    return kExitConfig;
  }

  apply_verbosity(common);
  try {
    if (gen->parsed()) {
      Run run("gen", common, *gen);
      // A bare synth config is accepted in place of a sectioned one.
      bool sectioned = false;
      for (const char *k : {"model", "context", "train", "arm", "transfer"})
        sectioned = sectioned || (run.config().is_object() && run.config().contains(k));
      json sj = section(run.config(), "synth", !sectioned);
      json known_synth = SynthConfig::defaults();
      known_synth["preset"] = "default";
      reject_unknown_keys(sj, known_synth, "synth config");
      if (!preset.empty()) sj["preset"] = preset;
      SynthConfig cfg = sj.get<SynthConfig>();
      if (gen_seed) cfg.seed = *gen_seed;
      cfg.validate();
      const Corpus corpus = generate_synthetic_corpus(cfg);
      save_corpus(run.out(), corpus);
      write_json(run.out() / "synth.json", json(cfg));
      json rules = json::object();
      for (const auto &r : lexicon_rules(cfg.lexicons)) rules[r.pattern] = to_string(r.category);
      write_json(run.out() / "keywords.json", rules);
      if (annotators > 0) {
        AnnotatorSimConfig sim;
        sim.n_annotators = annotators;
        sim.noise = annotator_noise;
        sim.seed = cfg.seed;
        save_annotations(run.out() / "annotations.jsonl", simulate_annotators(corpus, sim));
      }
      log::info("generated " + std::to_string(corpus.matches.size()) + " matches, " +
                std::to_string(corpus.line_count()) + " lines");
    } else if (agg->parsed()) {
      Run run("aggregate", common, *agg);
      const Corpus corpus = load_any_corpus(agg_corpus, {}, false);
      const auto spans = load_annotations(agg_annotations);
      const GoldLabels gold = aggregate_corpus(corpus.matches, spans, quorum);
      save_gold(run.out() / "gold.jsonl", corpus.matches, gold);
      std::set<std::string> ann;
      for (const auto &s : spans) ann.insert(s.annotator_id);
      std::vector<std::string> annotators_v(ann.begin(), ann.end());
      std::vector<std::pair<std::string, int>> lines;
      for (const auto &m : corpus.matches)
        for (const auto &l : m.lines) lines.emplace_back(m.match_id, l.line_index);
      const auto rep = agreement_report(line_level_ratings(spans, annotators_v, lines));
      write_json(run.out() / "agreement.json", {{"fleiss_kappa", rep.fleiss_kappa},
                                                {"items", rep.n_items},
                                                {"raters", rep.n_raters},
                                                {"categories", rep.n_categories},
                                                {"degenerate", rep.degenerate},
                                                {"quorum", quorum}});
      log::info("Fleiss kappa " + std::to_string(rep.fleiss_kappa));
    } else if (voc->parsed()) {
      Run run("vocab", common, *voc);
      build_vocab(load_any_corpus(voc_corpus, {}, false).matches, voc_size).save(run.out() / "vocab.txt");
    } else if (trn->parsed()) {
      Run run("train", common, *trn);
      EncoderConfig model = from_section<EncoderConfig>(run.config(), "model");
      ContextOptions ctx = from_section<ContextOptions>(run.config(), "context");
      TrainConfig tc = from_section<TrainConfig>(run.config(), "train");
      std::string arm = trn_arm.empty() ? section(run.config(), "arm").is_string() ? run.config().at("arm").get<std::string>() : ""
                                        : trn_arm;
      if (!arm.empty()) apply_arm(parse_arm(arm), model, ctx);
      tc.validate();
      const std::uint64_t seed = trn_seed.value_or(tc.seeds.front());
      const Corpus corpus = load_any_corpus(trn_corpus);
      auto r = run_seed(corpus, model, ctx, tc, seed, [](const EpochRecord &e) {
        log::info("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss) + " val wF1 " +
                  std::to_string(e.val_weighted_f1));
      });
      save_checkpoint(run.out() / "model.ckpt", r.params, r.vocab, r.context);
      save_calibration(run.out() / "calibration.json", r.calibration);
      write_report(run.out() / "report", aggregate_reports({r.test}));
      write_json(run.out() / "history.json", {{"seed", seed}, {"best_epoch", r.best_epoch}, {"epochs", history_json(r.history)}});
      log::info("test weighted F1 " + std::to_string(r.test.token.weighted_f1));
    } else if (evl->parsed()) {
      Run run("eval", common, *evl);
      const Checkpoint ck = load_checkpoint(evl_ckpt);
      const Corpus corpus = load_any_corpus(evl_test, evl_gold);
      const auto ex = build_examples(corpus.matches, corpus.gold, ck.vocab, ck.context,
                                     static_cast<std::size_t>(ck.config.max_len));
      const auto rep = aggregate_reports({evaluate_predictions(predict(ck.params, ex))});
      write_report(run.out(), rep);
      if (!evl_keywords.empty()) {
        const KeywordFilter filter(load_keyword_rules(read_json_file(evl_keywords)));
        write_report(run.out() / "keyword_baseline",
                     aggregate_reports({evaluate_predictions(keyword_predictions(filter, corpus.matches, corpus.gold))}));
      }
      log::info("weighted F1 " + std::to_string(rep.weighted_f1.mean));
    } else if (abl->parsed()) {
      Run run("ablate", common, *abl);
      const EncoderConfig model = from_section<EncoderConfig>(run.config(), "model");
      TrainConfig tc = from_section<TrainConfig>(run.config(), "train");
      if (abl_seeds > 0) tc.seeds = seed_list(abl_seeds);
      const auto arms = parse_arms(abl_arms);
      const Corpus corpus = load_any_corpus(abl_corpus);
      std::optional<KeywordFilter> filter;
      if (!abl_keywords.empty()) filter.emplace(load_keyword_rules(read_json_file(abl_keywords)));
      const auto rep = run_ablation(corpus, arms, model, tc, jobs, filter ? &*filter : nullptr);
      write_ablation_table(run.out() / "ablation.csv", rep);
      write_json(run.out() / "ablation.json", to_json(rep));
      for (const auto &a : rep.arms) write_report(run.out() / a.arm.name(), a.report);
      if (rep.keyword) write_report(run.out() / "keyword_baseline", *rep.keyword);
    } else if (trf->parsed()) {
      Run run("transfer", common, *trf);
      TrainConfig tc = from_section<TrainConfig>(run.config(), "train");
      TransferConfig xc = from_section<TransferConfig>(run.config(), "transfer");
      if (!n_grid.empty()) xc.n_grid = n_grid;
      if (trf_seeds > 0) tc.seeds = seed_list(trf_seeds);
      const Checkpoint source = load_checkpoint(trf_ckpt);
      const Corpus corpus = load_any_corpus(trf_corpus);
      std::vector<TransferReport> reps(tc.seeds.size());
      parallel_jobs(reps.size(), jobs, [&](std::size_t k) {
        reps[k] = transfer_finetune(source, corpus, xc, tc, tc.seeds[k]);
      });
      auto arr = json::array();
      for (const auto &r : reps) arr.push_back(to_json(r));
      write_json(run.out() / "transfer.json", {{"seeds", arr}});
      std::ofstream csv(run.out() / "transfer.csv", std::ios::binary);
      csv << "arm,n,weighted_f1,line_f1\n";
      for (std::size_t i = 0; i < xc.n_grid.size(); ++i) {
        std::vector<double> wf, lf;
        for (const auto &r : reps) {
          wf.push_back(r.finetune[i].test.token.weighted_f1);
          lf.push_back(r.finetune[i].test.line_binary.f1);
        }
        csv << "finetune," << reps.front().finetune[i].n_used << ",\"" << pm(mean_std(wf)) << "\",\""
            << pm(mean_std(lf)) << "\"\n";
      }
      if (reps.front().scratch_lines > 0) {
        std::vector<double> wf, lf;
        for (const auto &r : reps) {
          wf.push_back(r.scratch.token.weighted_f1);
          lf.push_back(r.scratch.line_binary.f1);
        }
        csv << "scratch," << reps.front().scratch_lines << ",\"" << pm(mean_std(wf)) << "\",\"" << pm(mean_std(lf))
            << "\"\n";
      }
    } else if (cal->parsed()) {
      Run run("calibrate", common, *cal);
      const Checkpoint ck = load_checkpoint(cal_ckpt);
      const Corpus corpus = load_any_corpus(cal_corpus, cal_gold);
      const auto ex = build_examples(corpus.matches, corpus.gold, ck.vocab, ck.context,
                                     static_cast<std::size_t>(ck.config.max_len));
      const auto points = calibrate(predict(ck.params, ex), levels);
      save_calibration(run.out() / "calibration.json", points);
      for (const auto &p : points)
        if (!p.threshold) log::warn("level " + std::to_string(p.level) + " is unattainable on this corpus");
    } else if (srv->parsed()) {
      Run run("serve", common, *srv, true);
      svc_cfg.mode = parse_chat_mode(srv_mode);
      svc_cfg.audit_log = srv_audit.empty() ? run.out() / "audit.jsonl" : fs::path(srv_audit);
      auto service = ModerationService::open(srv_ckpt, srv_cal, svc_cfg);
      HttpServer server(*service, http);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.run();
      g_server = nullptr;
    } else if (kpi->parsed()) {
      Run run("kpi", common, *kpi);
      const Corpus corpus = load_any_corpus(kpi_corpus, {}, false);
      std::set<std::string> flagged;
      if (!kpi_flags.empty()) {
        flagged = read_json_file(kpi_flags).get<std::set<std::string>>();
      } else if (!kpi_ckpt.empty() && !kpi_cal.empty()) {
        const Checkpoint ck = load_checkpoint(kpi_ckpt);
        double threshold = -1;
        for (const auto &p : load_calibration(kpi_cal))
          if (std::abs(p.level - kpi_level) < 1e-12 && p.threshold) threshold = *p.threshold;
        if (threshold < 0) throw ConfigError("no calibrated threshold for level " + std::to_string(kpi_level));
        const auto ex = build_examples(corpus.matches, corpus.gold, ck.vocab, ck.context,
                                       static_cast<std::size_t>(ck.config.max_len));
        const auto preds = predict(ck.params, ex);
        std::map<std::pair<std::string, int>, const ChatLine *> by_key;
        for (const auto &m : corpus.matches)
          for (const auto &l : m.lines) by_key[{m.match_id, l.line_index}] = &l;
        for (const auto &p : preds)
          if (p.line_score >= threshold) flagged.insert(by_key.at({p.match_id, p.line_index})->player_id);
      } else {
        throw ConfigError("kpi needs --flags or --checkpoint with --calibration");
      }
      const KpiReport rep = kpi_report(corpus.matches, flagged);
      write_json(run.out() / "kpi.json", json(rep));
    }
  } catch (const ConfigError &e) {
    log::error(e.what());
    return kExitConfig;
  } catch (const CLI::Error &e) {
    log::error(e.what());
    return kExitConfig;
  } catch (const std::exception &e) {
    log::error(e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

} // namespace toxbuster
