#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "toxbuster/cli.hpp"

using namespace toxbuster;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toxbuster");
  args.push_back("-q");
  return run_cli(args);
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const testing::TempDir &dir) {
  const nlohmann::json cfg = {
      {"synth", {{"preset", "separable"}, {"n_matches", 12}, {"lines_per_match", 8}}},
      {"model", {{"layers", 1}, {"heads", 2}, {"hidden", 16}, {"ff", 32}, {"max_len", 32}}},
      {"train", {{"lr", 3e-3}, {"max_epochs", 1}, {"batch_size", 16}, {"vocab_size", 200}, {"seeds", {1}}}},
  };
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

} // namespace

TEST_CASE("cli: usage and configuration errors exit with 1") {
  CHECK(cli({}) == kExitConfig);
  CHECK(cli({"bogus"}) == kExitConfig);
  CHECK(cli({"train"}) == kExitConfig);                                // missing --corpus
  CHECK(cli({"eval", "--checkpoint", "/nonexistent", "--test", "x"}) == kExitConfig);
  testing::TempDir dir("cli-bad");
  std::ofstream(dir / "bad.json") << R"({"synth": {"preset": "weird"}})";
  CHECK(cli({"gen", "-c", (dir / "bad.json").string(), "-o", (dir / "out").string()}) == kExitConfig);
  std::ofstream(dir / "typo.json") << R"({"train": {"epochs": 3}})";
  CHECK(cli({"train", "-c", (dir / "typo.json").string(), "--corpus", (dir / "c").string(), "-o", (dir / "t").string()}) ==
        kExitConfig);
  std::ofstream(dir / "typo2.json") << R"({"synth": {"n_match": 3}})";
  CHECK(cli({"gen", "-c", (dir / "typo2.json").string(), "-o", (dir / "g").string()}) == kExitConfig);
  std::ofstream(dir / "typo3.json") << R"({"modle": {}})";
  CHECK(cli({"train", "-c", (dir / "typo3.json").string(), "--corpus", (dir / "c").string(), "-o", (dir / "t3").string()}) ==
        kExitConfig);
}

TEST_CASE("cli: generate, train, evaluate and calibrate a small corpus") {
  testing::TempDir dir("cli");
  const auto cfg = write_config(dir);
  const auto corpus = dir / "corpus";
  REQUIRE(cli({"gen", "-c", cfg.string(), "-o", corpus.string(), "--annotators", "3"}) == kExitOk);
  for (const char *f : {"lines.jsonl", "gold.jsonl", "reports.jsonl", "manifest.json", "config.json", "keywords.json",
                        "annotations.jsonl"})
    CHECK(fs::exists(corpus / f));
  const auto manifest = nlohmann::json::parse(slurp(corpus / "manifest.json"));
  CHECK(manifest.at("subcommand") == "gen");
  CHECK(manifest.at("run_id").get<std::string>().size() == 12);

  // A non-empty output directory needs --force.
  CHECK(cli({"gen", "-c", cfg.string(), "-o", corpus.string()}) == kExitConfig);
  CHECK(cli({"gen", "-c", cfg.string(), "-o", corpus.string(), "--force"}) == kExitOk);

  CHECK(cli({"aggregate", "--corpus", corpus.string(), "--annotations", (corpus / "annotations.jsonl").string(), "-o",
             (dir / "agg").string()}) == kExitOk);
  CHECK(slurp(dir / "agg" / "gold.jsonl") == slurp(corpus / "gold.jsonl"));

  const auto train_a = dir / "train-a";
  const auto train_b = dir / "train-b";
  REQUIRE(cli({"train", "-c", cfg.string(), "--corpus", corpus.string(), "-o", train_a.string()}) == kExitOk);
  REQUIRE(cli({"train", "-c", cfg.string(), "--corpus", corpus.string(), "-o", train_b.string()}) == kExitOk);
  for (const char *f : {"model.ckpt", "calibration.json", "history.json", "report/report.json"})
    CHECK(fs::exists(train_a / f));
  CHECK(slurp(train_a / "model.ckpt") == slurp(train_b / "model.ckpt"));
  CHECK(slurp(train_a / "report" / "report.json") == slurp(train_b / "report" / "report.json"));

  CHECK(cli({"eval", "--checkpoint", (train_a / "model.ckpt").string(), "--test", corpus.string(), "--keywords",
             (corpus / "keywords.json").string(), "-o", (dir / "eval").string()}) == kExitOk);
  CHECK(fs::exists(dir / "eval" / "report.json"));
  const auto kw = nlohmann::json::parse(slurp(dir / "eval" / "keyword_baseline" / "report.json"));
  CHECK(kw.at("weighted").at("f1").at("mean").get<double>() == 1.0);

  CHECK(cli({"calibrate", "--checkpoint", (train_a / "model.ckpt").string(), "--corpus", corpus.string(), "-o",
             (dir / "cal").string()}) == kExitOk);
  CHECK(fs::exists(dir / "cal" / "calibration.json"));

  // Lines without a gold file cannot be evaluated.
  fs::create_directories(dir / "nogold");
  fs::copy_file(corpus / "lines.jsonl", dir / "nogold" / "lines.jsonl");
  CHECK(cli({"eval", "--checkpoint", (train_a / "model.ckpt").string(), "--test", (dir / "nogold").string(), "-o",
             (dir / "eval2").string()}) == kExitConfig);

  CHECK(cli({"vocab", "--corpus", (dir / "nogold").string(), "--size", "120", "-o", (dir / "vocab").string()}) == kExitOk);
  CHECK(fs::exists(dir / "vocab" / "vocab.txt"));
}

TEST_CASE("cli: runtime failures exit with 2") {
  testing::TempDir dir("cli-rt");
  std::ofstream(dir / "broken.ckpt") << "not a checkpoint";
  std::ofstream(dir / "lines.jsonl") << "";
  std::ofstream(dir / "gold.jsonl") << "";
  CHECK(cli({"eval", "--checkpoint", (dir / "broken.ckpt").string(), "--test", dir.path().string(), "-o",
             (dir / "out").string()}) == kExitRuntime);
}

TEST_CASE("cli: default output goes under TOXBUSTER_HOME/runs") {
  testing::TempDir dir("cli-home");
  const auto cfg = write_config(dir);
  const char *old = std::getenv("TOXBUSTER_HOME");
  const std::string saved = old ? old : "";
  setenv("TOXBUSTER_HOME", dir.path().c_str(), 1);
  const int rc = cli({"gen", "-c", cfg.string()});
  if (old) setenv("TOXBUSTER_HOME", saved.c_str(), 1);
  else unsetenv("TOXBUSTER_HOME");
  REQUIRE(rc == kExitOk);
  std::size_t runs = 0;
  for (const auto &e : fs::directory_iterator(dir / "runs")) {
    CHECK(e.path().filename().string().rfind("gen-", 0) == 0);
    CHECK(fs::exists(e.path() / "manifest.json"));
    ++runs;
  }
  CHECK(runs == 1);
}
