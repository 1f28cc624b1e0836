#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/checkpoint.hpp"
#include "toxbuster/errors.hpp"
#include "toxbuster/metrics.hpp"
#include "toxbuster/train.hpp"

namespace toxbuster {

enum class FlagStatus { Pending, Confirmed, Overridden };
enum class ReviewAction { Confirm, Override };

std::string_view to_string(FlagStatus s);
FlagStatus parse_flag_status(std::string_view s);
std::string_view to_string(ReviewAction a);
ReviewAction parse_review_action(std::string_view s);

/// A line arrived with an index not above the match's last buffered index.
class OrderingError : public ConflictError {
public:
  OrderingError(const std::string &what, int expected_min) : ConflictError(what), expected_min_(expected_min) {}
  int expected_min_index() const { return expected_min_; }

private:
  int expected_min_;
};

struct WordScore {
  std::string word;
  ToxicCategory category = ToxicCategory::NonToxic; // argmax class
  double score = 0.0;                               // 1 - P(NonToxic)
};

struct ContextLine {
  int line_index = 0;
  std::string player_id;
  int relative_player = 0;
  int relative_team = 0;
  ChatType chat_type = ChatType::Team;
  std::string text;
};

struct ScoreResult {
  std::string match_id;
  int line_index = 0;
  std::string player_id;
  std::vector<WordScore> words;  // current-line words that survived truncation
  std::vector<ContextLine> context; // visible history lines, oldest first
  std::size_t context_tokens = 0;   // history subwords actually fed to the model
  double line_score = 0.0;
  ToxicCategory category = ToxicCategory::NonToxic; // most likely toxic class at the top-scoring word
  double level = 0.0;
  double threshold = 0.0;
  std::optional<std::uint64_t> flag_id;
  ExamplePrediction prediction;
};

struct FlagRecord {
  std::uint64_t id = 0;
  std::string match_id;
  int line_index = 0;
  std::string player_id;
  ToxicCategory category = ToxicCategory::NonToxic;
  double score = 0.0;
  double threshold = 0.0;
  double level = 0.0;
  FlagStatus status = FlagStatus::Pending;
  std::string moderator_note;
  std::string moderator;
  std::string decided_at;
  std::string text;
  std::vector<WordScore> words;
  std::vector<ContextLine> context;
};

struct MatchSummary {
  std::string match_id;
  std::size_t lines = 0;     // lines ingested, including evicted ones
  std::size_t buffered = 0;  // lines still held for context
  std::map<std::string, std::size_t> flags_per_player;
  std::map<std::string, std::size_t> lines_per_player;
};

struct ServiceConfig {
  double level = 0.90;
  ChatMode mode = ChatMode::Global;
  /// Hard cap on buffered lines per match; 0 disables the cap. Lines beyond
  /// the model's token budget are evicted earlier whenever that cannot change
  /// any future input.
  std::size_t max_buffer_lines = 10000;
  std::filesystem::path audit_log; // empty: no persistence
};

nlohmann::json to_json(const WordScore &w);
nlohmann::json to_json(const ContextLine &c);
nlohmann::json to_json(const ScoreResult &r);
nlohmann::json to_json(const FlagRecord &f);
nlohmann::json to_json(const MatchSummary &s);
void from_json(const nlohmann::json &j, OperatingPoint &p);

/// Operating points from a calibration file: either a JSON array or an object
/// with an "operating_points" (or "calibration") array.
std::vector<OperatingPoint> load_calibration(const std::filesystem::path &path);
void save_calibration(const std::filesystem::path &path, const std::vector<OperatingPoint> &points);

/// Streaming scorer with per-match sessions and a moderator review queue.
/// Concurrent across matches, serialized within a match. Every state change
/// is appended to the audit log in the order it took effect.
class ModerationService {
public:
  ModerationService(Checkpoint checkpoint, std::string checkpoint_hash, std::vector<OperatingPoint> calibration,
                    ServiceConfig cfg = {});
  ~ModerationService();
  ModerationService(const ModerationService &) = delete;
  ModerationService &operator=(const ModerationService &) = delete;

  static std::unique_ptr<ModerationService> open(const std::filesystem::path &checkpoint,
                                                 const std::filesystem::path &calibration, ServiceConfig cfg = {});

  /// Throws OrderingError for a non-increasing index, ConfigError for an empty text.
  ScoreResult ingest_line(ChatLine line);
  /// Throws NotFoundError for an unknown flag, ConflictError when already decided.
  FlagRecord review_action(std::uint64_t flag_id, ReviewAction action, const std::string &note,
                           const std::string &moderator);
  /// Throws ConfigError listing the calibrated levels when `level` has no threshold.
  double set_operating_level(double level);

  double level() const;
  double threshold() const;
  const std::vector<OperatingPoint> &calibration() const { return calibration_; }
  const std::string &checkpoint_hash() const { return hash_; }
  const ContextOptions &context() const { return context_; }
  const Checkpoint &checkpoint() const { return ckpt_; }

  std::vector<FlagRecord> flags(std::optional<FlagStatus> status = std::nullopt,
                                const std::optional<std::string> &match_id = std::nullopt) const;
  FlagRecord flag(std::uint64_t id) const;
  MatchSummary summary(const std::string &match_id) const; // NotFoundError for unknown matches
  std::vector<std::string> matches() const;

  /// Applies an audit log to this (fresh) service; returns the number of events.
  std::size_t replay(const std::filesystem::path &log);

private:
  struct Session;

  Session &session(const std::string &match_id);
  void append_log(const nlohmann::json &event);
  std::optional<double> threshold_for(double level) const;

  Checkpoint ckpt_;
  std::string hash_;
  std::vector<OperatingPoint> calibration_;
  ServiceConfig cfg_;
  ContextOptions context_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;

  // Guards level, flags and the log so that log order equals effect order.
  mutable std::mutex state_mu_;
  double level_ = 0.0;
  double threshold_ = 0.0;
  std::map<std::uint64_t, FlagRecord> flags_;
  std::uint64_t next_flag_ = 1;
  std::ofstream log_;
  bool replaying_ = false;
  std::string replay_time_;
};

} // namespace toxbuster
