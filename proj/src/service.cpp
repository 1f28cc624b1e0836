#include "toxbuster/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <sstream>

#include "toxbuster/chat_io.hpp"
#include "toxbuster/log.hpp"

namespace toxbuster {

using nlohmann::json;

std::string_view to_string(FlagStatus s) {
  switch (s) {
  case FlagStatus::Pending: return "pending";
  case FlagStatus::Confirmed: return "confirmed";
  case FlagStatus::Overridden: return "overridden";
  }
  return "pending";
}

FlagStatus parse_flag_status(std::string_view s) {
  if (s == "pending") return FlagStatus::Pending;
  if (s == "confirmed") return FlagStatus::Confirmed;
  if (s == "overridden") return FlagStatus::Overridden;
  throw ConfigError("unknown flag status '" + std::string(s) + "' (pending, confirmed, overridden)");
}

std::string_view to_string(ReviewAction a) { return a == ReviewAction::Confirm ? "confirm" : "override"; }

ReviewAction parse_review_action(std::string_view s) {
  if (s == "confirm") return ReviewAction::Confirm;
  if (s == "override") return ReviewAction::Override;
  throw ConfigError("unknown review action '" + std::string(s) + "' (confirm, override)");
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

json category_json(ToxicCategory c) { return std::string(to_string(c)); }

} // namespace

nlohmann::json to_json(const WordScore &w) {
  return {{"word", w.word}, {"category", category_json(w.category)}, {"score", w.score}};
}

nlohmann::json to_json(const ContextLine &c) {
  return {{"line_index", c.line_index},       {"player_id", c.player_id},
          {"relative_player", c.relative_player}, {"relative_team", c.relative_team},
          {"chat_type", to_string(c.chat_type)},  {"text", c.text}};
}

namespace {
template <typename T> json array_of(const std::vector<T> &xs) {
  auto a = json::array();
  for (const auto &x : xs) a.push_back(to_json(x));
  return a;
}
} // namespace

nlohmann::json to_json(const ScoreResult &r) {
  return {{"match_id", r.match_id},
          {"line_index", r.line_index},
          {"player_id", r.player_id},
          {"words", array_of(r.words)},
          {"context", array_of(r.context)},
          {"context_lines", r.context.size()},
          {"context_tokens", r.context_tokens},
          {"line_score", r.line_score},
          {"category", category_json(r.category)},
          {"level", r.level},
          {"threshold", r.threshold},
          {"flagged", r.flag_id.has_value()},
          {"flag_id", r.flag_id ? json(*r.flag_id) : json(nullptr)}};
}

nlohmann::json to_json(const FlagRecord &f) {
  return {{"id", f.id},
          {"match_id", f.match_id},
          {"line_index", f.line_index},
          {"player_id", f.player_id},
          {"category", category_json(f.category)},
          {"category_name", display_name(f.category)},
          {"severity_rank", is_toxic(f.category) ? SeverityOrder{}.rank(f.category) : kNumLabels},
          {"score", f.score},
          {"threshold", f.threshold},
          {"level", f.level},
          {"status", to_string(f.status)},
          {"moderator_note", f.moderator_note},
          {"moderator", f.moderator},
          {"decided_at", f.decided_at},
          {"text", f.text},
          {"words", array_of(f.words)},
          {"context", array_of(f.context)}};
}

nlohmann::json to_json(const MatchSummary &s) {
  return {{"match_id", s.match_id},
          {"lines", s.lines},
          {"buffered", s.buffered},
          {"flags_per_player", s.flags_per_player},
          {"lines_per_player", s.lines_per_player}};
}

void from_json(const nlohmann::json &j, OperatingPoint &p) {
  p = {};
  p.level = j.at("level").get<double>();
  if (j.contains("threshold") && !j.at("threshold").is_null()) p.threshold = j.at("threshold").get<double>();
  if (j.contains("precision")) p.precision = j.at("precision").get<double>();
  if (j.contains("recall")) p.recall = j.at("recall").get<double>();
  if (j.contains("intercept")) p.intercept = j.at("intercept").get<double>();
  if (j.contains("category_recall")) {
    const json &cats = j.at("category_recall");
    for (auto it = cats.begin(); it != cats.end(); ++it) {
      const auto c = parse_category(it.key());
      if (!c || !is_toxic(*c)) throw ParseError("unknown toxic category '" + it.key() + "' in calibration");
      if (!it.value().is_null()) p.category_recall[static_cast<std::size_t>(label_of(*c))] = it.value().get<double>();
    }
  }
}

std::vector<OperatingPoint> load_calibration(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open calibration file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const json *arr = &j;
  if (j.is_object()) {
    if (j.contains("operating_points")) arr = &j.at("operating_points");
    else if (j.contains("calibration")) arr = &j.at("calibration");
  }
  if (!arr->is_array()) throw ParseError(path.string() + ": no operating point array");
  try {
    return arr->get<std::vector<OperatingPoint>>();
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_calibration(const std::filesystem::path &path, const std::vector<OperatingPoint> &points) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"operating_points", points}}.dump(2) << '\n';
}

// ---------------------------------------------------------------- sessions

struct ModerationService::Session {
  std::mutex mu;
  Match match; // buffered lines in arrival order
  int last_index = -1;
  std::size_t ingested = 0;
  std::map<std::string, std::size_t> flags_per_player;
  std::map<std::string, std::size_t> lines_per_player;
  // Words of buffered lines that every future reader can see.
  std::size_t all_words = 0;
  std::map<std::string, std::size_t> team_words;
};

ModerationService::ModerationService(Checkpoint checkpoint, std::string checkpoint_hash,
                                     std::vector<OperatingPoint> calibration, ServiceConfig cfg)
    : ckpt_(std::move(checkpoint)), hash_(std::move(checkpoint_hash)), calibration_(std::move(calibration)),
      cfg_(std::move(cfg)) {
  context_ = ckpt_.context;
  context_.mode = cfg_.mode;
  const auto t = threshold_for(cfg_.level);
  if (!t) set_operating_level(cfg_.level); // throws with the available levels
  level_ = cfg_.level;
  threshold_ = *t;
  if (!cfg_.audit_log.empty()) {
    if (std::filesystem::exists(cfg_.audit_log)) {
      const std::size_t n = replay(cfg_.audit_log);
      log::info("recovered " + std::to_string(n) + " audit events from " + cfg_.audit_log.string());
    }
    if (cfg_.audit_log.has_parent_path()) std::filesystem::create_directories(cfg_.audit_log.parent_path());
    log_.open(cfg_.audit_log, std::ios::app);
    if (!log_) throw std::runtime_error("cannot open audit log " + cfg_.audit_log.string());
  }
}

ModerationService::~ModerationService() = default;

std::unique_ptr<ModerationService> ModerationService::open(const std::filesystem::path &checkpoint,
                                                           const std::filesystem::path &calibration,
                                                           ServiceConfig cfg) {
  auto ck = load_checkpoint(checkpoint);
  return std::make_unique<ModerationService>(std::move(ck), file_hash(checkpoint), load_calibration(calibration),
                                             std::move(cfg));
}

std::optional<double> ModerationService::threshold_for(double level) const {
  for (const auto &p : calibration_)
    if (std::abs(p.level - level) < 1e-12 && p.threshold) return p.threshold;
  return std::nullopt;
}

double ModerationService::level() const {
  std::lock_guard lock(state_mu_);
  return level_;
}

double ModerationService::threshold() const {
  std::lock_guard lock(state_mu_);
  return threshold_;
}

ModerationService::Session &ModerationService::session(const std::string &match_id) {
  {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(match_id);
    if (it != sessions_.end()) return *it->second;
  }
  std::unique_lock lock(sessions_mu_);
  auto &slot = sessions_[match_id];
  if (!slot) {
    slot = std::make_unique<Session>();
    slot->match.match_id = match_id;
  }
  return *slot;
}

void ModerationService::append_log(const nlohmann::json &event) {
  if (replaying_ || !log_.is_open()) return;
  log_ << event.dump() << '\n';
  log_.flush();
}

ScoreResult ModerationService::ingest_line(ChatLine line) {
  if (trim(line.text).empty()) throw ConfigError("line text is empty");
  Session &s = session(line.match_id);
  std::lock_guard session_lock(s.mu);
  if (line.line_index <= s.last_index) {
    throw OrderingError("line_index " + std::to_string(line.line_index) + " of match '" + line.match_id +
                            "' is not after the last buffered index " + std::to_string(s.last_index),
                        s.last_index + 1);
  }

  s.match.lines.push_back(line);
  const std::size_t target = s.match.lines.size() - 1;
  AssembledSequence seq;
  EncoderInput input;
  try {
    seq = assemble_sequence(s.match, target, nullptr, context_);
    input = tokenize_aligned(seq, ckpt_.vocab, static_cast<std::size_t>(ckpt_.config.max_len));
  } catch (...) {
    s.match.lines.pop_back();
    throw;
  }

  ScoreResult r;
  r.match_id = line.match_id;
  r.line_index = line.line_index;
  r.player_id = line.player_id;
  r.prediction = predict_one(ckpt_.params, input);
  r.prediction.match_id = line.match_id;
  r.prediction.line_index = line.line_index;
  r.line_score = r.prediction.line_score;

  const auto words = split_words(line.text);
  const auto &pred = r.prediction;
  for (std::size_t k = 0; k < pred.toxic_score.size() && k < words.size(); ++k)
    r.words.push_back({std::string(words[k]), category_of(pred.predicted[k]), pred.toxic_score[k]});
  if (!pred.toxic_score.empty()) {
    const auto top = static_cast<std::size_t>(
        std::max_element(pred.toxic_score.begin(), pred.toxic_score.end()) - pred.toxic_score.begin());
    const auto &pr = pred.probs[top];
    r.category = category_of(static_cast<int>(std::max_element(pr.begin(), pr.begin() + kNumToxicCategories) - pr.begin()));
  }
  for (std::size_t i = 0; i < input.size() && input.segment_ids[i] == 0; ++i) ++r.context_tokens;
  r.context_tokens = r.context_tokens >= 2 ? r.context_tokens - 2 : 0; // start and separator

  if (context_.mode) {
    const auto visible = filter_history(s.match, target, *context_.mode);
    std::vector<const ChatLine *> hist;
    for (auto i : visible) hist.push_back(&s.match.lines[i]);
    const auto ids = assign_relative_ids(hist, line, context_.max_speakers, context_.id_order);
    for (std::size_t k = 0; k < hist.size(); ++k)
      r.context.push_back({hist[k]->line_index, hist[k]->player_id, ids[k].player, ids[k].team, hist[k]->chat_type,
                           hist[k]->text});
  }

  s.last_index = line.line_index;
  ++s.ingested;
  ++s.lines_per_player[line.player_id];
  const std::size_t nwords = word_count(line.text);
  if (line.chat_type == ChatType::All) s.all_words += nwords;
  else s.team_words[line.team_id] += nwords;

  {
    std::lock_guard lock(state_mu_);
    r.level = level_;
    r.threshold = threshold_;
    if (r.line_score >= threshold_) {
      FlagRecord f;
      f.id = next_flag_++;
      f.match_id = line.match_id;
      f.line_index = line.line_index;
      f.player_id = line.player_id;
      f.category = r.category;
      f.score = r.line_score;
      f.threshold = threshold_;
      f.level = level_;
      f.text = line.text;
      f.words = r.words;
      f.context = r.context;
      r.flag_id = f.id;
      ++s.flags_per_player[line.player_id];
      flags_.emplace(f.id, std::move(f));
    }
    json ev = {{"event", "line"}, {"line", chat_line_to_json(line)}};
    append_log(ev);
  }

  // Eviction. A front line can go once later lines it shares visibility with
  // hold at least max_len words: it would be truncated from every future input,
  // and backward relative ids never depend on lines that old.
  const auto max_len = static_cast<std::size_t>(ckpt_.config.max_len);
  const bool safe_mode = context_.mode == ChatMode::Global || context_.mode == ChatMode::Moderator;
  while (!s.match.lines.empty()) {
    const ChatLine &front = s.match.lines.front();
    const std::size_t w = word_count(front.text);
    bool evict = cfg_.max_buffer_lines > 0 && s.match.lines.size() > cfg_.max_buffer_lines;
    if (!evict && safe_mode && context_.id_order == IdOrder::Backward && s.match.lines.size() > 1) {
      const std::size_t after = front.chat_type == ChatType::All ? s.all_words - w
                                                                 : s.all_words + s.team_words[front.team_id] - w;
      evict = after >= max_len;
    }
    if (!evict) break;
    if (front.chat_type == ChatType::All) s.all_words -= w;
    else s.team_words[front.team_id] -= w;
    s.match.lines.erase(s.match.lines.begin());
  }
  return r;
}

FlagRecord ModerationService::review_action(std::uint64_t flag_id, ReviewAction action, const std::string &note,
                                            const std::string &moderator) {
  std::lock_guard lock(state_mu_);
  auto it = flags_.find(flag_id);
  if (it == flags_.end()) throw NotFoundError("unknown flag " + std::to_string(flag_id));
  FlagRecord &f = it->second;
  if (f.status != FlagStatus::Pending) {
    throw ConflictError("flag " + std::to_string(flag_id) + " is already " + std::string(to_string(f.status)));
  }
  f.status = action == ReviewAction::Confirm ? FlagStatus::Confirmed : FlagStatus::Overridden;
  f.moderator_note = note;
  f.moderator = moderator;
  f.decided_at = replay_time_.empty() ? utc_now() : replay_time_;
  append_log({{"event", "review"},
              {"flag_id", flag_id},
              {"action", to_string(action)},
              {"note", note},
              {"moderator", moderator},
              {"at", f.decided_at}});
  return f;
}

double ModerationService::set_operating_level(double level) {
  const auto t = threshold_for(level);
  if (!t) {
    std::ostringstream msg;
    msg << "no calibrated threshold for level " << level << "; available:";
    bool any = false;
    for (const auto &p : calibration_)
      if (p.threshold) {
        msg << ' ' << p.level;
        any = true;
      }
    if (!any) msg << " none";
    throw ConfigError(msg.str());
  }
  std::lock_guard lock(state_mu_);
  level_ = level;
  threshold_ = *t;
  append_log({{"event", "level"}, {"level", level}});
  return threshold_;
}

std::vector<FlagRecord> ModerationService::flags(std::optional<FlagStatus> status,
                                                 const std::optional<std::string> &match_id) const {
  std::lock_guard lock(state_mu_);
  std::vector<FlagRecord> out;
  for (const auto &[id, f] : flags_) {
    if (status && f.status != *status) continue;
    if (match_id && f.match_id != *match_id) continue;
    out.push_back(f);
  }
  return out;
}

FlagRecord ModerationService::flag(std::uint64_t id) const {
  std::lock_guard lock(state_mu_);
  auto it = flags_.find(id);
  if (it == flags_.end()) throw NotFoundError("unknown flag " + std::to_string(id));
  return it->second;
}

MatchSummary ModerationService::summary(const std::string &match_id) const {
  Session *s = nullptr;
  {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(match_id);
    if (it == sessions_.end()) throw NotFoundError("unknown match '" + match_id + "'");
    s = it->second.get();
  }
  std::lock_guard lock(s->mu);
  MatchSummary out;
  out.match_id = match_id;
  out.lines = s->ingested;
  out.buffered = s->match.lines.size();
  out.flags_per_player = s->flags_per_player;
  out.lines_per_player = s->lines_per_player;
  return out;
}

std::vector<std::string> ModerationService::matches() const {
  std::shared_lock lock(sessions_mu_);
  std::vector<std::string> out;
  for (const auto &[id, s] : sessions_) out.push_back(id);
  return out;
}

std::size_t ModerationService::replay(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open audit log " + path.string());
  replaying_ = true;
  std::size_t n = 0;
  std::string raw;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, raw)) {
      ++lineno;
      if (trim(raw).empty()) continue;
      json ev;
      try {
        ev = json::parse(raw);
      } catch (const json::exception &e) {
        // A torn final record from a crash is dropped; anything earlier is corruption.
        if (in.peek() == std::char_traits<char>::eof()) {
          log::warn("ignoring truncated final audit record at line " + std::to_string(lineno));
          break;
        }
        throw ParseError(lineno, e.what());
      }
      const std::string kind = ev.at("event").get<std::string>();
      if (kind == "line") {
        ingest_line(chat_line_from_json(ev.at("line"), lineno));
      } else if (kind == "review") {
        replay_time_ = ev.value("at", std::string());
        review_action(ev.at("flag_id").get<std::uint64_t>(), parse_review_action(ev.at("action").get<std::string>()),
                      ev.value("note", std::string()), ev.value("moderator", std::string()));
        replay_time_.clear();
      } else if (kind == "level") {
        set_operating_level(ev.at("level").get<double>());
      } else {
        throw ParseError(lineno, "unknown audit event '" + kind + "'");
      }
      ++n;
    }
  } catch (...) {
    replaying_ = false;
    replay_time_.clear();
    throw;
  }
  replaying_ = false;
  return n;
}

} // namespace toxbuster
