#pragma once

#include <functional>
#include <string>
#include <vector>

namespace toxbuster::log {

enum class Level { Debug, Info, Warn, Error };

using Sink = std::function<void(Level, const std::string &)>;

// Replaces the process-wide sink and returns the previous one.
Sink set_sink(Sink sink);
void set_min_level(Level level);

void write(Level level, const std::string &message);
inline void debug(const std::string &m) { write(Level::Debug, m); }
inline void info(const std::string &m) { write(Level::Info, m); }
inline void warn(const std::string &m) { write(Level::Warn, m); }
inline void error(const std::string &m) { write(Level::Error, m); }

/// Collects warnings while alive; used by tests and by reports that surface them.
class ScopedCapture {
public:
  ScopedCapture();
  ~ScopedCapture();
  ScopedCapture(const ScopedCapture &) = delete;
  ScopedCapture &operator=(const ScopedCapture &) = delete;

  const std::vector<std::string> &warnings() const { return warnings_; }
  bool contains(const std::string &needle) const;

private:
  Sink previous_;
  std::vector<std::string> warnings_;
};

} // namespace toxbuster::log
