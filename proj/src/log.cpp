#include "toxbuster/log.hpp"

#include <iostream>
#include <mutex>

namespace toxbuster::log {
namespace {

std::mutex g_mutex;
Level g_min = Level::Info;

const char *tag(Level l) {
  switch (l) {
  case Level::Debug: return "debug";
  case Level::Info: return "info";
  case Level::Warn: return "warning";
  case Level::Error: return "error";
  }
  return "?";
}

Sink &sink() {
  static Sink s = [](Level l, const std::string &m) { std::cerr << "[" << tag(l) << "] " << m << "\n"; };
  return s;
}

} // namespace

Sink set_sink(Sink s) {
  std::lock_guard lock(g_mutex);
  Sink prev = std::move(sink());
  sink() = std::move(s);
  return prev;
}

void set_min_level(Level level) {
  std::lock_guard lock(g_mutex);
  g_min = level;
}

void write(Level level, const std::string &message) {
  std::lock_guard lock(g_mutex);
  if (level < g_min && level != Level::Warn) return;
  if (sink()) sink()(level, message);
}

ScopedCapture::ScopedCapture() {
  previous_ = set_sink([this](Level l, const std::string &m) {
    if (l >= Level::Warn) warnings_.push_back(m);
  });
}

ScopedCapture::~ScopedCapture() { set_sink(std::move(previous_)); }

bool ScopedCapture::contains(const std::string &needle) const {
  for (const auto &w : warnings_)
    if (w.find(needle) != std::string::npos) return true;
  return false;
}

} // namespace toxbuster::log
