#pragma once

#include <memory>
#include <string>
#include <thread>

#include "toxbuster/service.hpp"

namespace httplib {
class Server;
}

namespace toxbuster {

struct HttpConfig {
  std::string host = "127.0.0.1";
  int port = 8080; // 0: any free port
  std::string api_token; // empty: no authentication
  std::string cors_origin = "*";
};

/// JSON API over a ModerationService:
///   POST /v1/matches/{id}/lines        ChatLine body -> ScoreResult
///   GET  /v1/matches/{id}/summary      per-player flag counts
///   GET  /v1/matches                   known match ids
///   GET  /v1/flags?status=&match_id=   flag list, ordered by id
///   GET  /v1/flags/{id}
///   POST /v1/flags/{id}/action         {"action", "note", "moderator"}
///   GET  /v1/config/operating-level    level, threshold and the calibration table
///   PUT  /v1/config/operating-level    {"level"}
///   GET  /v1/health
/// Every response body carries "checkpoint_hash" and "threshold".
class HttpServer {
public:
  HttpServer(ModerationService &service, HttpConfig cfg);
  ~HttpServer();
  HttpServer(const HttpServer &) = delete;
  HttpServer &operator=(const HttpServer &) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

private:
  void install_routes();
  int bind();

  ModerationService &service_;
  HttpConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

} // namespace toxbuster
