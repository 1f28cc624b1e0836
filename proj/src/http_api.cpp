#include "toxbuster/http_api.hpp"

#include "httplib.h"
#include "toxbuster/chat_io.hpp"
#include "toxbuster/log.hpp"

namespace toxbuster {

using nlohmann::json;

namespace {

void send(const ModerationService &svc, httplib::Response &res, int status, json body) {
  body["checkpoint_hash"] = svc.checkpoint_hash();
  body["threshold"] = svc.threshold();
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(const ModerationService &svc, httplib::Response &res, int status, const std::string &message,
                json extra = json::object()) {
  extra["error"] = message;
  send(svc, res, status, std::move(extra));
}

std::uint64_t parse_id(const std::string &s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw NotFoundError("unknown flag '" + s + "'");
  }
}

json parse_body(const httplib::Request &req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception &e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what());
  }
}

json level_body(const ModerationService &svc) {
  auto table = json::array();
  for (const auto &p : svc.calibration()) table.push_back(p);
  return {{"level", svc.level()}, {"calibration", table}};
}

} // namespace

HttpServer::HttpServer(ModerationService &service, HttpConfig cfg)
    : service_(service), cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto &srv = *server_;
  auto &svc = service_;

  srv.set_pre_routing_handler([this, &svc](const httplib::Request &req, httplib::Response &res) {
    res.set_header("Access-Control-Allow-Origin", cfg_.cors_origin);
    res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    if (req.method == "OPTIONS") {
      res.status = 204;
      return httplib::Server::HandlerResponse::Handled;
    }
    if (!cfg_.api_token.empty() && req.get_header_value("Authorization") != "Bearer " + cfg_.api_token) {
      send_error(svc, res, 401, "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  srv.set_exception_handler([&svc](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const OrderingError &e) {
      send_error(svc, res, 409, e.what(), {{"expected_min_index", e.expected_min_index()}});
    } catch (const ConflictError &e) {
      send_error(svc, res, 409, e.what());
    } catch (const NotFoundError &e) {
      send_error(svc, res, 404, e.what());
    } catch (const ConfigError &e) {
      send_error(svc, res, 400, e.what());
    } catch (const ParseError &e) {
      send_error(svc, res, 400, e.what());
    } catch (const json::exception &e) {
      send_error(svc, res, 400, e.what());
    } catch (const std::exception &e) {
      log::error(std::string("request failed: ") + e.what());
      send_error(svc, res, 500, e.what());
    }
  });

  srv.Post(R"(/v1/matches/([^/]+)/lines)", [&svc](const httplib::Request &req, httplib::Response &res) {
    json body = parse_body(req);
    if (!body.is_object()) throw ParseError("chat line body must be a JSON object");
    const std::string match_id = req.matches[1];
    if (body.contains("match_id") && body.at("match_id") != match_id && body.at("match_id").dump() != match_id) {
      throw ConfigError("body match_id does not match the path");
    }
    body["match_id"] = match_id;
    if (!body.contains("game")) body["game"] = to_string(Game::Synthetic);
    send(svc, res, 200, to_json(svc.ingest_line(chat_line_from_json(body))));
  });

  srv.Get(R"(/v1/matches/([^/]+)/summary)", [&svc](const httplib::Request &req, httplib::Response &res) {
    send(svc, res, 200, to_json(svc.summary(req.matches[1])));
  });

  srv.Get("/v1/matches", [&svc](const httplib::Request &, httplib::Response &res) {
    send(svc, res, 200, {{"matches", svc.matches()}});
  });

  srv.Get("/v1/flags", [&svc](const httplib::Request &req, httplib::Response &res) {
    std::optional<FlagStatus> status;
    std::optional<std::string> match;
    if (req.has_param("status") && req.get_param_value("status") != "all")
      status = parse_flag_status(req.get_param_value("status"));
    if (req.has_param("match_id")) match = req.get_param_value("match_id");
    auto arr = json::array();
    for (const auto &f : svc.flags(status, match)) arr.push_back(to_json(f));
    send(svc, res, 200, {{"flags", arr}});
  });

  srv.Get(R"(/v1/flags/(\d+))", [&svc](const httplib::Request &req, httplib::Response &res) {
    send(svc, res, 200, {{"flag", to_json(svc.flag(parse_id(req.matches[1])))}});
  });

  srv.Post(R"(/v1/flags/([^/]+)/action)", [&svc](const httplib::Request &req, httplib::Response &res) {
    const auto id = parse_id(req.matches[1]);
    const json body = parse_body(req);
    if (!body.is_object() || !body.contains("action")) throw ParseError("action body needs an \"action\" field");
    const auto action = parse_review_action(body.at("action").get<std::string>());
    const auto f = svc.review_action(id, action, body.value("note", std::string()),
                                     body.value("moderator", std::string("anonymous")));
    send(svc, res, 200, {{"flag", to_json(f)}});
  });

  srv.Get("/v1/config/operating-level", [&svc](const httplib::Request &, httplib::Response &res) {
    send(svc, res, 200, level_body(svc));
  });

  srv.Put("/v1/config/operating-level", [&svc](const httplib::Request &req, httplib::Response &res) {
    const json body = parse_body(req);
    if (!body.is_object() || !body.contains("level") || !body.at("level").is_number())
      throw ParseError("operating level body needs a numeric \"level\"");
    svc.set_operating_level(body.at("level").get<double>());
    send(svc, res, 200, level_body(svc));
  });

  srv.Get("/v1/health", [&svc](const httplib::Request &, httplib::Response &res) {
    send(svc, res, 200, {{"status", "ok"}, {"level", svc.level()}});
  });

  srv.set_error_handler([&svc](const httplib::Request &req, httplib::Response &res) {
    if (res.status == 404 && res.body.empty()) send_error(svc, res, 404, "no route for " + req.method + " " + req.path);
  });
}

int HttpServer::bind() {
  port_ = cfg_.port == 0 ? server_->bind_to_any_port(cfg_.host) : (server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
  if (port_ < 0) throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  return port_;
}

int HttpServer::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::run() {
  bind();
  log::info("serving on http://" + cfg_.host + ":" + std::to_string(port_));
  server_->listen_after_bind();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

} // namespace toxbuster
