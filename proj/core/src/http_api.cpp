#include <httplib.h>

#include <spdlog/spdlog.h>

#include "cforge/service.hpp"

namespace cforge::service {

using nlohmann::json;

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;

  explicit Impl(Service& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_content(api.raw ? *api.raw : api.body.dump(), "application/json");
}

std::optional<std::string> idempotency_key(const httplib::Request& req) {
  if (!req.has_header("Idempotency-Key")) return std::nullopt;
  return req.get_header_value("Idempotency-Key");
}

// Parses the body, answering 400 itself on malformed JSON.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    send(res, {400, {{"error", {{"code", "parse"}, {"message", std::string("malformed JSON body: ") + e.what()}}}}, {}});
    return std::nullopt;
  }
}

}  // namespace

HttpServer::HttpServer(Service& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.Post("/api/v1/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, svc.create_session(*body, idempotency_key(req)));
  });
  srv.Post(R"(/api/v1/sessions/([A-Za-z0-9]+)/(select|navigate|commit))",
           [&svc](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req, res);
             if (!body) return;
             const std::string id = req.matches[1];
             const std::string action = req.matches[2];
             const auto key = idempotency_key(req);
             if (action == "select") {
               send(res, svc.select(id, *body, key));
             } else if (action == "navigate") {
               send(res, svc.navigate(id, *body, key));
             } else {
               send(res, svc.commit(id, *body, key));
             }
           });
  srv.Get(R"(/api/v1/sessions/([A-Za-z0-9]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_session(req.matches[1]));
  });
  srv.Get("/api/v1/datasets", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.list_datasets()); });
  srv.Get("/api/v1/runs", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.list_runs()); });
  srv.Get(R"(/api/v1/runs/(.+)/report)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.run_report(req.matches[1]));
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send(res, error_response(e));
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
  if (static_dir && !srv.set_mount_point("/", static_dir->string())) {
    throw Error(Errc::not_found, "static directory " + static_dir->string() + " does not exist");
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int bound = srv.bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::io, "cannot bind " + host);
    return bound;
  }
  if (!srv.bind_to_port(host, port)) throw Error(Errc::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cforge::service
