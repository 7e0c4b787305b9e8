#include "xpcg/http_api.hpp"

#include <httplib.h>

#include <functional>

#include "xpcg/error.hpp"
#include "xpcg/service.hpp"

namespace xpcg::service {
namespace {

using nlohmann::json;
using Handler = std::function<json(const httplib::Request&, const json&)>;

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    case ErrorKind::Precondition: return 412;
    case ErrorKind::Runtime: return 500;
  }
  return 500;
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                json detail = json::object()) {
  send(res, status, {{"code", code}, {"message", message}, {"detail", std::move(detail)}});
}

/// Wraps a handler with body parsing and error mapping. Job submissions
/// answer 202.
httplib::Server::Handler wrap(Handler h, int ok_status = 200) {
  return [h = std::move(h), ok_status](const httplib::Request& req, httplib::Response& res) {
    json body = json::object();
    if (!req.body.empty()) {
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        send_error(res, 400, "InvalidJson", e.what());
        return;
      }
    }
    try {
      send(res, ok_status, h(req, body));
    } catch (const Error& e) {
      send_error(res, status_for(e.kind()), e.code(), e.what(), {{"path", req.path}});
    } catch (const json::exception& e) {
      send_error(res, 400, "InvalidField", e.what(), {{"path", req.path}});
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what(), {{"path", req.path}});
    }
  };
}

std::string arg(const httplib::Request& req, std::size_t i) { return req.matches[static_cast<int>(i)].str(); }

}  // namespace

void register_routes(httplib::Server& server, Service& svc) {
  const std::string S = R"(/sessions/([A-Za-z0-9_-]+))";

  server.Post("/sessions", wrap([&](const auto&, const json& b) { return svc.create_session(b); }));
  server.Get(S, wrap([&](const auto& r, const json&) { return svc.get_session(arg(r, 1)); }));
  server.Post(S + "/levels", wrap([&](const auto& r, const json& b) { return svc.upload_level(arg(r, 1), b); }));
  server.Get(S + R"(/levels/([A-Za-z0-9_-]+))",
             wrap([&](const auto& r, const json&) { return svc.get_level(arg(r, 1), arg(r, 2)); }));
  server.Put(S + "/vocabulary", wrap([&](const auto& r, const json& b) { return svc.put_vocabulary(arg(r, 1), b); }));
  server.Get(S + "/vocabulary", wrap([&](const auto& r, const json&) { return svc.get_vocabulary(arg(r, 1)); }));
  server.Post(S + "/annotations",
              wrap([&](const auto& r, const json& b) { return svc.post_annotations(arg(r, 1), b); }));
  server.Get(S + "/annotations", wrap([&](const auto& r, const json&) { return svc.get_annotations(arg(r, 1)); }));
  server.Post(S + "/classifier/train",
              wrap([&](const auto& r, const json&) { return svc.train_classifier(arg(r, 1)); }, 202));
  server.Post(S + "/classifier/feedback",
              wrap([&](const auto& r, const json& b) { return svc.feedback(arg(r, 1), b); }, 202));
  server.Post(S + "/classifier/predict",
              wrap([&](const auto& r, const json& b) { return svc.predict(arg(r, 1), b); }));
  server.Post(S + "/autolabel", wrap([&](const auto& r, const json& b) { return svc.autolabel(arg(r, 1), b); }, 202));
  server.Post(S + "/generator/train", wrap(
                                          [&](const auto& r, const json&) {
                                            const auto mode = r.has_param("mode") ? r.get_param_value("mode") : "full";
                                            return svc.train_generator(arg(r, 1), mode);
                                          },
                                          202));
  server.Post(S + "/generate", wrap([&](const auto& r, const json& b) { return svc.generate(arg(r, 1), b); }));
  server.Get(S + R"(/jobs/([A-Za-z0-9_-]+))",
             wrap([&](const auto& r, const json&) { return svc.get_job(arg(r, 1), arg(r, 2)); }));
  server.Get(S + "/metrics", wrap([&](const auto& r, const json&) { return svc.metrics(arg(r, 1)); }));

  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send_error(res, 404, "NotFound", "no route for " + req.path);
  });
}

int serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, service);
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace xpcg::service
