#pragma once

// HTTP/JSON binding of RadioService on cpp-httplib.
//
//   GET  /api/next?session=        next song + question order
//   POST /api/rate                 {session, song_id, question, stars}
//   GET  /api/preferences?session=
//   PUT  /api/preferences          {session, weights}
//   POST /api/admin/prime          Authorization: Bearer <admin_token>
//   GET  /api/stats?unit=
//   GET  /api/songs/{id}
//   GET  /api/jobs/{id}
//   GET  /audio/{id}.wav

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "afm/radio_service.hpp"

#include <httplib.h>

namespace afm {

namespace detail {

inline void send(httplib::Response& res, const ApiResult& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::optional<std::string> session_param(const httplib::Request& req) {
  if (req.has_param("session")) return req.get_param_value("session");
  if (req.has_header("X-Session")) return req.get_header_value("X-Session");
  return std::nullopt;
}

inline std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
  Json body = Json::parse(req.body, nullptr, false);
  if (body.is_discarded()) {
    send(res, api_error(400, "bad_json", "request body is not valid JSON"));
    return std::nullopt;
  }
  return body;
}

inline std::string admin_token_of(const httplib::Request& req) {
  constexpr std::string_view bearer = "Bearer ";
  const std::string auth = req.get_header_value("Authorization");
  if (auth.starts_with(bearer)) return auth.substr(bearer.size());
  return req.get_header_value("X-Admin-Token");
}

}  // namespace detail

inline void mount_routes(httplib::Server& server, RadioService& service) {
  using httplib::Request;
  using httplib::Response;

  server.Get("/api/next", [&service](const Request& req, Response& res) {
    detail::send(res, service.next_song(detail::session_param(req)));
  });

  server.Post("/api/rate", [&service](const Request& req, Response& res) {
    if (auto body = detail::parse_body(req, res)) {
      if (body->is_object() && !body->contains("session"))
        if (auto s = detail::session_param(req)) (*body)["session"] = *s;
      detail::send(res, service.rate(*body));
    }
  });

  server.Get("/api/preferences", [&service](const Request& req, Response& res) {
    detail::send(res, service.get_preferences(detail::session_param(req)));
  });

  server.Put("/api/preferences", [&service](const Request& req, Response& res) {
    if (auto body = detail::parse_body(req, res)) {
      if (body->is_object() && !body->contains("session"))
        if (auto s = detail::session_param(req)) (*body)["session"] = *s;
      detail::send(res, service.put_preferences(*body));
    }
  });

  server.Post("/api/admin/prime", [&service](const Request& req, Response& res) {
    const std::string token = detail::admin_token_of(req);
    Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded()) body = nullptr;
    detail::send(res, service.submit_prime(token, body));
  });

  server.Get("/api/stats", [&service](const Request& req, Response& res) {
    const std::string unit = req.has_param("unit") ? req.get_param_value("unit") : "per_song_mean";
    detail::send(res, service.stats(unit));
  });

  server.Get("/api/songs/:id", [&service](const Request& req, Response& res) {
    detail::send(res, service.get_song(req.path_params.at("id")));
  });

  server.Get("/api/jobs/:id", [&service](const Request& req, Response& res) {
    detail::send(res, service.get_job(req.path_params.at("id")));
  });

  server.Get(R"(/audio/([A-Za-z0-9_\-]+)\.wav)", [&service](const Request& req, Response& res) {
    const auto wav = service.audio(req.matches[1].str());
    if (!wav) {
      detail::send(res, api_error(404, "unknown_song", "no such audio"));
      return;
    }
    res.set_content(std::string(wav->begin(), wav->end()), "audio/wav");
  });

  const auto& web_root = service.config().web_root;
  if (!web_root.empty() && std::filesystem::is_directory(web_root)) server.set_mount_point("/", web_root.string());
}

// Splits "host:port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, int> parse_bind_addr(std::string_view addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string_view::npos ? "127.0.0.1" : std::string(addr.substr(0, colon));
  const std::string port = colon == std::string_view::npos ? std::string(addr) : std::string(addr.substr(colon + 1));
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    return {host, p};
  } catch (const std::exception&) {
    throw ValidationError("bind_addr '" + std::string(addr) + "' is not host:port");
  }
}

}  // namespace afm
