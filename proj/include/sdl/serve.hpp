#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "sdl/error.hpp"
#include "sdl/session.hpp"

namespace sdl {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Static files for the browser UI; empty to skip.
  std::string www;
};

namespace detail {

inline void send_json(httplib::Response& res, const nlohmann::ordered_json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, {{"error", msg}}, status);
}

// Run `fn` and map library errors onto HTTP statuses.
inline void guarded(httplib::Response& res, const std::function<nlohmann::ordered_json()>& fn) {
  try {
    send_json(res, fn());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConfigError& e) {
    send_error(res, 400, e.what());
  } catch (const InputError& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

inline std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw InputError("");
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw InputError(std::string("query '") + key + "' must be a non-negative integer");
  }
}

inline int path_int(const std::string& s) {
  try {
    std::size_t used = 0;
    int n = std::stoi(s, &used);
    if (used != s.size()) throw InputError("");
    return n;
  } catch (const std::exception&) {
    throw NotFoundError("bad round '" + s + "'");
  }
}

}  // namespace detail

// Routes of the workbench API. Mutations take the lock exclusively, reads
// share it.
inline void install_routes(httplib::Server& svr, Session& s, std::shared_mutex& mu) {
  using detail::guarded;
  using Req = httplib::Request;
  using Res = httplib::Response;
  using J = nlohmann::ordered_json;

  svr.Get("/state", [&](const Req&, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&] { return s.state(); });
  });
  svr.Get("/params", [&](const Req&, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&] { return s.params(); });
  });
  svr.Get(R"(/params/([^/]+)/curve)", [&](const Req& req, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&] { return s.curve(req.matches[1]); });
  });
  svr.Post(R"(/params/([^/]+))", [&](const Req& req, Res& res) {
    std::unique_lock lock(mu);
    guarded(res, [&] {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
      } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("body: ") + e.what());
      }
      return s.edit(req.matches[1], body);
    });
  });
  svr.Post("/round", [&](const Req&, Res& res) {
    std::unique_lock lock(mu);
    guarded(res, [&] { return s.run_round(); });
  });
  svr.Get("/rounds", [&](const Req&, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&] { return s.rounds(); });
  });
  svr.Get(R"(/rounds/(\d+))", [&](const Req& req, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&] { return s.round_report(detail::path_int(req.matches[1])); });
  });
  svr.Post(R"(/rollback/([^/]+))", [&](const Req& req, Res& res) {
    std::unique_lock lock(mu);
    guarded(res, [&] { return s.rollback(detail::path_int(req.matches[1])); });
  });
  svr.Get("/frames", [&](const Req& req, Res& res) {
    std::shared_lock lock(mu);
    guarded(res, [&]() -> J {
      std::optional<Outcome> cls;
      if (req.has_param("class")) {
        cls = outcome_from(req.get_param_value("class"));
        if (!cls) throw InputError("class must be one of TP, FP, FN, TN");
      }
      return s.frames(cls, detail::query_size(req, "offset", 0), detail::query_size(req, "limit", 100));
    });
  });
}

// Bind and serve until stopped. Throws InputError if the port is taken.
inline void serve(Session& s, const ServeOptions& opt, const std::function<void(int)>& on_ready = {}) {
  httplib::Server svr;
  // No SO_REUSEPORT, so a port already in use fails to bind.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  std::shared_mutex mu;
  install_routes(svr, s, mu);
  if (!opt.www.empty() && !svr.set_mount_point("/", opt.www))
    throw InputError("cannot serve static files from '" + opt.www + "'");
  int port = opt.port;
  if (port == 0) {
    port = svr.bind_to_any_port(opt.host);
    if (port < 0) throw InputError("no free port on " + opt.host);
  } else if (!svr.bind_to_port(opt.host, port)) {
    throw InputError("port " + std::to_string(port) + " is busy");
  }
  if (on_ready) on_ready(port);
  svr.listen_after_bind();
}

}  // namespace sdl
