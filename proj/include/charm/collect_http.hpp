#pragma once

// JSON-over-HTTP front of the collection service.

#include <string>

#include <httplib.h>
// <resolv.h> defines _res, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "charm/collect.hpp"

namespace charm::collect {

inline int http_status(Errc c) {
  switch (c) {
    case Errc::validation:
    case Errc::domain: return 422;
    case Errc::parse: return 400;
    case Errc::not_found: return 404;
    case Errc::protocol:
    case Errc::conflict:
    case Errc::duplicate_key: return 409;
    default: return 500;
  }
}

inline nlohmann::ordered_json to_json(const NextResult& r) {
  nlohmann::ordered_json j;
  if (const auto* w = std::get_if<WindowDescriptor>(&r)) {
    j["type"] = "window";
    j["trajectory_index"] = w->trajectory_index;
    j["trajectory_id"] = w->trajectory_id;
    j["window_index"] = w->window_index;
    j["first_step"] = w->first_step;
    j["frames"] = w->frames;
    j["prompt_follows"] = w->prompt_follows;
  } else if (const auto* p = std::get_if<Prompt>(&r)) {
    j["type"] = "prompt";
    j["trajectory_index"] = p->trajectory_index;
    j["trajectory_id"] = p->trajectory_id;
    j["window_index"] = p->window_index;
    j["onset_ms"] = p->onset_ms;
    j["timeout_ms"] = kPromptTimeoutMs;
  } else {
    j["type"] = "done";
  }
  return j;
}

namespace detail {

inline void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline nlohmann::ordered_json parse_body(const httplib::Request& req) {
  try {
    auto j = nlohmann::ordered_json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::parse, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed JSON: ") + e.what());
  }
}

template <class T>
T field(const nlohmann::ordered_json& j, const char* name) {
  if (!j.contains(name)) throw Error(Errc::validation, std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::validation, std::string("field '") + name + "' has the wrong type");
  }
}

template <class F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    reply(res, http_status(e.code()), {{"error", errc_name(e.code())}, {"message", e.message()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
  }
}

}  // namespace detail

/// Routes:
///   POST /sessions                 {"profile":{"participant_id":..},"questionnaire":[28 numbers]}
///   GET  /sessions/{id}/next
///   POST /sessions/{id}/ratings    {"window_index","value","client_render_ts","client_submit_ts"}
///   POST /sessions/{id}/expire
///   GET  /sessions/{id}/export[?force=1]
inline void register_routes(httplib::Server& server, CollectService& service) {
  using detail::field;
  using detail::guarded;
  using detail::reply;

  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = detail::parse_body(req);
      const auto profile = field<nlohmann::ordered_json>(body, "profile");
      const auto participant = field<std::string>(profile, "participant_id");
      const auto answers = field<std::vector<double>>(body, "questionnaire");
      const auto id = service.create_session(participant, answers);
      reply(res, 201, {{"session_id", id}});
    });
  });

  server.Get(R"(/sessions/([^/]+)/next)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(service.next_window(req.matches[1]))); });
  });

  server.Post(R"(/sessions/([^/]+)/ratings)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = detail::parse_body(req);
      const auto e = service.submit_rating(req.matches[1], field<std::int64_t>(body, "window_index"),
                                           field<int>(body, "value"), field<std::int64_t>(body, "client_render_ts"),
                                           field<std::int64_t>(body, "client_submit_ts"));
      reply(res, 201, charm::to_json(e));
    });
  });

  server.Post(R"(/sessions/([^/]+)/expire)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto e = service.expire_prompt(req.matches[1]);
      reply(res, 200, {{"expired", e.has_value()}, {"event", e ? charm::to_json(*e) : nlohmann::ordered_json()}});
    });
  });

  server.Get(R"(/sessions/([^/]+)/export)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const bool force = req.has_param("force") && req.get_param_value("force") != "0";
      const auto ds = service.export_session(req.matches[1], force);
      nlohmann::ordered_json j;
      j["profiles"] = nlohmann::ordered_json::array();
      for (const auto& p : ds.profiles()) j["profiles"].push_back(charm::to_json(p));
      j["events"] = nlohmann::ordered_json::array();
      for (const auto& e : ds.events()) j["events"].push_back(charm::to_json(e));
      reply(res, 200, j);
    });
  });
}

}  // namespace charm::collect
