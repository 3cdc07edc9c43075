#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diagnosys/consultation.hpp"

namespace diagnosys {

using json = nlohmann::json;

// ---- JSON projections ----

inline json to_json(const Hypothesis& h) {
  return {{"disease", h.disease},
          {"score", h.score},
          {"matched", h.matched},
          {"penalty", h.penalty},
          {"confidence", h.confidence},
          {"global_similarity", h.global_similarity},
          {"rank_score", h.rank_score},
          {"eliminated", h.eliminated},
          {"elimination_reason", h.elimination_reason}};
}

inline json to_json(const TestOutcome& o) {
  return {{"disease", o.disease},
          {"test_id", o.test_id},
          {"reported_value", o.reported_value ? json(*o.reported_value) : json(nullptr)},
          {"verdict", to_string(o.verdict)},
          {"decisive_elimination", o.decisive_elimination}};
}

inline json state_snapshot(const ConsultationState& s) {
  json confirmed = json::array(), denied = json::array(), hyps = json::array(), tests = json::array(),
       risks = json::array();
  for (const auto& [_, c] : s.confirmed)
    confirmed.push_back(
        {{"canonical", c.canonical}, {"strength", c.strength}, {"source", to_string(c.source)}, {"phrase", c.phrase}});
  for (const auto& [_, d] : s.denied) denied.push_back({{"canonical", d.canonical}, {"penalties", d.penalties}});
  for (const auto& h : s.hypotheses) hyps.push_back(to_json(h));
  for (const auto& o : s.test_outcomes) tests.push_back(to_json(o));
  for (const auto& r : s.risk_confirmations)
    risks.push_back({{"disease", r.disease}, {"description", r.factor.description}, {"weight", r.factor.weight}});
  return {{"phase", to_string(s.phase)},
          {"questions_asked", s.questions_asked()},
          {"confirmed", confirmed},
          {"denied", denied},
          {"hypotheses", hyps},
          {"overall_confidence", s.overall_confidence},
          {"test_outcomes", tests},
          {"risk_confirmations", risks}};
}

inline json to_json(const Prompt& p) {
  if (const auto* q = std::get_if<Question>(&p))
    return {{"type", "question"},  {"id", q->id},
            {"canonical", q->canonical}, {"text", q->prompt_text},
            {"justification", q->justification}, {"info_score", q->info_score}};
  if (const auto* t = std::get_if<TestQuestion>(&p))
    return {{"type", "test"},     {"id", t->id},       {"test_id", t->id}, {"display_name", t->display_name},
            {"unit", t->unit},    {"diseases", t->diseases}, {"text", t->prompt_text}};
  if (const auto* r = std::get_if<RiskQuestion>(&p))
    return {{"type", "risk"},
            {"id", r->id},
            {"disease", r->disease},
            {"description", r->factor.description},
            {"text", r->prompt_text}};
  return {{"type", "report_ready"}};
}

inline json to_json(const AttributionMatrix& m) {
  json rows = json::array();
  for (const auto& r : m.rows) rows.push_back({{"label", r.label}, {"kind", to_string(r.kind)}});
  return {{"rows", rows}, {"columns", m.columns}, {"cells", m.cells}};
}

inline json to_json(const DiagnosisReport& r) {
  auto entry = [](const RankedEntry& e) {
    return json{{"disease", e.disease}, {"confidence", e.confidence}, {"rank_score", e.rank_score}};
  };
  json runners = json::array(), exclusions = json::array(), tests = json::array(), risks = json::array(),
       eliminated = json::array();
  for (const auto& e : r.runners_up) runners.push_back(entry(e));
  for (const auto& x : r.denied_exclusions)
    exclusions.push_back({{"canonical", x.canonical}, {"weighed_against", x.weighed_against}});
  for (const auto& t : r.test_evidence) tests.push_back(to_json(t));
  for (const auto& rc : r.risk_evidence)
    risks.push_back({{"disease", rc.disease}, {"description", rc.factor.description}, {"weight", rc.factor.weight}});
  for (const auto& [d, why] : r.eliminated) eliminated.push_back({{"disease", d}, {"reason", why}});
  return {{"inconclusive", r.inconclusive},
          {"most_likely", r.most_likely ? entry(*r.most_likely) : json(nullptr)},
          {"runners_up", runners},
          {"overall_confidence", r.overall_confidence},
          {"supporting_symptoms", r.supporting_symptoms},
          {"denied_exclusions", exclusions},
          {"test_evidence", tests},
          {"risk_evidence", risks},
          {"eliminated", eliminated},
          {"recommended_specialist", r.recommended_specialist},
          {"next_steps", r.next_steps},
          {"transcript_digest", r.transcript_digest}};
}

// ---- sessions ----

using Clock = std::function<std::chrono::steady_clock::time_point()>;

inline std::chrono::steady_clock::time_point steady_now() { return std::chrono::steady_clock::now(); }

struct Session {
  Session(std::string id_, Consultation c, std::chrono::steady_clock::time_point now)
      : id(std::move(id_)), consultation(std::move(c)), created_at(now), last_active(now) {}

  const std::string id;
  std::mutex mutex;  // serializes every operation on this session
  Consultation consultation;
  const std::chrono::steady_clock::time_point created_at;
  std::chrono::steady_clock::time_point last_active;  // guarded by the store mutex
};

/// 128-bit random id as 32 lowercase hex digits.
inline std::string random_session_id() {
  thread_local std::mt19937_64 gen{[] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

class SessionStore {
 public:
  explicit SessionStore(std::chrono::milliseconds ttl = std::chrono::minutes(30), std::size_t capacity = 10000,
                        Clock clock = steady_now)
      : ttl_(ttl), capacity_(capacity), clock_(std::move(clock)) {}

  std::shared_ptr<Session> create(Consultation c) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    purge_locked(now);
    if (sessions_.size() >= capacity_)
      throw Error(ErrorCode::capacity_exceeded, std::to_string(capacity_) + " sessions are open");
    std::string id;
    do id = random_session_id();
    while (sessions_.count(id));
    auto s = std::make_shared<Session>(id, std::move(c), now);
    sessions_.emplace(id, s);
    return s;
  }

  /// Live session by id; touching it extends its lifetime.
  std::shared_ptr<Session> get(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::unknown_session, id);
    if (now - it->second->last_active > ttl_) {
      sessions_.erase(it);
      throw Error(ErrorCode::unknown_session, id);
    }
    it->second->last_active = now;
    return it->second;
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    purge_locked(clock_());
    return sessions_.size();
  }

  std::chrono::milliseconds ttl() const noexcept { return ttl_; }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  void purge_locked(std::chrono::steady_clock::time_point now) {
    for (auto it = sessions_.begin(); it != sessions_.end();)
      it = now - it->second->last_active > ttl_ ? sessions_.erase(it) : std::next(it);
  }

  std::chrono::milliseconds ttl_;
  std::size_t capacity_;
  Clock clock_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// ---- service ----

struct Response {
  int status = 200;
  json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_session: return 404;
    case ErrorCode::wrong_phase:
    case ErrorCode::stale_question: return 409;
    case ErrorCode::non_finite_value:
    case ErrorCode::empty_evidence:
    case ErrorCode::unknown_test:
    case ErrorCode::invalid_config: return 422;
    case ErrorCode::capacity_exceeded: return 503;
    case ErrorCode::provider_unavailable:
    case ErrorCode::remote_unavailable: return 502;
    default: return 500;
  }
}

inline Response error_response(int status, std::string_view code, std::string detail) {
  return {status, {{"error", code}, {"detail", std::move(detail)}}};
}

struct ServiceOptions {
  std::chrono::milliseconds ttl = std::chrono::minutes(30);
  std::size_t capacity = 10000;
  Clock clock = steady_now;
  std::string cors_origin = "*";
};

/// Transport-independent request handlers. Bodies are the parsed JSON of the
/// HTTP request; every handler returns a status and a JSON body.
class ConsultationService {
 public:
  ConsultationService(std::shared_ptr<const DiagnosticContext> ctx, EngineConfig config, ServiceOptions options = {},
                      std::shared_ptr<LlmProvider> provider = nullptr)
      : ctx_(std::move(ctx)),
        config_(config),
        options_(std::move(options)),
        provider_(std::move(provider)),
        store_(options_.ttl, options_.capacity, options_.clock) {
    config_.validate();
  }

  SessionStore& store() noexcept { return store_; }
  const ServiceOptions& options() const noexcept { return options_; }

  Response create_session(const json& body) {
    return guarded([&] {
      auto text = optional_string(body, "text");
      auto session = store_.create(Consultation(ctx_, config_, provider_));
      std::lock_guard lock(session->mutex);
      auto& c = session->consultation;
      json out{{"session_id", session->id}};
      if (text && !trim(*text).empty()) {
        out.update(message_json(c.submit_text(*text)));
      } else {
        out["greeting"] = "Hello. Please describe your symptoms, or answer the question below.";
      }
      out["phase"] = to_string(c.state().phase);
      out["state"] = state_snapshot(c.state());
      out["next_question"] = to_json(c.pending());
      out["phase_transition"] = c.entered_test_phase();
      return Response{201, out};
    });
  }

  Response post_message(const std::string& id, const json& body) {
    return with_session(id, [&](Consultation& c) {
      auto text = optional_string(body, "text");
      if (!text) throw Error(ErrorCode::invalid_config, "body needs a string field 'text'");
      json out = message_json(c.submit_text(*text));
      out["state"] = state_snapshot(c.state());
      out["next_question"] = to_json(c.pending());
      out["phase_transition"] = c.entered_test_phase();
      return Response{200, out};
    });
  }

  Response post_answer(const std::string& id, const json& body) {
    return with_session(id, [&](Consultation& c) {
      auto qid = optional_string(body, "question_id");
      auto raw = optional_string(body, "answer");
      if (!qid || !raw) throw Error(ErrorCode::invalid_config, "body needs 'question_id' and 'answer'");
      auto a = parse_answer(*raw);
      if (!a) throw Error(ErrorCode::invalid_config, "answer must be yes, no or unsure");
      if (std::holds_alternative<RiskQuestion>(c.pending())) c.answer_risk(*qid, *a);
      else c.answer(*qid, *a);
      return Response{200, {{"state", state_snapshot(c.state())},
                            {"next", to_json(c.pending())},
                            {"phase_transition", c.entered_test_phase()}}};
    });
  }

  Response post_test_result(const std::string& id, const json& body) {
    return with_session(id, [&](Consultation& c) {
      auto test_id = optional_string(body, "test_id");
      if (!test_id) throw Error(ErrorCode::invalid_config, "body needs 'test_id'");
      std::optional<double> value;
      const auto v = body.contains("value") ? body.at("value") : json(nullptr);
      if (v.is_number()) {
        value = v.get<double>();
        if (!std::isfinite(*value)) throw Error(ErrorCode::non_finite_value, *test_id);
      } else if (!(v.is_null() || (v.is_string() && to_lower(v.get<std::string>()) == "unknown"))) {
        throw Error(ErrorCode::invalid_config, "value must be a number or \"unknown\"");
      }
      json outcomes = json::array();
      for (const auto& o : c.submit_test(*test_id, value)) outcomes.push_back(to_json(o));
      return Response{200, {{"outcome", outcomes}, {"state", state_snapshot(c.state())}, {"next", to_json(c.pending())}}};
    });
  }

  Response get_state(const std::string& id) {
    return with_session(id, [&](Consultation& c) {
      return Response{200, {{"session_id", id}, {"state", state_snapshot(c.state())}, {"next", to_json(c.pending())}}};
    });
  }

  Response get_attribution(const std::string& id) {
    return with_session(id, [&](Consultation& c) {
      return Response{200, to_json(attribution_matrix(c.state(), ctx_->kb()))};
    });
  }

  Response get_report(const std::string& id) {
    return with_session(id, [&](Consultation& c) {
      const auto& r = c.finish();
      json out = to_json(r);
      out["text"] = render_report(r);
      out["phase"] = to_string(c.state().phase);
      return Response{200, out};
    });
  }

  Response healthz() const {
    return {200, {{"status", "ok"}, {"kb_diseases", ctx_->kb().size()}}};
  }

  Response kb_diseases() const {
    json list = json::array();
    for (const auto& d : ctx_->kb().diseases()) list.push_back({{"name", d.name}, {"category", to_string(d.category)}});
    return {200, {{"diseases", list}}};
  }

 private:
  static std::optional<std::string> optional_string(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) return std::nullopt;
    return body.at(key).get<std::string>();
  }

  static json message_json(const MessageOutcome& m) {
    json matched = json::array();
    for (const auto& r : m.matched)
      matched.push_back({{"phrase", r.user_phrase},
                         {"disease", r.disease},
                         {"canonical", r.canonical},
                         {"kind", to_string(r.kind)},
                         {"strength", r.strength},
                         {"similarity", r.similarity}});
    return {{"extracted", m.extraction.raw_phrases},
            {"matched", matched},
            {"rejected", m.extraction.rejected},
            {"confirmed", m.confirmed}};
  }

  template <class F>
  static Response guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(http_status(e.code()), to_string(e.code()), e.detail());
    } catch (const std::exception& e) {
      return error_response(500, "Internal", e.what());
    }
  }

  template <class F>
  Response with_session(const std::string& id, F&& f) {
    return guarded([&] {
      auto session = store_.get(id);
      std::lock_guard lock(session->mutex);
      return f(session->consultation);
    });
  }

  std::shared_ptr<const DiagnosticContext> ctx_;
  EngineConfig config_;
  ServiceOptions options_;
  std::shared_ptr<LlmProvider> provider_;
  SessionStore store_;
};

/// Registers the /api/v1 routes, /healthz and CORS handling on a server.
inline void mount_routes(httplib::Server& server, ConsultationService& service) {
  const std::string origin = service.options().cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req, httplib::Response& res, json& out) {
    if (req.body.empty()) {
      out = json::object();
      return true;
    }
    out = json::parse(req.body, nullptr, false);
    if (out.is_discarded() || !out.is_object()) {
      res.status = 400;
      res.set_content(json{{"error", "BadRequest"}, {"detail", "body must be a JSON object"}}.dump(),
                      "application/json");
      return false;
    }
    return true;
  };
  using Handler = Response (ConsultationService::*)(const std::string&, const json&);
  auto post = [&](const std::string& pattern, Handler h) {
    server.Post(pattern, [&service, h, send, parse](const httplib::Request& req, httplib::Response& res) {
      json body;
      if (!parse(req, res, body)) return;
      send(res, (service.*h)(req.matches[1], body));
    });
  };
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/healthz", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.healthz());
  });
  server.Get("/api/v1/kb/diseases", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.kb_diseases());
  });
  server.Post("/api/v1/sessions", [&service, send, parse](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse(req, res, body)) return;
    send(res, service.create_session(body));
  });
  post(R"(/api/v1/sessions/([0-9a-f]+)/message)", &ConsultationService::post_message);
  post(R"(/api/v1/sessions/([0-9a-f]+)/answer)", &ConsultationService::post_answer);
  post(R"(/api/v1/sessions/([0-9a-f]+)/test-result)", &ConsultationService::post_test_result);
  server.Get(R"(/api/v1/sessions/([0-9a-f]+)/state)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_state(req.matches[1]));
  });
  server.Get(R"(/api/v1/sessions/([0-9a-f]+)/attribution)",
             [&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.get_attribution(req.matches[1]));
             });
  server.Get(R"(/api/v1/sessions/([0-9a-f]+)/report)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_report(req.matches[1]));
  });
}

}  // namespace diagnosys
