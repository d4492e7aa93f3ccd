#include "mgcg/serve/service.hpp"

#include <cstdio>
#include <fstream>

#include "httplib.h"
#include "mgcg/errors.hpp"

namespace mgcg::serve {

struct ChatService::Server {
  httplib::Server http;
};

namespace {

HttpResponse reply(int status, nlohmann::json body) {
  body["v"] = kProtocolVersion;
  return {status, std::move(body)};
}

HttpResponse fail(int status, const std::string& message) { return reply(status, {{"error", message}}); }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  const auto end = path.find('?');
  for (char c : path.substr(0, end)) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw SchemaError("request body is not valid JSON");
  if (!j.is_object()) throw SchemaError("request body must be a JSON object");
  return j;
}

nlohmann::json goal_brief(const std::optional<Goal>& g) {
  if (!g) return nullptr;
  return {{"type", std::string(to_string(g->type))}, {"topic", g->topic}};
}

}  // namespace

ChatService::ChatService(std::map<std::string, Pipeline> models, std::vector<ServiceTask> tasks,
                         ServiceConfig config)
    : models_(std::move(models)), tasks_(std::move(tasks)), config_(std::move(config)) {
  if (models_.empty()) throw ConfigError("service: no models bound");
  if (tasks_.empty()) throw ConfigError("service: no task templates");
  for (const auto& [name, p] : models_) p.check();
  load_ratings();
}

ChatService::~ChatService() { stop(); }

void ChatService::load_ratings() {
  if (config_.ratings_path.empty()) return;
  std::ifstream in(config_.ratings_path);
  if (!in) return;  // a fresh log
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("model") || !j.contains("rating")) {
      throw ParseError(n, "malformed rating record in " + config_.ratings_path);
    }
    ratings_.push_back({j.at("model").get<std::string>(), Rating::from_json(j.at("rating"))});
  }
}

void ChatService::persist(const Session& s, const Rating& r) {
  if (config_.ratings_path.empty()) return;
  nlohmann::json rec{{"v", kProtocolVersion},
                     {"session_id", s.id()},
                     {"model", s.model()},
                     {"template_id", s.task_template().id},
                     {"rating", r.to_json()},
                     {"transcript", s.state_json().at("transcript")}};
  std::ofstream out(config_.ratings_path, std::ios::app);
  if (!out) throw ConfigError("cannot append to " + config_.ratings_path);
  out << rec.dump() << '\n';
}

std::shared_ptr<ChatService::Entry> ChatService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

std::size_t ChatService::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

HttpResponse ChatService::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() < 2 || parts[0] != "api") return fail(404, "no route " + path);
    if (parts[1] == "session") {
      if (parts.size() == 2) {
        if (method != "POST") return fail(405, "use POST");
        return create_session(parse_body(body));
      }
      if (parts.size() == 4) {
        const auto& id = parts[2];
        const auto& leaf = parts[3];
        if (leaf == "message") {
          if (method != "POST") return fail(405, "use POST");
          return post_message(id, parse_body(body));
        }
        if (leaf == "state") {
          if (method != "GET") return fail(405, "use GET");
          return get_state(id);
        }
        if (leaf == "rating") {
          if (method != "POST") return fail(405, "use POST");
          return post_rating(id, parse_body(body));
        }
      }
    } else if (parts[1] == "ratings" && parts.size() == 3 && parts[2] == "summary") {
      if (method != "GET") return fail(405, "use GET");
      return ratings_summary();
    }
    return fail(404, "no route " + path);
  } catch (const NotFoundError& e) {
    return fail(404, e.what());
  } catch (const SchemaError& e) {
    return fail(400, e.what());
  } catch (const UnknownEntityError& e) {
    return fail(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(400, e.what());
  } catch (const ConflictError& e) {
    return fail(409, e.what());
  } catch (const SessionClosedError& e) {
    return fail(409, e.what());
  } catch (const std::exception& e) {
    return fail(500, e.what());
  }
}

HttpResponse ChatService::create_session(const nlohmann::json& body) {
  if (!body.contains("model") || !body.at("model").is_string()) throw SchemaError("session: model is required");
  const auto model = body.at("model").get<std::string>();
  auto mit = models_.find(model);
  if (mit == models_.end()) throw SchemaError("session: unknown model " + model);

  const auto n = counter_.fetch_add(1);
  const auto token = mix_seed(config_.seed, n);
  const ServiceTask* task = nullptr;
  if (body.contains("template_id") && !body.at("template_id").is_null()) {
    const auto want = body.at("template_id").get<std::string>();
    for (const auto& t : tasks_) {
      if (t.tmpl.id == want) task = &t;
    }
    if (!task) throw NotFoundError("unknown template " + want);
  } else {
    task = &tasks_[token % tasks_.size()];
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(token));
  auto entry = std::make_shared<Entry>(Session(buf, model, task->tmpl, task->profile));

  nlohmann::json out{{"session_id", entry->session.id()},
                     {"model", model},
                     {"template_id", task->tmpl.id},
                     {"goals", nlohmann::json::array()}};
  for (const auto& g : task->tmpl.goals) out["goals"].push_back(goal_brief(g));
  {
    std::lock_guard lock(entry->mu);
    if (entry->session.bot_opens()) out["opening_turn"] = open_turn(entry->session, mit->second).to_json();
  }
  {
    std::lock_guard lock(sessions_mu_);
    sessions_.emplace(entry->session.id(), entry);
  }
  return reply(201, std::move(out));
}

HttpResponse ChatService::post_message(const std::string& id, const nlohmann::json& body) {
  auto entry = find(id);
  if (!body.contains("text") || !body.at("text").is_string()) throw SchemaError("message: text is required");
  const auto text = body.at("text").get<std::string>();
  if (tokenize(text).empty()) throw SchemaError("message: text is empty");
  std::lock_guard lock(entry->mu);
  const auto& pipeline = models_.at(entry->session.model());
  const auto turn = respond(entry->session, pipeline, text);
  auto used = nlohmann::json::array();
  for (const auto& k : turn.used_knowledge) {
    used.push_back({{"subject", k.subject}, {"predicate", k.predicate}, {"object", k.object}});
  }
  return reply(200, {{"reply", turn.text},
                     {"active_goal", goal_brief(turn.goal)},
                     {"completion_prob", turn.completion_prob},
                     {"used_knowledge", used},
                     {"turn", turn.to_json()}});
}

HttpResponse ChatService::get_state(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mu);
  return reply(200, entry->session.state_json());
}

HttpResponse ChatService::post_rating(const std::string& id, const nlohmann::json& body) {
  auto entry = find(id);
  auto r = Rating::from_json(body);
  std::lock_guard lock(entry->mu);
  for (const auto& t : r.turns) {
    if (t.turn >= entry->session.transcript().size()) {
      throw SchemaError("rating: turn " + std::to_string(t.turn) + " is outside the transcript");
    }
  }
  entry->session.set_rating(r);
  entry->session.close();
  {
    std::lock_guard rl(ratings_mu_);
    persist(entry->session, r);
    ratings_.push_back({entry->session.model(), r});
  }
  return reply(201, {{"session_id", id}, {"stored", true}});
}

std::map<std::string, ModelSummary> ChatService::summary() const {
  std::lock_guard lock(ratings_mu_);
  std::map<std::string, ModelSummary> out;
  for (const auto& s : ratings_) {
    auto& m = out[s.model];
    ++m.ratings;
    m.goal_success += s.rating.goal_success;
    m.coherence += s.rating.coherence;
    for (const auto& t : s.rating.turns) {
      ++m.rated_turns;
      m.fluency += t.fluency;
      m.appropriateness += t.appropriateness;
      m.informativeness += t.informativeness;
      m.proactivity += t.proactivity;
    }
  }
  for (auto& [name, m] : out) {
    m.goal_success /= static_cast<double>(m.ratings);
    m.coherence /= static_cast<double>(m.ratings);
    if (m.rated_turns) {
      const auto t = static_cast<double>(m.rated_turns);
      m.fluency /= t;
      m.appropriateness /= t;
      m.informativeness /= t;
      m.proactivity /= t;
    }
  }
  return out;
}

nlohmann::json summary_to_json(const std::map<std::string, ModelSummary>& summary) {
  auto models = nlohmann::json::object();
  for (const auto& [name, m] : summary) {
    nlohmann::json j{{"ratings", m.ratings}, {"goal_success", m.goal_success}, {"coherence", m.coherence}};
    if (m.rated_turns) {
      j["turn_level"] = {{"turns", m.rated_turns},
                         {"fluency", m.fluency},
                         {"appropriateness", m.appropriateness},
                         {"informativeness", m.informativeness},
                         {"proactivity", m.proactivity}};
    }
    models[name] = j;
  }
  return {{"models", models}};
}

HttpResponse ChatService::ratings_summary() const { return reply(200, summary_to_json(summary())); }

namespace {

void install(httplib::Server& http, ChatService& svc) {
  // Regular handlers (not the pre-routing hook) so that request bodies have
  // been read before handle() sees them.
  const auto dispatch = [&svc](const httplib::Request& req, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    if (req.method == "OPTIONS") {
      res.status = 204;
      return;
    }
    const auto r = svc.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  const std::string any = R"(/.*)";
  http.Get(any, dispatch);
  http.Post(any, dispatch);
  http.Put(any, dispatch);
  http.Patch(any, dispatch);
  http.Delete(any, dispatch);
  http.Options(any, dispatch);
}

}  // namespace

bool ChatService::listen(const std::string& host, int port) {
  if (!server_) {
    server_ = std::make_unique<Server>();
    install(server_->http, *this);
  }
  return server_->http.listen(host, port);
}

int ChatService::bind_any_port(const std::string& host) {
  if (!server_) {
    server_ = std::make_unique<Server>();
    install(server_->http, *this);
  }
  const int port = server_->http.bind_to_any_port(host);
  return port < 0 ? 0 : port;
}

bool ChatService::listen_bound() { return server_ && server_->http.listen_after_bind(); }

void ChatService::stop() {
  if (server_) server_->http.stop();
}

}  // namespace mgcg::serve
