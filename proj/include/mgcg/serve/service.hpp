#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/orchestrator.hpp"

namespace mgcg::serve {

inline constexpr int kProtocolVersion = 1;

/// A task template together with the seeker it was written for.
struct ServiceTask {
  TaskTemplate tmpl;
  SeekerProfile profile;
};

struct ServiceConfig {
  /// Append-only JSON Lines rating log; empty keeps ratings in memory only.
  std::string ratings_path;
  std::uint64_t seed = 1;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

struct ModelSummary {
  std::size_t ratings = 0;
  double goal_success = 0.0;
  double coherence = 0.0;
  std::size_t rated_turns = 0;
  double fluency = 0.0;
  double appropriateness = 0.0;
  double informativeness = 0.0;
  double proactivity = 0.0;
};

/// Session service behind the chat console. Routing lives in handle() so
/// the protocol can be exercised without a socket; listen() binds it to an
/// HTTP server. Models are shared read-only; each session is mutated under
/// its own mutex.
class ChatService {
 public:
  ChatService(std::map<std::string, Pipeline> models, std::vector<ServiceTask> tasks,
              ServiceConfig config = {});

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Mean rubric scores per model over every persisted rating.
  std::map<std::string, ModelSummary> summary() const;

  /// Blocks serving HTTP until stop() is called. Returns false when the
  /// address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it (0 on failure); serve with
  /// listen_bound().
  int bind_any_port(const std::string& host);
  bool listen_bound();
  void stop();

  std::size_t session_count() const;

  ~ChatService();

 private:
  struct Entry {
    std::mutex mu;
    Session session;
    explicit Entry(Session s) : session(std::move(s)) {}
  };
  struct Stored {
    std::string model;
    Rating rating;
  };

  HttpResponse create_session(const nlohmann::json& body);
  HttpResponse post_message(const std::string& id, const nlohmann::json& body);
  HttpResponse get_state(const std::string& id);
  HttpResponse post_rating(const std::string& id, const nlohmann::json& body);
  HttpResponse ratings_summary() const;
  std::shared_ptr<Entry> find(const std::string& id) const;
  void load_ratings();
  void persist(const Session& s, const Rating& r);

  std::map<std::string, Pipeline> models_;
  std::vector<ServiceTask> tasks_;
  ServiceConfig config_;
  std::atomic<std::uint64_t> counter_{0};

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;

  mutable std::mutex ratings_mu_;
  std::vector<Stored> ratings_;

  struct Server;
  std::unique_ptr<Server> server_;
};

nlohmann::json summary_to_json(const std::map<std::string, ModelSummary>& summary);

}  // namespace mgcg::serve
