#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/generator.hpp"
#include "mgcg/metrics.hpp"
#include "mgcg/planner.hpp"
#include "mgcg/ranker.hpp"

namespace mgcg {

/// Planner plus one responder over a shared graph. Exactly one of `ranker`
/// and `generator` is set. Models are borrowed and used read-only.
struct Pipeline {
  const KnowledgeGraph* graph = nullptr;
  const GoalPlanner* planner = nullptr;
  const Ranker* ranker = nullptr;
  const Generator* generator = nullptr;
  /// Retrieval candidates (training responses).
  std::vector<std::string> response_bank;
  /// Bank entries scored by the ranker per turn, after lexical prefiltering.
  std::size_t retrieval_candidates = 20;
  std::size_t beam = 0;  // 0: generator default
  std::size_t knowledge_limit = kDefaultKnowledgeLimit;
  CompletionStub completion_stub;

  /// Throws ConfigError when the wiring is incomplete.
  void check() const;
  std::string responder_name() const;
};

struct TurnRecord {
  Speaker speaker = Speaker::Seeker;
  std::string text;
  // bot turns only
  std::optional<Goal> goal;
  std::size_t template_index = 0;
  double completion_prob = 0.5;
  bool planned = false;  // false for the opening goal taken from the template
  std::vector<KnowledgeTriple> knowledge;
  std::vector<double> knowledge_weights;
  std::vector<KnowledgeTriple> used_knowledge;

  nlohmann::json to_json() const;
};

struct TurnRating {
  std::size_t turn = 0;
  int fluency = 0;
  int appropriateness = 0;
  int informativeness = 0;
  int proactivity = 0;
};

struct Rating {
  int goal_success = 0;
  int coherence = 0;
  std::vector<TurnRating> turns;

  /// Throws SchemaError on missing fields or out-of-range values
  /// ({0,1,2}; proactivity {-1,0,1}).
  static Rating from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class Session {
 public:
  Session(std::string id, std::string model, TaskTemplate tmpl, SeekerProfile profile);

  const std::string& id() const { return id_; }
  const std::string& model() const { return model_; }
  const TaskTemplate& task_template() const { return template_; }
  const SeekerProfile& profile() const { return profile_; }
  const std::vector<TurnRecord>& transcript() const { return transcript_; }
  const std::vector<Utterance>& context() const { return context_; }
  std::size_t template_cursor() const { return cursor_; }
  const std::optional<Goal>& active_goal() const { return active_; }
  const std::vector<Goal>& goal_history() const { return history_; }
  bool closed() const { return closed_; }
  void close() { closed_ = true; }
  const std::optional<Rating>& rating() const { return rating_; }
  /// ConflictError when already rated.
  void set_rating(Rating r);
  /// True when the template's first goal is opened by the recommender.
  bool bot_opens() const;

  nlohmann::json state_json() const;

 private:
  friend TurnRecord respond(Session&, const Pipeline&, const std::string&);
  friend TurnRecord open_turn(Session&, const Pipeline&);

  std::string id_;
  std::string model_;
  TaskTemplate template_;
  SeekerProfile profile_;
  std::vector<TurnRecord> transcript_;
  std::vector<Utterance> context_;
  std::vector<Goal> history_;
  std::optional<Goal> active_;
  std::size_t cursor_ = 0;
  bool closed_ = false;
  std::optional<Rating> rating_;
};

/// Appends the user turn and a bot turn. The first bot turn takes the
/// template's first goal; later turns follow plan_next. Throws
/// SessionClosedError on a closed session.
TurnRecord respond(Session& session, const Pipeline& pipeline, const std::string& user_utterance);
/// Bot turn with no user input (recommender-initiated opening).
TurnRecord open_turn(Session& session, const Pipeline& pipeline);

struct RolloutEvent {
  std::size_t turn = 0;
  std::string kind;  // completed | failed | rejection | cap
  std::size_t goal_index = 0;
  std::string topic;
};

struct RolloutResult {
  std::string template_id;
  Rollout goals;
  std::vector<TurnRecord> transcript;
  std::vector<RolloutEvent> events;
  bool capped = false;
};

inline constexpr std::size_t kTurnCap = 40;

/// Scripted seeker following the template: asks the QA questions, reacts to
/// recommendations with the goal's interaction operation, and moves on once
/// the goal's completion criterion fires (or after `patience` bot turns).
/// Stops at template exhaustion or after `turn_cap` utterances.
RolloutResult run_simulated_dialog(const Pipeline& pipeline, const TaskTemplate& tmpl,
                                   const SeekerProfile& profile, std::uint64_t seed,
                                   std::size_t turn_cap = kTurnCap, std::size_t patience = 3);

}  // namespace mgcg
