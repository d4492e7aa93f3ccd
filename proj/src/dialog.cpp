#include "mgcg/dialog.hpp"

#include <algorithm>
#include <set>

#include "mgcg/errors.hpp"

namespace mgcg {

std::string_view to_string(DialogType type) {
  switch (type) {
    case DialogType::QA: return "qa";
    case DialogType::Chitchat: return "chitchat";
    case DialogType::Recommendation: return "recommendation";
    case DialogType::Task: return "task";
  }
  return "chitchat";
}

DialogType parse_dialog_type(std::string_view name) {
  for (auto t : kDialogTypes) {
    if (to_string(t) == name) return t;
  }
  throw SchemaError("unknown dialog type \"" + std::string(name) + "\"");
}

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::Seeker ? "seeker" : "recommender";
}

Speaker parse_speaker(std::string_view name) {
  if (name == "seeker") return Speaker::Seeker;
  if (name == "recommender") return Speaker::Recommender;
  throw SchemaError("unknown speaker \"" + std::string(name) + "\"");
}

std::string_view to_string(Occupation occupation) {
  switch (occupation) {
    case Occupation::Student: return "student";
    case Occupation::Worker: return "worker";
    case Occupation::Retirement: return "retirement";
  }
  return "student";
}

Occupation parse_occupation(std::string_view name) {
  if (name == "student") return Occupation::Student;
  if (name == "worker") return Occupation::Worker;
  if (name == "retirement") return Occupation::Retirement;
  throw SchemaError("unknown occupation \"" + std::string(name) + "\"");
}

std::string_view to_string(InteractionOp op) {
  switch (op) {
    case InteractionOp::None: return "none";
    case InteractionOp::Accept: return "accept";
    case InteractionOp::RejectInitial: return "reject_initial";
    case InteractionOp::NewTopic: return "new_topic";
    case InteractionOp::AskQuestion: return "ask_question";
  }
  return "none";
}

InteractionOp parse_interaction_op(std::string_view name) {
  for (auto op : {InteractionOp::None, InteractionOp::Accept, InteractionOp::RejectInitial,
                  InteractionOp::NewTopic, InteractionOp::AskQuestion}) {
    if (to_string(op) == name) return op;
  }
  throw SchemaError("unknown interaction operation \"" + std::string(name) + "\"");
}

GoalSequence::GoalSequence(std::vector<Goal> goals, std::size_t cursor)
    : goals_(std::move(goals)), cursor_(cursor) {
  if (goals_.empty()) throw SchemaError("goal sequence must contain at least one goal");
  if (cursor_ > goals_.size()) throw SchemaError("goal cursor past the end of the sequence");
  for (const auto& g : goals_) {
    if (g.topic.empty()) throw SchemaError("goal topic must be non-empty");
  }
}

const Goal& GoalSequence::current() const {
  if (exhausted()) throw AtEndError("goal sequence exhausted");
  return goals_[cursor_];
}

GoalSequence advance_goal(const GoalSequence& seq) {
  if (seq.exhausted()) throw AtEndError("cannot advance an exhausted goal sequence");
  return GoalSequence(seq.goals(), seq.cursor() + 1);
}

SeekerProfile update_profile(const SeekerProfile& profile,
                             const std::vector<std::pair<std::string, Outcome>>& outcomes,
                             const KnowledgeGraph* graph) {
  std::set<std::string> accepted_now;
  std::set<std::string> rejected_now;
  for (const auto& [entity, outcome] : outcomes) {
    if (graph && !graph->contains_entity(entity)) throw UnknownEntityError(entity);
    (outcome == Outcome::Accepted ? accepted_now : rejected_now).insert(entity);
  }
  for (const auto& e : accepted_now) {
    if (rejected_now.count(e)) {
      throw ConflictError("entity both accepted and rejected in one batch: " + e);
    }
  }

  SeekerProfile next = profile;
  auto erase = [](std::vector<std::string>& list, const std::string& e) {
    list.erase(std::remove(list.begin(), list.end(), e), list.end());
  };
  auto append = [](std::vector<std::string>& list, const std::string& e) {
    if (std::find(list.begin(), list.end(), e) == list.end()) list.push_back(e);
  };
  for (const auto& [entity, outcome] : outcomes) {
    if (outcome == Outcome::Accepted) {
      erase(next.rejected_entities, entity);
      append(next.accepted_entities, entity);
    } else {
      erase(next.accepted_entities, entity);
      append(next.rejected_entities, entity);
    }
  }
  return next;
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

ValidationReport validate_goal_sequence(const GoalSequence& seq, const KnowledgeGraph& graph,
                                        const SeekerProfile& profile) {
  ValidationReport report;
  const auto& goals = seq.goals();
  for (std::size_t i = 0; i < goals.size(); ++i) {
    if (!graph.contains_entity(goals[i].topic)) {
      report.violations.push_back({ViolationKind::TopicNotInGraph, i,
                                   "topic \"" + goals[i].topic + "\" not in knowledge graph"});
    }
    if (goals[i].type == DialogType::Recommendation &&
        std::find(profile.rejected_entities.begin(), profile.rejected_entities.end(),
                  goals[i].topic) != profile.rejected_entities.end()) {
      report.violations.push_back({ViolationKind::RecommendsRejectedEntity, i,
                                   "recommends previously rejected \"" + goals[i].topic + "\""});
    }
  }
  if (goals.back().type != DialogType::Recommendation) {
    report.violations.push_back({ViolationKind::FinalGoalNotRecommendation, goals.size() - 1,
                                 "final goal is not a recommendation"});
  }
  for (std::size_t i = 1; i < goals.size(); ++i) {
    const auto& a = goals[i - 1].topic;
    const auto& b = goals[i].topic;
    if (!graph.contains_entity(a) || !graph.contains_entity(b)) continue;
    if (!graph.distance(a, b, kNaturalTransitionHops)) {
      report.violations.push_back({ViolationKind::UnnaturalTransition, i,
                                   "no path of length <= 2 from \"" + a + "\" to \"" + b + "\""});
    }
  }
  return report;
}

std::string type_marker(DialogType type) { return "<" + std::string(to_string(type)) + ">"; }

Tokens goal_tokens(const Goal& goal) {
  Tokens out{type_marker(goal.type)};
  for (auto&& t : tokenize(goal.topic)) out.push_back(std::move(t));
  return out;
}

}  // namespace mgcg
