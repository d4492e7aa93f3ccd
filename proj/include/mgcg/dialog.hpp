#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgcg/knowledge.hpp"

namespace mgcg {

enum class DialogType { QA = 0, Chitchat = 1, Recommendation = 2, Task = 3 };

inline constexpr std::array<DialogType, 4> kDialogTypes = {
    DialogType::QA, DialogType::Chitchat, DialogType::Recommendation, DialogType::Task};

std::string_view to_string(DialogType type);
/// Throws SchemaError on anything but the four canonical names.
DialogType parse_dialog_type(std::string_view name);

enum class Speaker { Seeker, Recommender };

std::string_view to_string(Speaker speaker);
Speaker parse_speaker(std::string_view name);

struct Goal {
  DialogType type = DialogType::Chitchat;
  std::string topic;
  std::string description;

  /// Goals compare by (type, topic); descriptions are guidance text only.
  bool operator==(const Goal& other) const {
    return type == other.type && topic == other.topic;
  }
};

/// Ordered goals plus a cursor; the prefix before the cursor is the goal
/// history. Value type: advancing returns a new sequence.
class GoalSequence {
 public:
  explicit GoalSequence(std::vector<Goal> goals, std::size_t cursor = 0);

  std::size_t size() const { return goals_.size(); }
  std::size_t cursor() const { return cursor_; }
  bool exhausted() const { return cursor_ == goals_.size(); }
  const std::vector<Goal>& goals() const { return goals_; }
  const Goal& operator[](std::size_t i) const { return goals_.at(i); }
  /// Throws AtEndError when exhausted.
  const Goal& current() const;
  std::span<const Goal> history() const { return {goals_.data(), cursor_}; }

 private:
  std::vector<Goal> goals_;
  std::size_t cursor_;
};

/// Throws AtEndError when the cursor is already at the end.
GoalSequence advance_goal(const GoalSequence& seq);

struct Utterance {
  Speaker speaker = Speaker::Seeker;
  std::string text;
  std::size_t goal_index = 0;
  /// Knowledge the utterance realizes, when known (synthetic corpora).
  std::vector<KnowledgeTriple> knowledge;
};

struct DialogueContext {
  std::vector<Utterance> utterances;
};

enum class Occupation { Student, Worker, Retirement };

std::string_view to_string(Occupation occupation);
Occupation parse_occupation(std::string_view name);

struct SeekerProfile {
  std::string seeker_id;
  std::string name;
  std::string gender;
  std::string age_range;
  std::string city;
  Occupation occupation = Occupation::Student;
  std::vector<std::string> preferred_domains;
  std::vector<std::string> disliked_domains;
  std::vector<std::string> seed_entities;
  std::vector<std::string> accepted_entities;
  std::vector<std::string> rejected_entities;

  bool operator==(const SeekerProfile&) const = default;
};

enum class Outcome { Accepted, Rejected };

/// Appends outcomes to the matching lists, moving an entity out of the
/// opposite list. Throws ConflictError if one batch both accepts and rejects
/// an entity, and UnknownEntityError when a graph is given and lacks it.
SeekerProfile update_profile(const SeekerProfile& profile,
                             const std::vector<std::pair<std::string, Outcome>>& outcomes,
                             const KnowledgeGraph* graph = nullptr);

/// Who opens a goal's sub-dialog.
enum class Initiator { Seeker, Recommender };

/// Interaction behaviour attached to a recommendation goal.
enum class InteractionOp { None, Accept, RejectInitial, NewTopic, AskQuestion };

std::string_view to_string(InteractionOp op);
InteractionOp parse_interaction_op(std::string_view name);

struct TaskTemplate {
  std::string id;
  std::vector<Goal> goals;
  std::vector<Initiator> initiators;
  std::vector<InteractionOp> operations;

  GoalSequence sequence() const { return GoalSequence(goals); }
};

enum class ViolationKind {
  TopicNotInGraph,
  FinalGoalNotRecommendation,
  RecommendsRejectedEntity,
  UnnaturalTransition,
};

struct Violation {
  ViolationKind kind;
  std::size_t goal_index;
  std::string message;
  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  bool operator==(const ValidationReport&) const = default;
};

inline constexpr int kNaturalTransitionHops = 2;

/// Checks a goal sequence against the graph and the seeker profile. Pure.
ValidationReport validate_goal_sequence(const GoalSequence& seq, const KnowledgeGraph& graph,
                                        const SeekerProfile& profile);

/// Tokens a goal contributes to model inputs: a type marker followed by the
/// topic tokens.
Tokens goal_tokens(const Goal& goal);
std::string type_marker(DialogType type);

}  // namespace mgcg
