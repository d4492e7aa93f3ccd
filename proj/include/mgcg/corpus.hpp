#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/dialog.hpp"

namespace mgcg {

struct DialogRecord {
  std::string seeker_id;
  std::size_t dialog_index = 0;
  SeekerProfile profile;        // before the dialog
  SeekerProfile profile_after;  // after the dialog's outcomes
  std::vector<Goal> goals;
  std::vector<InteractionOp> operations;  // per goal; may be empty
  std::vector<Initiator> initiators;      // per goal; may be empty
  std::vector<KnowledgeTriple> knowledge;
  std::vector<Utterance> turns;

  TaskTemplate task_template() const;
};

struct TrainingExample {
  std::string seeker_id;
  std::size_t dialog_index = 0;
  std::size_t turn_index = 0;
  std::vector<Utterance> context;
  Utterance response;
  Goal goal;                      // ground-truth goal of the response
  Goal previous_goal;             // goal of the last context utterance
  std::vector<Goal> goal_history; // g_0 .. g_{t-1}
  bool completion_label = false;  // previous goal finished before the response
  std::vector<KnowledgeTriple> knowledge;
  SeekerProfile profile;
  bool goal_masked = false;
  bool knowledge_masked = false;
};

struct CandidatePool {
  std::vector<std::string> candidates;
  std::size_t gold_index = 0;
};

/// Record-level validation (goal indices in range and non-decreasing).
/// Throws SchemaError.
void validate_record(const DialogRecord& record);

nlohmann::json record_to_json(const DialogRecord& record);
DialogRecord record_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const SeekerProfile& p);
SeekerProfile profile_from_json(const nlohmann::json& j);

/// Converts one public-release style record ("conversation", "goal",
/// "knowledge"/"kg", "user_profile") into a DialogRecord.
DialogRecord record_from_release_json(const nlohmann::json& j, std::size_t line);

/// Loads canonical JSON Lines (or release-format lines), validates each
/// record and returns them sorted by (seeker_id, dialog_index). Throws
/// SchemaError with the line locus.
std::vector<DialogRecord> load_corpus(const std::string& path);
void save_corpus(const std::vector<DialogRecord>& records, const std::string& path);

struct CorpusStats {
  std::size_t dialogs = 0;
  std::size_t utterances = 0;
  std::size_t seekers = 0;
  std::map<DialogType, std::size_t> sub_dialogs;
  std::size_t recommended = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

CorpusStats corpus_stats(const std::vector<DialogRecord>& records);

struct SplitRatios {
  double train = 0.65;
  double dev = 0.10;
  double test = 0.25;
};

struct CorpusSplit {
  std::vector<DialogRecord> train;
  std::vector<DialogRecord> dev;
  std::vector<DialogRecord> test;
  std::vector<std::string> train_seekers;
  std::vector<std::string> dev_seekers;
  std::vector<std::string> test_seekers;
};

/// Seeker-level split: dev and test counts are floored (at least one seeker
/// each), the remainder goes to train.
CorpusSplit split_by_seeker(const std::vector<DialogRecord>& records, SplitRatios ratios,
                            std::uint64_t seed);

/// One example per recommender turn with a non-empty context. The knowledge
/// pool is selected from the record's knowledge subset.
std::vector<TrainingExample> extract_training_examples(
    const DialogRecord& record, std::size_t knowledge_limit = kDefaultKnowledgeLimit);

std::vector<TrainingExample> extract_training_examples(
    const std::vector<DialogRecord>& records,
    std::size_t knowledge_limit = kDefaultKnowledgeLimit);

inline constexpr std::size_t kPoolSize = 10;

/// Gold plus nine distinct distractors sampled from `train_responses`
/// (repeats in the list raise a response's chance of being drawn).
/// Throws ConfigError when fewer than nine usable distractors exist.
CandidatePool build_candidate_pool(const TrainingExample& example,
                                   const std::vector<std::string>& train_responses,
                                   std::uint64_t seed);

/// Every recommender response, repeats kept, in corpus order.
std::vector<std::string> response_bank(const std::vector<TrainingExample>& examples);

inline constexpr const char* kUnkToken = "[UNK]";

/// Replaces the goal with UNK and/or the knowledge with the empty sentinel.
TrainingExample ablate(const TrainingExample& example, bool drop_goal, bool drop_knowledge);

}  // namespace mgcg
