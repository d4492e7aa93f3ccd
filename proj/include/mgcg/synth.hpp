#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgcg/corpus.hpp"
#include "mgcg/rng.hpp"

namespace mgcg {

struct SynthConfig {
  std::size_t n_seekers = 50;
  std::size_t dialogs_per_seeker = 4;
  std::size_t graph_size = 160;
  std::uint64_t seed = 7;
};

/// High-level goal of a skeleton: a dialog type and a domain.
struct SkeletonGoal {
  DialogType type;
  std::string domain;
};

struct GoalSkeleton {
  std::string name;
  std::vector<SkeletonGoal> goals;
};

/// The twenty built-in high-level goal sequences (hand-written, not the
/// original annotation list).
const std::vector<GoalSkeleton>& goal_skeletons();

struct SyntheticCorpus {
  KnowledgeGraph graph;
  std::vector<DialogRecord> records;
  CorpusStats stats;
};

/// Generates a knowledge graph over the seven domains, seeker profiles,
/// entity-level task templates and template-realized dialogs. Deterministic
/// in the config. Throws ConfigError for degenerate sizes.
SyntheticCorpus generate_synthetic_corpus(const SynthConfig& config);

/// Writes dialogs.jsonl, knowledge.jsonl and entities.jsonl under `dir`.
void save_synthetic_corpus(const SyntheticCorpus& corpus, const std::string& dir);
/// Reads the three files written by save_synthetic_corpus.
SyntheticCorpus load_synthetic_corpus(const std::string& dir);

/// Phrase realization shared by the corpus generator and the scripted
/// seeker. Every seeker utterance that closes a goal carries one of the
/// closing phrases; no other seeker utterance does.
namespace phrases {

std::string attribute_phrase(const std::string& predicate);
/// Declarative sentence for a fact, lower-case initial, no final period.
std::string statement(const KnowledgeTriple& fact);
std::string seeker_question(const KnowledgeTriple& fact);
std::string recommender_answer(const KnowledgeTriple& fact);
std::string seeker_greeting();
std::string seeker_closing(DialogType type, const std::string& topic, Rng& rng);
std::string seeker_accept(const std::string& topic, Rng& rng);
std::string seeker_reject(const std::string& topic, Rng& rng);
std::string seeker_new_topic(const std::string& topic);
std::string seeker_more(const std::string& topic, Rng& rng);
std::string seeker_task_request(const std::string& domain, const std::string& topic);
std::string recommender_farewell(Rng& rng);

}  // namespace phrases

}  // namespace mgcg
