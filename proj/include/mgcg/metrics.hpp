#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/dialog.hpp"
#include "mgcg/knowledge.hpp"
#include "mgcg/ranker.hpp"

namespace mgcg {

/// Sentence BLEU over 1- and 2-grams with brevity penalty. The smoothed form
/// adds one to the numerator and denominator of both precisions. Empty
/// hypothesis gives 0; empty reference raises DomainError.
double bleu2(const Tokens& hypothesis, const Tokens& reference, bool smoothed = true);

/// Harmonic mean of multiset token precision and recall. Empty hypothesis
/// gives 0; empty reference raises DomainError.
double f1(const Tokens& hypothesis, const Tokens& reference);
/// Tokenizes both sides first (CJK per character).
double f1_text(const std::string& hypothesis, const std::string& reference);

/// Distinct bigrams over total bigrams across all hypotheses; 0 when there
/// are no bigrams.
double dist2(const std::vector<Tokens>& hypotheses);

struct KnowledgeTurn {
  std::string hypothesis;
  std::vector<KnowledgeTriple> gold;
  /// Other knowledge available at the turn; objects of these found in the
  /// hypothesis count as predictions too.
  std::vector<KnowledgeTriple> candidates;
};

struct KnowledgePrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t dialogs = 0;  // dialogs with at least one gold triple
};

/// True if the object of `triple` occurs as a token run in `hypothesis`.
bool knowledge_used(const Tokens& hypothesis, const KnowledgeTriple& triple);

/// Per dialog: P = used gold objects / knowledge objects mentioned,
/// R = used gold objects / gold objects, F1 from those two; each is then
/// averaged over dialogs. Averaged F1 need not lie between averaged P and R.
KnowledgePrf knowledge_prf(const std::vector<std::vector<KnowledgeTurn>>& dialogs);

double hits_at_k(const std::vector<std::size_t>& gold_ranks, std::size_t k);
double hits_at_k(const std::vector<RankedList>& lists, std::size_t k);

struct RolloutGoal {
  DialogType type = DialogType::Chitchat;
  std::string topic;
  bool completed = false;
  bool knowledge_used = false;
};
using Rollout = std::vector<RolloutGoal>;

struct GoalCounts {
  std::size_t failed = 0;
  std::size_t completed = 0;
  std::size_t knowledge_used = 0;
};

struct GoalCompletionTable {
  std::map<DialogType, GoalCounts> by_type;
  GoalCounts overall;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

GoalCompletionTable goal_completion_analysis(const std::vector<Rollout>& rollouts);

struct MetricReport {
  std::string model;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double f1 = 0.0;  // fraction
  double bleu2 = 0.0;
  std::optional<double> ppl;
  double dist2 = 0.0;
  KnowledgePrf knowledge;
  std::optional<GoalCompletionTable> goals;

  /// DomainError on non-finite values, hits@1 > hits@3 or DIST-2 outside [0,1].
  void validate() const;
  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace mgcg
