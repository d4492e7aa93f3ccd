#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgcg/generator.hpp"
#include "mgcg/metrics.hpp"
#include "mgcg/planner.hpp"
#include "mgcg/ranker.hpp"

namespace mgcg {

struct EvalOptions {
  bool ablate_goal = false;
  bool ablate_knowledge = false;
  /// Replace gold goals with the planner's prediction for each turn.
  const GoalPlanner* planner = nullptr;
  /// Pool i is built with seed pool_seed + i, so every model sees the same pools.
  std::uint64_t pool_seed = 100;
  std::size_t beam = 0;
  /// Evaluate only the first n examples (0: all).
  std::size_t limit = 0;
};

/// "+gl.+kg." style condition tag.
std::string condition_label(bool ablate_goal, bool ablate_knowledge);

/// Hits@k from the matcher scores; F1, BLEU-2, DIST-2 and knowledge P/R/F1
/// of the top-ranked candidate.
MetricReport evaluate_ranker(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                             const std::vector<std::string>& bank, const EvalOptions& options = {});

/// Hits@k from perplexity ranking of the pools; PPL on the gold responses;
/// text metrics on beam-search output.
MetricReport evaluate_generator(const Generator& generator, const std::vector<TrainingExample>& examples,
                                const std::vector<std::string>& bank, const EvalOptions& options = {});

}  // namespace mgcg
