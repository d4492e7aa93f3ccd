#pragma once

#include <string>
#include <vector>

#include "mgcg/nn/grad_check.hpp"

namespace mgcg::nn {

struct BlockCheck {
  std::string block;
  GradCheckReport report;
};

/// Gradient checks of every shipped block on small random instances:
/// BiGRU, self-attention, CNN (normal and padded input), HGFU unrolled over
/// several steps, NLL, KL (through both softmaxes), BOW, the knowledge
/// selector MLP, the matcher MLP, layer norm and embedding lookups.
std::vector<BlockCheck> run_block_gradient_checks(std::uint64_t seed = 1,
                                                  const GradCheckOptions& options = {});

}  // namespace mgcg::nn
