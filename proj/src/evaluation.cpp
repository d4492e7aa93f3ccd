#include "mgcg/evaluation.hpp"

#include <map>

#include "mgcg/corpus.hpp"
#include "mgcg/errors.hpp"

namespace mgcg {

std::string condition_label(bool ablate_goal, bool ablate_knowledge) {
  return std::string(ablate_goal ? "-gl." : "+gl.") + (ablate_knowledge ? "-kg." : "+kg.");
}

namespace {

struct Prepared {
  std::vector<TrainingExample> inputs;  // ablated / planner-goal versions
  std::vector<const TrainingExample*> originals;
};

Prepared prepare(const std::vector<TrainingExample>& examples, const EvalOptions& o) {
  if (examples.empty()) throw ConfigError("evaluation: no examples");
  Prepared p;
  const std::size_t n = o.limit ? std::min(o.limit, examples.size()) : examples.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto ex = examples[i];
    if (o.planner) ex.goal = o.planner->plan_next(PlannerInput::from_example(ex)).chosen;
    p.inputs.push_back(ablate(ex, o.ablate_goal, o.ablate_knowledge));
    p.originals.push_back(&examples[i]);
  }
  return p;
}

/// Text and knowledge metrics over hypotheses aligned with the originals.
void text_metrics(MetricReport& r, const Prepared& p, const std::vector<std::string>& hyps) {
  std::vector<Tokens> toks;
  double f = 0.0, b = 0.0;
  std::map<std::pair<std::string, std::size_t>, std::vector<KnowledgeTurn>> dialogs;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& ex = *p.originals[i];
    const auto h = tokenize(hyps[i]);
    const auto ref = tokenize(ex.response.text);
    f += f1(h, ref);
    b += bleu2(h, ref);
    toks.push_back(h);
    dialogs[{ex.seeker_id, ex.dialog_index}].push_back({hyps[i], ex.response.knowledge, ex.knowledge});
  }
  const auto n = static_cast<double>(hyps.size());
  r.f1 = f / n;
  r.bleu2 = b / n;
  r.dist2 = dist2(toks);
  std::vector<std::vector<KnowledgeTurn>> grouped;
  for (auto& [key, turns] : dialogs) grouped.push_back(std::move(turns));
  r.knowledge = knowledge_prf(grouped);
}

}  // namespace

MetricReport evaluate_ranker(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                             const std::vector<std::string>& bank, const EvalOptions& options) {
  const auto p = prepare(examples, options);
  MetricReport r;
  r.model = "MGCG_R" + condition_label(options.ablate_goal, options.ablate_knowledge);
  std::vector<std::size_t> ranks;
  std::vector<std::string> hyps;
  for (std::size_t i = 0; i < p.inputs.size(); ++i) {
    const auto pool = build_candidate_pool(*p.originals[i], bank, options.pool_seed + i);
    const auto list = ranker.rank(ResponderInput::from_example(p.inputs[i]), pool);
    ranks.push_back(list.gold_rank);
    hyps.push_back(list.candidates.front().text);
  }
  r.hits1 = hits_at_k(ranks, 1);
  r.hits3 = hits_at_k(ranks, 3);
  text_metrics(r, p, hyps);
  r.validate();
  return r;
}

MetricReport evaluate_generator(const Generator& generator, const std::vector<TrainingExample>& examples,
                                const std::vector<std::string>& bank, const EvalOptions& options) {
  const auto p = prepare(examples, options);
  MetricReport r;
  r.model = "MGCG_G" + condition_label(options.ablate_goal, options.ablate_knowledge);
  std::vector<std::size_t> ranks;
  std::vector<std::string> hyps;
  for (std::size_t i = 0; i < p.inputs.size(); ++i) {
    const auto in = ResponderInput::from_example(p.inputs[i]);
    const auto pool = build_candidate_pool(*p.originals[i], bank, options.pool_seed + i);
    ranks.push_back(generator.score_candidates_by_ppl(in, pool).gold_rank);
    hyps.push_back(generator.generate(in, options.beam).text);
  }
  r.hits1 = hits_at_k(ranks, 1);
  r.hits3 = hits_at_k(ranks, 3);
  r.ppl = generator.perplexity(p.inputs);
  text_metrics(r, p, hyps);
  r.validate();
  return r;
}

}  // namespace mgcg
