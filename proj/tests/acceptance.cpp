// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 when
// any criterion fails. Every threshold is pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mgcg/evaluation.hpp"
#include "mgcg/features.hpp"
#include "mgcg/nn/block_checks.hpp"
#include "mgcg/nn/loss.hpp"
#include "mgcg/orchestrator.hpp"
#include "mgcg/synth.hpp"
#include "oracles.hpp"

using namespace mgcg;

namespace {

// gradient integrity
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 120.0;
// loss analytics
constexpr int kKlPairs = 1000;
constexpr double kUniformLossTolerance = 1e-6;
constexpr double kUniformPplRelTolerance = 1e-3;
// metric oracles
constexpr int kOracleCases = 50;
constexpr double kOracleTolerance = 1e-9;
// planner policy
constexpr int kSweepPoints = 10000;
// synthetic learning
constexpr double kTrainingCpuSeconds = 30.0 * 60.0;
constexpr double kPlannerCompletionAcc = 0.90;
constexpr double kPlannerTypeAcc = 0.90;
constexpr double kRankerHits1 = 0.50;
constexpr double kPplRatio = 0.5;
constexpr double kGeneratorHits1 = 0.40;
// ablation
constexpr double kAblationMargin = 0.05;
// decoding identity
constexpr int kDecodeContexts = 100;
// corpus validation
constexpr std::size_t kReleaseDialogs = 10190;
constexpr std::size_t kReleaseUtterances = 155477;
constexpr std::size_t kReleaseSeekers = 1362;
// rollouts
constexpr int kRollouts = 100;
constexpr int kChancePools = 1000;
constexpr int kChanceModelSeeds = 4;
constexpr double kChance = 0.10;
constexpr double kChanceTolerance = 0.03;

int failures = 0;

void line(const std::string& status, const std::string& name, const std::string& detail) {
  std::cout << status << "  " << name << "  " << detail << std::endl;
}

void verdict(const std::string& name, bool ok, const std::string& detail) {
  line(ok ? "PASS" : "FAIL", name, detail);
  failures += ok ? 0 : 1;
}

// Runs a criterion; an exception is a failure of that criterion only.
void criterion(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double wall_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nn::Vec random_distribution(Rng& rng, Eigen::Index n) {
  nn::Vec logits(n);
  for (Eigen::Index i = 0; i < n; ++i) logits(i) = rng.uniform(-4.0, 4.0);
  return nn::softmax(logits);
}

std::vector<TrainingExample> ablated(const std::vector<TrainingExample>& xs) {
  std::vector<TrainingExample> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(ablate(x, true, true));
  return out;
}

struct World {
  SyntheticCorpus corpus;
  CorpusSplit split;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> test;
  std::vector<std::string> bank;
  Vocab vocab;
};

World make_world() {
  World w;
  SynthConfig cfg;
  cfg.n_seekers = 50;
  cfg.dialogs_per_seeker = 4;
  cfg.seed = 7;
  w.corpus = generate_synthetic_corpus(cfg);
  w.split = split_by_seeker(w.corpus.records, {}, 7);
  w.train = extract_training_examples(w.split.train);
  w.test = extract_training_examples(w.split.test);
  w.bank = response_bank(w.train);
  w.vocab = build_vocab(w.split.train);
  return w;
}

void gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  nn::GradCheckOptions opt;
  opt.tolerance = kGradTolerance;
  const auto checks = nn::run_block_gradient_checks(1, opt);
  double worst = 0.0;
  std::string worst_block;
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.report.passed && c.report.max_rel_error < kGradTolerance;
    if (c.report.max_rel_error >= worst) {
      worst = c.report.max_rel_error;
      worst_block = c.block + "/" + c.report.worst_param;
    }
  }
  const double secs = wall_seconds(t0);
  verdict("gradient_integrity", ok && secs < kGradSeconds,
          std::to_string(checks.size()) + " blocks, max rel error " + fmt(worst) + " (" + worst_block +
              ") < " + fmt(kGradTolerance) + ", " + fmt(secs, 3) + "s < " + fmt(kGradSeconds, 3) + "s");
}

void loss_analytics(const World& w) {
  Rng rng(31);
  double worst_self = 0.0, min_kl = 1e300;
  for (int i = 0; i < kKlPairs; ++i) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform_index(20));
    const auto p = random_distribution(rng, n);
    const auto q = random_distribution(rng, n);
    worst_self = std::max(worst_self, std::abs(nn::kl_div_loss(p, p).loss));
    min_kl = std::min(min_kl, nn::kl_div_loss(p, q).loss);
  }
  const auto V = static_cast<Eigen::Index>(w.vocab.size());
  const double lnv = std::log(static_cast<double>(V));
  std::vector<TokenId> gold;
  for (int i = 0; i < 17; ++i) gold.push_back(static_cast<TokenId>(rng.uniform_index(static_cast<std::size_t>(V))));
  const double nll_err = std::abs(nn::nll_loss(nn::Mat::Zero(17, V), gold).loss - lnv);
  const double bow_err = std::abs(nn::bow_loss(nn::Vec::Zero(V), gold).loss - lnv);

  Generator uniform(w.vocab);
  uniform.params().value(uniform.decoder().output().weight()).setZero();
  uniform.params().value(uniform.decoder().output().bias()).setZero();
  const double ppl = uniform.perplexity(w.test);
  const double ppl_rel = std::abs(ppl - static_cast<double>(V)) / static_cast<double>(V);

  const bool ok = worst_self == 0.0 && min_kl >= 0.0 && nll_err <= kUniformLossTolerance &&
                  bow_err <= kUniformLossTolerance && ppl_rel <= kUniformPplRelTolerance;
  verdict("loss_analytics", ok,
          "max |KL(p||p)| " + fmt(worst_self) + ", min KL(p||q) " + fmt(min_kl) + " over " +
              std::to_string(kKlPairs) + " pairs; |NLL-ln V| " + fmt(nll_err) + ", |BOW-ln V| " + fmt(bow_err) +
              "; uniform PPL " + fmt(ppl, 8) + " vs |V|=" + std::to_string(V));
}

void metric_oracles() {
  Rng rng(47);
  double worst = 0.0;
  for (int i = 0; i < kOracleCases; ++i) {
    const auto h = oracle::random_tokens(rng, 12);
    const auto r = oracle::random_tokens(rng, 12);
    worst = std::max(worst, std::abs(bleu2(h, r) - oracle::bleu2(h, r, true)));
    worst = std::max(worst, std::abs(bleu2(h, r, false) - oracle::bleu2(h, r, false)));
  }
  for (int i = 0; i < kOracleCases; ++i) {
    const auto h = oracle::random_tokens(rng, 12);
    const auto r = oracle::random_tokens(rng, 12);
    worst = std::max(worst, std::abs(f1(h, r) - oracle::f1(h, r)));
  }
  for (int i = 0; i < kOracleCases; ++i) {
    std::vector<Tokens> hs(1 + rng.uniform_index(6));
    for (auto& h : hs) h = oracle::random_tokens(rng, 10);
    worst = std::max(worst, std::abs(dist2(hs) - oracle::dist2(hs)));
  }
  for (int i = 0; i < kOracleCases; ++i) {
    std::vector<std::size_t> ranks(1 + rng.uniform_index(30));
    for (auto& x : ranks) x = 1 + rng.uniform_index(10);
    const std::size_t k = 1 + rng.uniform_index(10);
    worst = std::max(worst, std::abs(hits_at_k(ranks, k) - oracle::hits_at_k(ranks, k)));
  }
  // dialog 1: P = 1, R = 1/2; dialog 2: P = 1/2, R = 1. Averaged P = R = 3/4, averaged F1 = 2/3.
  const auto k = knowledge_prf({{{"I like apple", {{"x", "r", "apple"}, {"x", "r", "pear"}}, {}}},
                                {{"kiwi and plum", {{"y", "r", "kiwi"}}, {{"y", "s", "plum"}}}}});
  const bool caveat = std::abs(k.precision - 0.75) < kOracleTolerance &&
                      std::abs(k.recall - 0.75) < kOracleTolerance &&
                      std::abs(k.f1 - 2.0 / 3.0) < kOracleTolerance && k.f1 < std::min(k.precision, k.recall);
  verdict("metric_oracles", worst <= kOracleTolerance && caveat,
          std::to_string(kOracleCases) + " cases per metric, max deviation " + fmt(worst) +
              "; knowledge caveat P " + fmt(k.precision) + " R " + fmt(k.recall) + " F1 " + fmt(k.f1));
}

void planner_policy(const World& w) {
  PlannerConfig cfg;
  cfg.emb_dim = 8;
  cfg.filters = 4;
  cfg.hidden = 8;
  cfg.topic_dim = 4;
  GoalPlanner planner(w.vocab, w.corpus.graph, cfg);
  std::vector<PlannerInput> inputs;
  for (std::size_t i = 0; i < 20 && i < w.test.size(); ++i) inputs.push_back(PlannerInput::from_example(w.test[i]));
  int violations = 0;
  for (int i = 0; i < kSweepPoints; ++i) {
    const double p = static_cast<double>(i) / static_cast<double>(kSweepPoints - 1);
    const auto& in = inputs[static_cast<std::size_t>(i) % inputs.size()];
    const auto d = planner.plan_next(in, [p](const PlannerInput&) { return p; });
    // below the threshold the previous goal is kept; at or above it the
    // argmax prediction is taken (which may coincide with the previous goal)
    const bool keep = p < 0.5;
    const bool ok = d.completed == !keep && (keep ? d.chosen == in.previous_goal : d.chosen == d.prediction.best);
    if (!ok) ++violations;
  }
  verdict("planner_policy", violations == 0,
          std::to_string(kSweepPoints) + " sweep points over [0,1], " + std::to_string(violations) + " violations");
}

struct Trained {
  std::unique_ptr<GoalPlanner> planner;
  std::unique_ptr<Ranker> ranker;
  std::unique_ptr<Generator> generator;
  MetricReport ranker_report;
  MetricReport generator_report;
};

Trained synthetic_learning(const World& w) {
  Trained t;
  const double cpu0 = cpu_seconds();
  t.planner = std::make_unique<GoalPlanner>(w.vocab, w.corpus.graph);
  t.planner->train(w.train);
  t.ranker = std::make_unique<Ranker>(w.vocab);
  t.ranker->train(w.train, w.bank);
  t.generator = std::make_unique<Generator>(w.vocab);
  const double untrained_ppl = t.generator->perplexity(w.test);
  t.generator->train(w.train);
  const double cpu = cpu_seconds() - cpu0;

  const auto pm = t.planner->evaluate(w.test);
  t.ranker_report = evaluate_ranker(*t.ranker, w.test, w.bank);
  t.generator_report = evaluate_generator(*t.generator, w.test, w.bank);
  const double ppl = *t.generator_report.ppl;
  const bool ok = cpu < kTrainingCpuSeconds && pm.completion_acc >= kPlannerCompletionAcc &&
                  pm.type_acc >= kPlannerTypeAcc && t.ranker_report.hits1 >= kRankerHits1 &&
                  ppl < kPplRatio * untrained_ppl && t.generator_report.hits1 >= kGeneratorHits1;
  verdict("synthetic_learning", ok,
          "training " + fmt(cpu / 60.0, 3) + " CPU-min < 30; planner completion " + fmt(pm.completion_acc) +
              " type " + fmt(pm.type_acc) + " (>= 0.90); ranker H@1 " + fmt(t.ranker_report.hits1) +
              " (>= 0.50); generator PPL " + fmt(ppl) + " vs untrained " + fmt(untrained_ppl) +
              " (< 0.5x); generator PPL-H@1 " + fmt(t.generator_report.hits1) + " (>= 0.40)");
  return t;
}

void ablation(const World& w, const Trained& t) {
  const auto train_ablated = ablated(w.train);
  EvalOptions opt;
  opt.ablate_goal = true;
  opt.ablate_knowledge = true;
  Ranker r(w.vocab);
  r.train(train_ablated, w.bank);
  const auto rr = evaluate_ranker(r, w.test, w.bank, opt);
  Generator g(w.vocab);
  g.train(train_ablated);
  const auto gr = evaluate_generator(g, w.test, w.bank, opt);
  const double dr = t.ranker_report.hits1 - rr.hits1;
  const double dg = t.generator_report.hits1 - gr.hits1;
  verdict("ablation_direction", dr >= kAblationMargin && dg >= kAblationMargin,
          "ranker H@1 +gl.+kg. " + fmt(t.ranker_report.hits1) + " vs -gl.-kg. " + fmt(rr.hits1) +
              "; generator H@1 " + fmt(t.generator_report.hits1) + " vs " + fmt(gr.hits1) +
              " (margin >= 0.05, same epochs)");
}

void decoding_identity(const World& w, const Generator& g) {
  Rng rng(59);
  int mismatches = 0;
  for (int i = 0; i < kDecodeContexts; ++i) {
    auto in = ResponderInput::from_example(w.test[rng.uniform_index(w.test.size())]);
    // every other context is a random token sequence
    if (i % 2 == 1) {
      std::vector<std::string> words;
      const auto n = 3 + rng.uniform_index(12);
      for (std::size_t k = 0; k < n; ++k) {
        words.push_back(w.vocab.token(static_cast<TokenId>(6 + rng.uniform_index(w.vocab.size() - 6))));
      }
      in.context = {{Speaker::Seeker, join_tokens(words), 0, {}}};
    }
    const auto a = g.generate(in, 1);
    const auto b = g.greedy(in);
    if (a.ids != b.ids || a.text != b.text) ++mismatches;
  }
  verdict("decoding_identity", mismatches == 0,
          "beam 1 vs greedy on " + std::to_string(kDecodeContexts) + " contexts, " + std::to_string(mismatches) +
              " mismatches");
}

void corpus_validation() {
  const char* dir = std::getenv("MGCG_DURECDIAL_DIR");
  if (!dir || !*dir) {
    line("SKIP", "corpus_validation", "MGCG_DURECDIAL_DIR not set; released corpus files not supplied");
    return;
  }
  std::vector<DialogRecord> all;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".txt" && ext != ".jsonl" && ext != ".json") continue;
    auto part = load_corpus(entry.path().string());
    all.insert(all.end(), part.begin(), part.end());
  }
  const auto s = corpus_stats(all);
  const auto split = split_by_seeker(all, {}, 7);
  const auto n = static_cast<double>(s.seekers);
  const bool split_ok = split.dev_seekers.size() == static_cast<std::size_t>(std::floor(0.10 * n)) &&
                        split.test_seekers.size() == static_cast<std::size_t>(std::floor(0.25 * n));
  verdict("corpus_validation",
          s.dialogs == kReleaseDialogs && s.utterances == kReleaseUtterances && s.seekers == kReleaseSeekers &&
              split_ok,
          std::to_string(s.dialogs) + " dialogs, " + std::to_string(s.utterances) + " utterances, " +
              std::to_string(s.seekers) + " seekers; split " + std::to_string(split.train_seekers.size()) + "/" +
              std::to_string(split.dev_seekers.size()) + "/" + std::to_string(split.test_seekers.size()));
}

void rollouts(const World& w, const Trained& t) {
  std::vector<const DialogRecord*> templates;
  for (const auto& r : w.split.test) templates.push_back(&r);
  Pipeline retrieval;
  retrieval.graph = &w.corpus.graph;
  retrieval.planner = t.planner.get();
  retrieval.ranker = t.ranker.get();
  retrieval.response_bank = w.bank;
  Pipeline generation;
  generation.graph = &w.corpus.graph;
  generation.planner = t.planner.get();
  generation.generator = t.generator.get();

  std::size_t errors = 0, untagged = 0, over_cap = 0, bot_turns = 0;
  std::vector<Rollout> outcomes;
  for (int i = 0; i < kRollouts; ++i) {
    const auto& rec = *templates[static_cast<std::size_t>(i) % templates.size()];
    const auto& p = i % 2 == 0 ? retrieval : generation;
    try {
      const auto out = run_simulated_dialog(p, rec.task_template(), rec.profile, static_cast<std::uint64_t>(i));
      over_cap += out.transcript.size() > kTurnCap;
      for (const auto& turn : out.transcript) {
        if (turn.speaker != Speaker::Recommender) continue;
        ++bot_turns;
        untagged += !turn.goal || turn.goal->topic.empty() || turn.template_index >= rec.goals.size();
      }
      outcomes.push_back(out.goals);
    } catch (const std::exception& e) {
      ++errors;
      std::cerr << "rollout " << i << ": " << e.what() << "\n";
    }
  }
  const auto table = goal_completion_analysis(outcomes);
  std::size_t goals = 0;
  for (const auto& o : outcomes) goals += o.size();
  const bool table_ok = table.by_type.size() == 4 && table.overall.completed + table.overall.failed == goals;

  // chance level: untrained rankers with several initialization seeds
  std::vector<std::size_t> ranks;
  const int per_seed = kChancePools / kChanceModelSeeds;
  for (int s = 0; s < kChanceModelSeeds; ++s) {
    RankerConfig cfg;
    cfg.seed = 1000 + static_cast<std::uint64_t>(s);
    Ranker untrained(w.vocab, cfg);
    for (int i = 0; i < per_seed; ++i) {
      const auto idx = static_cast<std::size_t>(s * per_seed + i);
      const auto& ex = w.test[idx % w.test.size()];
      const auto pool = build_candidate_pool(ex, w.bank, 5000 + idx);
      ranks.push_back(untrained.rank(ResponderInput::from_example(ex), pool).gold_rank);
    }
  }
  const double chance = hits_at_k(ranks, 1);
  const bool ok = errors == 0 && untagged == 0 && over_cap == 0 && table_ok &&
                  std::abs(chance - kChance) <= kChanceTolerance;
  verdict("end_to_end_rollouts", ok,
          std::to_string(kRollouts - static_cast<int>(errors)) + "/" + std::to_string(kRollouts) +
              " rollouts without error, " + std::to_string(bot_turns) + " bot turns, " + std::to_string(untagged) +
              " without a goal; completed " + std::to_string(table.overall.completed) + " failed " +
              std::to_string(table.overall.failed) + "; untrained H@1 " + fmt(chance) + " over " +
              std::to_string(ranks.size()) + " pools (0.10 +- 0.03)");
  std::cout << table.to_csv();
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion("gradient_integrity", gradient_integrity);
  const World w = make_world();
  criterion("loss_analytics", [&] { loss_analytics(w); });
  criterion("metric_oracles", metric_oracles);
  criterion("planner_policy", [&] { planner_policy(w); });
  Trained t;
  criterion("synthetic_learning", [&] { t = synthetic_learning(w); });
  if (t.generator && t.ranker && t.planner) {
    criterion("ablation_direction", [&] { ablation(w, t); });
    criterion("decoding_identity", [&] { decoding_identity(w, *t.generator); });
    criterion("end_to_end_rollouts", [&] { rollouts(w, t); });
  } else {
    for (const char* name : {"ablation_direction", "decoding_identity", "end_to_end_rollouts"}) {
      verdict(name, false, "trained models unavailable");
    }
  }
  criterion("corpus_validation", corpus_validation);
  std::cout << "acceptance: " << failures << " failing criteria, " << fmt(wall_seconds(t0), 4) << "s" << std::endl;
  return failures == 0 ? 0 : 1;
}
