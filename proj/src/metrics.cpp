#include "mgcg/metrics.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "mgcg/errors.hpp"

namespace mgcg {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(const Tokens& t, std::size_t n) {
  Counts c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++c[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                 t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return c;
}

std::size_t clipped_overlap(const Counts& hyp, const Counts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    const auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

double bleu2(const Tokens& hyp, const Tokens& ref, bool smoothed) {
  if (ref.empty()) throw DomainError("bleu2: empty reference");
  if (hyp.empty()) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 1; n <= 2; ++n) {
    const auto h = ngrams(hyp, n);
    const double total = hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
    double m = static_cast<double>(clipped_overlap(h, ngrams(ref, n)));
    double d = total;
    if (smoothed) {
      m += 1.0;
      d += 1.0;
    }
    if (m == 0.0 || d == 0.0) return 0.0;
    log_p += 0.5 * std::log(m / d);
  }
  const double c = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_p);
}

double f1(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw DomainError("f1: empty reference");
  if (hyp.empty()) return 0.0;
  const auto overlap = static_cast<double>(clipped_overlap(ngrams(hyp, 1), ngrams(ref, 1)));
  if (overlap == 0.0) return 0.0;
  const double p = overlap / static_cast<double>(hyp.size());
  const double r = overlap / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

double f1_text(const std::string& hypothesis, const std::string& reference) {
  return f1(tokenize(hypothesis), tokenize(reference));
}

double dist2(const std::vector<Tokens>& hypotheses) {
  std::set<std::pair<std::string, std::string>> distinct;
  std::size_t total = 0;
  for (const auto& h : hypotheses) {
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
      distinct.insert({h[i], h[i + 1]});
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

bool knowledge_used(const Tokens& hypothesis, const KnowledgeTriple& triple) {
  const auto obj = tokenize(triple.object);
  return !obj.empty() && contains_subsequence(hypothesis, obj);
}

KnowledgePrf knowledge_prf(const std::vector<std::vector<KnowledgeTurn>>& dialogs) {
  KnowledgePrf out;
  double sp = 0, sr = 0, sf = 0;
  for (const auto& dialog : dialogs) {
    std::size_t hit = 0, gold = 0, predicted = 0;
    for (const auto& turn : dialog) {
      const auto hyp = tokenize(turn.hypothesis);
      std::set<std::string> gold_objects, mentioned;
      for (const auto& g : turn.gold) {
        gold_objects.insert(g.object);
        if (knowledge_used(hyp, g)) mentioned.insert(g.object);
      }
      for (const auto& c : turn.candidates) {
        if (knowledge_used(hyp, c)) mentioned.insert(c.object);
      }
      gold += gold_objects.size();
      predicted += mentioned.size();
      for (const auto& o : gold_objects) hit += mentioned.count(o);
    }
    if (gold == 0) continue;
    const double p = predicted == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(predicted);
    const double r = static_cast<double>(hit) / static_cast<double>(gold);
    sp += p;
    sr += r;
    sf += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    ++out.dialogs;
  }
  if (out.dialogs > 0) {
    const double n = static_cast<double>(out.dialogs);
    out.precision = sp / n;
    out.recall = sr / n;
    out.f1 = sf / n;
  }
  return out;
}

double hits_at_k(const std::vector<std::size_t>& gold_ranks, std::size_t k) {
  if (gold_ranks.empty()) return 0.0;
  std::size_t h = 0;
  for (const auto r : gold_ranks) {
    if (r == 0) throw SchemaError("hits_at_k: list without a gold rank");
    h += r <= k;
  }
  return static_cast<double>(h) / static_cast<double>(gold_ranks.size());
}

double hits_at_k(const std::vector<RankedList>& lists, std::size_t k) {
  std::vector<std::size_t> ranks;
  ranks.reserve(lists.size());
  for (const auto& l : lists) ranks.push_back(l.gold_rank);
  return hits_at_k(ranks, k);
}

GoalCompletionTable goal_completion_analysis(const std::vector<Rollout>& rollouts) {
  GoalCompletionTable t;
  for (const auto type : kDialogTypes) t.by_type[type];
  for (const auto& rollout : rollouts) {
    for (const auto& g : rollout) {
      for (auto* c : {&t.by_type[g.type], &t.overall}) {
        (g.completed ? c->completed : c->failed) += 1;
        c->knowledge_used += g.knowledge_used;
      }
    }
  }
  return t;
}

nlohmann::json GoalCompletionTable::to_json() const {
  auto counts = [](const GoalCounts& c) {
    return nlohmann::json{{"failed", c.failed}, {"completed", c.completed}, {"knowledge_used", c.knowledge_used}};
  };
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [type, c] : by_type) j[std::string(to_string(type))] = counts(c);
  j["overall"] = counts(overall);
  return j;
}

std::string GoalCompletionTable::to_csv() const {
  std::ostringstream os;
  os << "type,failed,completed,knowledge_used\n";
  for (const auto& [type, c] : by_type) {
    os << to_string(type) << ',' << c.failed << ',' << c.completed << ',' << c.knowledge_used << '\n';
  }
  os << "overall," << overall.failed << ',' << overall.completed << ',' << overall.knowledge_used << '\n';
  return os.str();
}

void MetricReport::validate() const {
  for (const double v : {hits1, hits3, f1, bleu2, dist2, knowledge.precision, knowledge.recall, knowledge.f1}) {
    if (!std::isfinite(v)) throw DomainError("metric report: non-finite value");
  }
  if (ppl && !std::isfinite(*ppl)) throw DomainError("metric report: non-finite perplexity");
  if (hits1 > hits3) throw DomainError("metric report: hits@1 exceeds hits@3");
  if (dist2 < 0 || dist2 > 1) throw DomainError("metric report: DIST-2 outside [0,1]");
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j{{"model", model},
                   {"hits@1", hits1},
                   {"hits@3", hits3},
                   {"f1", f1},
                   {"f1_pct", 100.0 * f1},
                   {"bleu2", bleu2},
                   {"ppl", ppl ? nlohmann::json(*ppl) : nlohmann::json(nullptr)},
                   {"dist2", dist2},
                   {"knowledge", {{"p", knowledge.precision}, {"r", knowledge.recall}, {"f1", knowledge.f1}}}};
  if (goals) j["goals"] = goals->to_json();
  return j;
}

std::string MetricReport::csv_header() {
  return "model,hits@1,hits@3,f1_pct,bleu2,ppl,dist2,kg_p,kg_r,kg_f1";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os << model << ',' << hits1 << ',' << hits3 << ',' << 100.0 * f1 << ',' << bleu2 << ',';
  if (ppl) {
    os << *ppl;
  } else {
    os << '-';
  }
  os << ',' << dist2 << ',' << knowledge.precision << ',' << knowledge.recall << ',' << knowledge.f1;
  return os.str();
}

}  // namespace mgcg
