#include "mgcg/knowledge.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include "json.hpp"
#include <set>

#include "mgcg/dialog.hpp"
#include "mgcg/errors.hpp"

namespace mgcg {

using nlohmann::json;

KnowledgeGraph KnowledgeGraph::from_triples(std::vector<KnowledgeTriple> triples,
                                            std::map<std::string, std::string> entity_domains) {
  KnowledgeGraph g;
  std::set<KnowledgeTriple> seen;
  for (auto& t : triples) {
    if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
      throw SchemaError("knowledge triple with an empty field");
    }
    if (!seen.insert(t).second) {
      ++g.duplicates_removed_;
      continue;
    }
    g.triples_.push_back(std::move(t));
  }
  g.domains_ = std::move(entity_domains);

  std::set<std::string> entity_set;
  for (const auto& t : g.triples_) entity_set.insert(t.subject);
  for (const auto& [entity, domain] : g.domains_) entity_set.insert(entity);
  g.entities_.assign(entity_set.begin(), entity_set.end());
  for (std::size_t i = 0; i < g.entities_.size(); ++i) g.entity_ids_[g.entities_[i]] = i;

  const std::size_t n = g.entities_.size();
  g.subject_index_.assign(n, {});
  g.incident_index_.assign(n, {});
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t id = 0; id < g.triples_.size(); ++id) {
    const auto& t = g.triples_[id];
    g.attributes_.insert(t.predicate);
    const std::size_t s = g.entity_ids_.at(t.subject);
    g.subject_index_[s].push_back(id);
    g.incident_index_[s].push_back(id);
    auto it = g.entity_ids_.find(t.object);
    if (it != g.entity_ids_.end() && it->second != s) {
      g.incident_index_[it->second].push_back(id);
      adj[s].insert(it->second);
      adj[it->second].insert(s);
    }
  }
  g.adjacency_.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.adjacency_[i].assign(adj[i].begin(), adj[i].end());

  g.entity_tokens_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.entity_tokens_[i] = tokenize(g.entities_[i]);
    if (!g.entity_tokens_[i].empty()) {
      g.first_token_index_[g.entity_tokens_[i].front()].push_back(i);
    }
  }
  return g;
}

KnowledgeGraph::Stats KnowledgeGraph::stats() const {
  return {entities_.size(), attributes_.size(), triples_.size(), duplicates_removed_};
}

bool KnowledgeGraph::contains_entity(const std::string& entity) const {
  return entity_ids_.count(entity) != 0;
}

std::optional<std::size_t> KnowledgeGraph::entity_index(const std::string& entity) const {
  auto it = entity_ids_.find(entity);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> KnowledgeGraph::domain_of(const std::string& entity) const {
  auto it = domains_.find(entity);
  if (it == domains_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& KnowledgeGraph::subject_triples(const std::string& entity) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = entity_ids_.find(entity);
  return it == entity_ids_.end() ? kEmpty : subject_index_[it->second];
}

const std::vector<std::size_t>& KnowledgeGraph::incident_triples(const std::string& entity) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = entity_ids_.find(entity);
  return it == entity_ids_.end() ? kEmpty : incident_index_[it->second];
}

std::set<std::string> KnowledgeGraph::neighbors(const std::string& entity, int hops) const {
  if (hops != 1 && hops != 2) throw ConfigError("neighbors: hops must be 1 or 2");
  auto it = entity_ids_.find(entity);
  if (it == entity_ids_.end()) throw UnknownEntityError(entity);
  std::set<std::size_t> frontier(adjacency_[it->second].begin(), adjacency_[it->second].end());
  std::set<std::size_t> reached = frontier;
  if (hops == 2) {
    for (auto v : frontier) reached.insert(adjacency_[v].begin(), adjacency_[v].end());
  }
  reached.erase(it->second);
  std::set<std::string> out;
  for (auto v : reached) out.insert(entities_[v]);
  return out;
}

std::optional<int> KnowledgeGraph::distance(const std::string& a, const std::string& b,
                                            int max_hops) const {
  auto ia = entity_ids_.find(a);
  auto ib = entity_ids_.find(b);
  if (ia == entity_ids_.end() || ib == entity_ids_.end()) return std::nullopt;
  if (ia->second == ib->second) return 0;
  std::vector<int> dist(entities_.size(), -1);
  std::deque<std::size_t> queue{ia->second};
  dist[ia->second] = 0;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    if (dist[v] >= max_hops) continue;
    for (auto w : adjacency_[v]) {
      if (dist[w] >= 0) continue;
      dist[w] = dist[v] + 1;
      if (w == ib->second) return dist[w];
      queue.push_back(w);
    }
  }
  return std::nullopt;
}

std::vector<std::string> KnowledgeGraph::mentioned_entities(const Tokens& tokens) const {
  std::set<std::size_t> hits;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = first_token_index_.find(tokens[i]);
    if (it == first_token_index_.end()) continue;
    for (auto e : it->second) {
      const auto& et = entity_tokens_[e];
      if (i + et.size() <= tokens.size() &&
          std::equal(et.begin(), et.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        hits.insert(e);
      }
    }
  }
  std::vector<std::string> out;
  for (auto e : hits) out.push_back(entities_[e]);
  return out;
}

namespace {

KnowledgeTriple triple_from_array(const json& arr, std::size_t line) {
  if (!arr.is_array() || arr.size() != 3) throw ParseError(line, "expected [s, p, o]");
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError(line, "triple fields must be strings");
  }
  return {arr[0].get<std::string>(), arr[1].get<std::string>(), arr[2].get<std::string>()};
}

}  // namespace

KnowledgeGraph load_graph(const std::string& path, const std::string& entity_tags_path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open knowledge file " + path);
  std::vector<KnowledgeTriple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    if (rec.is_object() && rec.contains("s")) {
      if (!rec.contains("p") || !rec.contains("o") || !rec["s"].is_string() ||
          !rec["p"].is_string() || !rec["o"].is_string()) {
        throw ParseError(lineno, "triple record needs string fields s, p, o");
      }
      KnowledgeTriple t{rec["s"], rec["p"], rec["o"]};
      if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
        throw ParseError(lineno, "empty triple field");
      }
      triples.push_back(std::move(t));
    } else if (rec.is_object() && (rec.contains("knowledge") || rec.contains("kg"))) {
      const auto& list = rec.contains("knowledge") ? rec["knowledge"] : rec["kg"];
      if (!list.is_array()) throw ParseError(lineno, "knowledge must be a list");
      for (const auto& arr : list) triples.push_back(triple_from_array(arr, lineno));
    } else if (rec.is_array()) {
      triples.push_back(triple_from_array(rec, lineno));
    } else {
      throw ParseError(lineno, "unrecognised knowledge record");
    }
  }

  std::map<std::string, std::string> domains;
  if (!entity_tags_path.empty()) {
    std::ifstream tags(entity_tags_path);
    if (!tags) throw Error("cannot open entity tag file " + entity_tags_path);
    lineno = 0;
    while (std::getline(tags, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(lineno, e.what());
      }
      if (!rec.is_object() || !rec.contains("entity") || !rec["entity"].is_string()) {
        throw ParseError(lineno, "entity tag record needs an \"entity\" string");
      }
      domains[rec["entity"]] = rec.value("domain", std::string{});
    }
  }
  return KnowledgeGraph::from_triples(std::move(triples), std::move(domains));
}

void save_graph(const KnowledgeGraph& graph, const std::string& path,
                const std::string& entity_tags_path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& t : graph.triples()) {
    out << json{{"s", t.subject}, {"p", t.predicate}, {"o", t.object}}.dump() << '\n';
  }
  if (!entity_tags_path.empty()) {
    std::ofstream tags(entity_tags_path);
    if (!tags) throw Error("cannot write " + entity_tags_path);
    for (const auto& [entity, domain] : graph.entity_domains()) {
      tags << json{{"entity", entity}, {"domain", domain}}.dump() << '\n';
    }
  }
}

std::vector<KnowledgeTriple> candidate_knowledge(const KnowledgeGraph& graph,
                                                 const DialogueContext& context,
                                                 const Goal& goal, std::size_t limit) {
  if (limit == 0) throw ConfigError("candidate_knowledge: limit must be >= 1");
  if (!graph.contains_entity(goal.topic)) return {};

  std::vector<std::size_t> picked;
  std::set<std::size_t> used;
  auto take_tier = [&](std::set<std::size_t> tier) {
    for (auto id : tier) {
      if (used.insert(id).second) picked.push_back(id);
    }
  };

  take_tier({graph.subject_triples(goal.topic).begin(), graph.subject_triples(goal.topic).end()});

  std::set<std::size_t> mention_tier;
  const auto& utts = context.utterances;
  const std::size_t from = utts.size() > 2 ? utts.size() - 2 : 0;
  for (std::size_t i = from; i < utts.size(); ++i) {
    for (const auto& e : graph.mentioned_entities(tokenize(utts[i].text))) {
      const auto& ids = graph.subject_triples(e);
      mention_tier.insert(ids.begin(), ids.end());
    }
  }
  take_tier(std::move(mention_tier));

  std::set<std::size_t> neighbor_tier;
  for (const auto& e : graph.neighbors(goal.topic, 1)) {
    const auto& ids = graph.subject_triples(e);
    neighbor_tier.insert(ids.begin(), ids.end());
  }
  take_tier(std::move(neighbor_tier));

  if (picked.size() > limit) picked.resize(limit);
  std::vector<KnowledgeTriple> out;
  out.reserve(picked.size());
  for (auto id : picked) out.push_back(graph.triples()[id]);
  return out;
}

Tokens linearize(const KnowledgeTriple& triple) {
  Tokens out = tokenize(triple.subject);
  for (auto&& t : tokenize(triple.predicate)) out.push_back(std::move(t));
  for (auto&& t : tokenize(triple.object)) out.push_back(std::move(t));
  return out;
}

}  // namespace mgcg
