#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgcg/tokenizer.hpp"

namespace mgcg {

struct KnowledgeTriple {
  std::string subject;
  std::string predicate;
  std::string object;

  bool operator==(const KnowledgeTriple&) const = default;
  auto operator<=>(const KnowledgeTriple&) const = default;
};

/// The seven knowledge domains of the corpus.
inline const std::vector<std::string>& knowledge_domains() {
  static const std::vector<std::string> kDomains = {"star", "movie", "music", "news",
                                                    "food", "poi",   "weather"};
  return kDomains;
}

/// Immutable triple store with an entity index and undirected entity
/// adjacency. An object string counts as an entity iff it is also a subject
/// somewhere or it is explicitly tagged with a domain.
class KnowledgeGraph {
 public:
  struct Stats {
    std::size_t entities = 0;
    std::size_t attributes = 0;
    std::size_t triples = 0;
    std::size_t duplicates_removed = 0;
  };

  KnowledgeGraph() = default;

  /// Deduplicates (first occurrence wins) and builds every index.
  static KnowledgeGraph from_triples(std::vector<KnowledgeTriple> triples,
                                     std::map<std::string, std::string> entity_domains = {});

  const std::vector<KnowledgeTriple>& triples() const { return triples_; }
  /// Sorted entity ids; an entity's position is its stable id.
  const std::vector<std::string>& entities() const { return entities_; }
  const std::set<std::string>& attributes() const { return attributes_; }
  const std::map<std::string, std::string>& entity_domains() const { return domains_; }
  Stats stats() const;

  bool contains_entity(const std::string& entity) const;
  std::optional<std::size_t> entity_index(const std::string& entity) const;
  std::optional<std::string> domain_of(const std::string& entity) const;
  bool is_entity_object(const KnowledgeTriple& t) const { return contains_entity(t.object); }

  /// Ids of triples whose subject is `entity`, ascending.
  const std::vector<std::size_t>& subject_triples(const std::string& entity) const;
  /// Ids of triples mentioning `entity` as subject or entity-valued object.
  const std::vector<std::size_t>& incident_triples(const std::string& entity) const;

  /// Entities within `hops` (1 or 2) undirected entity-valued edges,
  /// excluding the seed. Throws UnknownEntityError / ConfigError.
  std::set<std::string> neighbors(const std::string& entity, int hops) const;

  /// Shortest undirected distance, if it is <= max_hops.
  std::optional<int> distance(const std::string& a, const std::string& b, int max_hops) const;

  /// Entity ids mentioned verbatim (token subsequence) in `tokens`, in
  /// stable-id order.
  std::vector<std::string> mentioned_entities(const Tokens& tokens) const;

 private:
  std::vector<KnowledgeTriple> triples_;
  std::vector<std::string> entities_;
  std::unordered_map<std::string, std::size_t> entity_ids_;
  std::set<std::string> attributes_;
  std::map<std::string, std::string> domains_;
  std::vector<std::vector<std::size_t>> subject_index_;
  std::vector<std::vector<std::size_t>> incident_index_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::unordered_map<std::string, std::vector<std::size_t>> first_token_index_;
  std::vector<Tokens> entity_tokens_;
  std::size_t duplicates_removed_ = 0;
};

/// Reads a JSON Lines triple file. Accepts {"s","p","o"} records and
/// release-style records carrying a "knowledge" (or "kg") list of [s,p,o].
/// The optional sidecar holds {"entity","domain"} lines.
KnowledgeGraph load_graph(const std::string& path, const std::string& entity_tags_path = "");

void save_graph(const KnowledgeGraph& graph, const std::string& path,
                const std::string& entity_tags_path = "");

struct DialogueContext;
struct Goal;

inline constexpr std::size_t kDefaultKnowledgeLimit = 20;

/// Per-turn knowledge pool: goal-topic triples, then triples of entities
/// mentioned in the last two utterances, then triples of the topic's 1-hop
/// neighbours; ordered by tier then triple id, deduplicated, truncated.
std::vector<KnowledgeTriple> candidate_knowledge(const KnowledgeGraph& graph,
                                                 const DialogueContext& context,
                                                 const Goal& goal,
                                                 std::size_t limit = kDefaultKnowledgeLimit);

Tokens linearize(const KnowledgeTriple& triple);

}  // namespace mgcg
