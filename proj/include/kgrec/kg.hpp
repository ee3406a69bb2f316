#pragma once

// Heterogeneous check-in knowledge graph over users, POIs, categories and
// regions with four relations.

#include "kgrec/ingest.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

enum class EntityType : std::uint8_t { user = 0, poi = 1, category = 2, region = 3 };
inline constexpr int kEntityTypes = 4;
inline constexpr std::array<EntityType, kEntityTypes> kAllEntityTypes = {
    EntityType::user, EntityType::poi, EntityType::category, EntityType::region};

std::string_view to_string(EntityType t);
EntityType entity_type_from(std::string_view name);

struct EntityRef {
  EntityType type = EntityType::user;
  int index = 0;
  auto operator<=>(const EntityRef&) const = default;
};

enum class Relation : std::uint8_t { visit = 0, adjacent = 1, categorized = 2, located = 3 };
inline constexpr int kRelations = 4;
inline constexpr std::array<Relation, kRelations> kAllRelations = {
    Relation::visit, Relation::adjacent, Relation::categorized, Relation::located};

std::string_view to_string(Relation r);
Relation relation_from(std::string_view name);
/// Head and tail entity types a relation admits.
EntityType head_type(Relation r);
EntityType tail_type(Relation r);

struct Triple {
  EntityRef head;
  Relation relation = Relation::visit;
  EntityRef tail;
  auto operator<=>(const Triple&) const = default;
};

enum class Direction : std::uint8_t { forward = 0, inverse = 1 };
/// Number of directed relation slots: every relation in both directions.
inline constexpr int kDirectedRelations = 2 * kRelations;
inline constexpr int directed_slot(Relation r, Direction d) {
  return 2 * static_cast<int>(r) + static_cast<int>(d);
}

/// Typed entity registry plus triple store.
///
/// Nodes are numbered globally: users first, then POIs, categories, regions.
/// Adjacency lists are materialised per directed relation slot; the
/// `adjacent` relation is stored with both orientations as triples.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(std::array<int, kEntityTypes> counts);

  /// Adds a triple after checking type constraints. Returns false for a
  /// duplicate. Invalidates adjacency until finalize().
  bool add(const Triple& t);
  /// Builds the per-slot neighbor lists.
  void finalize();

  int count(EntityType t) const { return counts_[static_cast<int>(t)]; }
  const std::array<int, kEntityTypes>& counts() const { return counts_; }
  int node_count() const { return offsets_[kEntityTypes]; }
  int offset(EntityType t) const { return offsets_[static_cast<int>(t)]; }
  int node_id(EntityRef e) const { return offsets_[static_cast<int>(e.type)] + e.index; }
  EntityRef ref_of(int node) const;

  const std::vector<Triple>& triples() const { return triples_; }
  bool contains(const Triple& t) const;
  std::array<std::size_t, kRelations> relation_counts() const;

  /// Neighbors of `node` in one directed slot, ascending node ids.
  std::span<const int> neighbors(int node, int slot) const;

 private:
  std::uint64_t key(const Triple& t) const;

  std::array<int, kEntityTypes> counts_{};
  std::array<int, kEntityTypes + 1> offsets_{};
  std::vector<Triple> triples_;
  std::unordered_set<std::uint64_t> keys_;
  bool finalized_ = false;
  std::array<std::vector<int>, kDirectedRelations> adj_offsets_;
  std::array<std::vector<int>, kDirectedRelations> adj_nodes_;
};

/// Great-circle distance on a sphere of radius 6371.0 km.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Unordered POI pairs (i < j) with haversine distance strictly below d_km.
/// Uses a latitude-band sweep; exact.
std::vector<std::pair<int, int>> adjacent_pairs(std::span<const PoiMeta> pois, double d_km);

/// Builds the graph: visit triples from the train split only (deduplicated),
/// adjacency under d_km, one categorized and one located triple per POI.
KnowledgeGraph build_kg(const DatasetSplit& split, const Catalog& catalog, double d_km);

nlohmann::json kg_to_json(const KnowledgeGraph& g);
KnowledgeGraph kg_from_json(const nlohmann::json& j);
nlohmann::json kg_stats_json(const KnowledgeGraph& g);

}  // namespace kgrec
