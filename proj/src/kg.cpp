#include "kgrec/kg.hpp"

#include "kgrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace kgrec {

namespace {
constexpr double kEarthRadiusKm = 6371.0;
constexpr std::array<std::string_view, kEntityTypes> kTypeNames = {"user", "poi", "category",
                                                                   "region"};
constexpr std::array<std::string_view, kRelations> kRelationNames = {"visit", "adjacent",
                                                                     "categorized", "located"};
}  // namespace

std::string_view to_string(EntityType t) { return kTypeNames[static_cast<int>(t)]; }

EntityType entity_type_from(std::string_view name) {
  for (int i = 0; i < kEntityTypes; ++i) {
    if (kTypeNames[i] == name) return static_cast<EntityType>(i);
  }
  throw DataError("unknown entity type '" + std::string(name) + "'");
}

std::string_view to_string(Relation r) { return kRelationNames[static_cast<int>(r)]; }

Relation relation_from(std::string_view name) {
  for (int i = 0; i < kRelations; ++i) {
    if (kRelationNames[i] == name) return static_cast<Relation>(i);
  }
  throw DataError("unknown relation '" + std::string(name) + "'");
}

EntityType head_type(Relation r) {
  return r == Relation::visit ? EntityType::user : EntityType::poi;
}

EntityType tail_type(Relation r) {
  switch (r) {
    case Relation::visit:
    case Relation::adjacent:
      return EntityType::poi;
    case Relation::categorized:
      return EntityType::category;
    case Relation::located:
      return EntityType::region;
  }
  return EntityType::poi;
}

KnowledgeGraph::KnowledgeGraph(std::array<int, kEntityTypes> counts) : counts_(counts) {
  offsets_[0] = 0;
  for (int i = 0; i < kEntityTypes; ++i) {
    if (counts[i] < 0) throw ContractError("negative entity count");
    offsets_[i + 1] = offsets_[i] + counts[i];
  }
}

EntityRef KnowledgeGraph::ref_of(int node) const {
  for (int i = 0; i < kEntityTypes; ++i) {
    if (node < offsets_[i + 1]) return EntityRef{static_cast<EntityType>(i), node - offsets_[i]};
  }
  throw ContractError("node id " + std::to_string(node) + " out of range");
}

std::uint64_t KnowledgeGraph::key(const Triple& t) const {
  const auto n = static_cast<std::uint64_t>(node_count());
  return (static_cast<std::uint64_t>(node_id(t.head)) * kRelations +
          static_cast<std::uint64_t>(t.relation)) * n +
         static_cast<std::uint64_t>(node_id(t.tail));
}

bool KnowledgeGraph::add(const Triple& t) {
  auto in_range = [this](EntityRef e) { return e.index >= 0 && e.index < count(e.type); };
  if (t.head.type != head_type(t.relation) || t.tail.type != tail_type(t.relation)) {
    throw ContractError("triple violates type constraint for relation " +
                        std::string(to_string(t.relation)));
  }
  if (!in_range(t.head) || !in_range(t.tail)) throw ContractError("triple entity out of range");
  if (t.relation == Relation::adjacent && t.head == t.tail) {
    throw ContractError("adjacent triple must join two distinct POIs");
  }
  if (!keys_.insert(key(t)).second) return false;
  triples_.push_back(t);
  finalized_ = false;
  return true;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  if (t.head.index < 0 || t.head.index >= count(t.head.type) || t.tail.index < 0 ||
      t.tail.index >= count(t.tail.type)) {
    return false;
  }
  return keys_.contains(key(t));
}

std::array<std::size_t, kRelations> KnowledgeGraph::relation_counts() const {
  std::array<std::size_t, kRelations> out{};
  for (const Triple& t : triples_) ++out[static_cast<int>(t.relation)];
  return out;
}

void KnowledgeGraph::finalize() {
  const int n = node_count();
  std::array<std::vector<std::vector<int>>, kDirectedRelations> lists;
  for (auto& l : lists) l.assign(static_cast<std::size_t>(n), {});
  for (const Triple& t : triples_) {
    const int h = node_id(t.head);
    const int tl = node_id(t.tail);
    lists[directed_slot(t.relation, Direction::forward)][h].push_back(tl);
    lists[directed_slot(t.relation, Direction::inverse)][tl].push_back(h);
  }
  for (int s = 0; s < kDirectedRelations; ++s) {
    auto& off = adj_offsets_[s];
    auto& nodes = adj_nodes_[s];
    off.assign(static_cast<std::size_t>(n) + 1, 0);
    nodes.clear();
    for (int i = 0; i < n; ++i) {
      auto& l = lists[s][i];
      std::sort(l.begin(), l.end());
      nodes.insert(nodes.end(), l.begin(), l.end());
      off[i + 1] = static_cast<int>(nodes.size());
    }
  }
  finalized_ = true;
}

std::span<const int> KnowledgeGraph::neighbors(int node, int slot) const {
  if (!finalized_) throw ContractError("KnowledgeGraph::neighbors before finalize()");
  const auto& off = adj_offsets_[slot];
  return std::span<const int>(adj_nodes_[slot]).subspan(
      static_cast<std::size_t>(off[node]), static_cast<std::size_t>(off[node + 1] - off[node]));
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dphi = (lat2 - lat1) * rad;
  const double dlambda = (lon2 - lon1) * rad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double a = s1 * s1 + std::cos(lat1 * rad) * std::cos(lat2 * rad) * s2 * s2;
  const double c = 2.0 * std::atan2(std::sqrt(a), std::sqrt(std::max(0.0, 1.0 - a)));
  return kEarthRadiusKm * c;
}

std::vector<std::pair<int, int>> adjacent_pairs(std::span<const PoiMeta> pois, double d_km) {
  if (!(d_km > 0.0)) throw ConfigError("adjacency threshold d_km must be > 0");
  // The meridian arc between two latitudes never exceeds the great-circle
  // distance, so pairs closer than d lie within d of each other in latitude.
  const double band_deg = d_km / (kEarthRadiusKm * std::numbers::pi / 180.0);
  std::vector<int> order(pois.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pois[a].lat < pois[b].lat; });
  std::vector<std::pair<int, int>> out;
  for (std::size_t x = 0; x < order.size(); ++x) {
    const PoiMeta& a = pois[order[x]];
    for (std::size_t y = x + 1; y < order.size(); ++y) {
      const PoiMeta& b = pois[order[y]];
      // Slack keeps rounding in the band bound from dropping a true pair.
      if (b.lat - a.lat > band_deg * (1.0 + 1e-9) + 1e-12) break;
      if (haversine_km(a.lat, a.lon, b.lat, b.lon) < d_km) {
        out.emplace_back(std::min(order[x], order[y]), std::max(order[x], order[y]));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

KnowledgeGraph build_kg(const DatasetSplit& split, const Catalog& catalog, double d_km) {
  const int n_poi = static_cast<int>(catalog.pois.size());
  const int n_cat = static_cast<int>(catalog.categories.size());
  KnowledgeGraph g({static_cast<int>(catalog.users.size()), n_poi, n_cat, catalog.region_count});
  for (const UserSequence& us : split.users) {
    const int u = catalog.user(us.user_id);
    for (const CheckInEvent& e : us.train) {
      g.add({{EntityType::user, u}, Relation::visit, {EntityType::poi, catalog.poi(e.poi_id)}});
    }
  }
  for (const auto& [a, b] : adjacent_pairs(catalog.poi_meta, d_km)) {
    g.add({{EntityType::poi, a}, Relation::adjacent, {EntityType::poi, b}});
    g.add({{EntityType::poi, b}, Relation::adjacent, {EntityType::poi, a}});
  }
  for (int p = 0; p < n_poi; ++p) {
    const PoiMeta& m = catalog.poi_meta[p];
    if (m.category < 0 || m.category >= n_cat) {
      throw DataError("POI '" + catalog.pois[p] + "' lacks a category");
    }
    if (m.region < 0 || m.region >= catalog.region_count) {
      throw DataError("POI '" + catalog.pois[p] + "' lacks a region");
    }
    g.add({{EntityType::poi, p}, Relation::categorized, {EntityType::category, m.category}});
    g.add({{EntityType::poi, p}, Relation::located, {EntityType::region, m.region}});
  }
  g.finalize();
  return g;
}

nlohmann::json kg_to_json(const KnowledgeGraph& g) {
  nlohmann::json counts;
  for (EntityType t : kAllEntityTypes) counts[std::string(to_string(t))] = g.count(t);
  nlohmann::json triples;
  for (Relation r : kAllRelations) triples[std::string(to_string(r))] = nlohmann::json::array();
  for (const Triple& t : g.triples()) {
    triples[std::string(to_string(t.relation))].push_back({t.head.index, t.tail.index});
  }
  return {{"entity_counts", counts}, {"triples", triples}};
}

KnowledgeGraph kg_from_json(const nlohmann::json& j) {
  std::array<int, kEntityTypes> counts{};
  for (EntityType t : kAllEntityTypes) {
    counts[static_cast<int>(t)] = j.at("entity_counts").at(std::string(to_string(t))).get<int>();
  }
  KnowledgeGraph g(counts);
  for (Relation r : kAllRelations) {
    for (const auto& pair : j.at("triples").at(std::string(to_string(r)))) {
      g.add({{head_type(r), pair.at(0).get<int>()}, r, {tail_type(r), pair.at(1).get<int>()}});
    }
  }
  g.finalize();
  return g;
}

nlohmann::json kg_stats_json(const KnowledgeGraph& g) {
  nlohmann::json out;
  const auto rc = g.relation_counts();
  for (Relation r : kAllRelations) out[std::string(to_string(r))] = rc[static_cast<int>(r)];
  out["total"] = g.triples().size();
  out["nodes"] = g.node_count();
  return out;
}

}  // namespace kgrec
