#pragma once

// Graphs and parameters for exact RGCN property checks. Every per-slot
// degree is a power of two and every value a small dyadic rational, so the
// forward pass involves no rounding and relabeled graphs must agree bit for
// bit.

#include "kgrec/kg.hpp"
#include "kgrec/rgcn.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

namespace kgrec::testing {

inline constexpr std::array<int, kEntityTypes> kDyadicCounts = {8, 8, 4, 2};

/// 8 users each visiting 2 POIs, every POI visited twice, POIs paired by
/// adjacency, 2 POIs per category, 4 per region; wiring drawn from `rng`.
inline std::vector<Triple> dyadic_triples(std::mt19937_64& rng) {
  const int n = 8;
  std::vector<int> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  std::shuffle(sigma.begin(), sigma.end(), rng);
  const int shift = std::uniform_int_distribution<int>(1, n - 1)(rng);
  std::vector<Triple> out;
  for (int u = 0; u < n; ++u) {
    out.push_back({{EntityType::user, u}, Relation::visit, {EntityType::poi, sigma[u]}});
    out.push_back({{EntityType::user, u}, Relation::visit, {EntityType::poi, sigma[(u + shift) % n]}});
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n; i += 2) {
    out.push_back({{EntityType::poi, order[i]}, Relation::adjacent, {EntityType::poi, order[i + 1]}});
    out.push_back({{EntityType::poi, order[i + 1]}, Relation::adjacent, {EntityType::poi, order[i]}});
  }
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n; ++i) {
    out.push_back({{EntityType::poi, order[i]}, Relation::categorized, {EntityType::category, i / 2}});
  }
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n; ++i) {
    out.push_back({{EntityType::poi, order[i]}, Relation::located, {EntityType::region, i / 4}});
  }
  return out;
}

using Relabeling = std::array<std::vector<int>, kEntityTypes>;

inline Relabeling random_relabeling(const std::array<int, kEntityTypes>& counts, std::mt19937_64& rng) {
  Relabeling perm;
  for (int t = 0; t < kEntityTypes; ++t) {
    perm[t].resize(static_cast<std::size_t>(counts[t]));
    std::iota(perm[t].begin(), perm[t].end(), 0);
    std::shuffle(perm[t].begin(), perm[t].end(), rng);
  }
  return perm;
}

inline EntityRef relabel(EntityRef e, const Relabeling& perm) {
  return {e.type, perm[static_cast<std::size_t>(e.type)][static_cast<std::size_t>(e.index)]};
}

inline KnowledgeGraph make_kg(const std::array<int, kEntityTypes>& counts, const std::vector<Triple>& triples,
                              const Relabeling* perm = nullptr) {
  KnowledgeGraph g(counts);
  for (const Triple& t : triples) {
    g.add(perm ? Triple{relabel(t.head, *perm), t.relation, relabel(t.tail, *perm)} : t);
  }
  g.finalize();
  return g;
}

/// Integer base embeddings in [-3, 3] and weights in {-1, -1/2, 0, 1/2, 1}.
inline RgcnParams dyadic_params(int nodes, int layers, int dim, std::mt19937_64& rng) {
  RgcnParams p = RgcnParams::init(nodes, RgcnConfig{layers, dim}, rng);
  std::uniform_int_distribution<int> base(-3, 3), weight(-2, 2);
  for (Eigen::Index i = 0; i < p.base.value.size(); ++i) p.base.value.data()[i] = base(rng);
  for (nn::Parameter* w : p.parameters()) {
    if (w == &p.base) continue;
    for (Eigen::Index i = 0; i < w->value.size(); ++i) w->value.data()[i] = 0.5 * weight(rng);
  }
  return p;
}

/// Undirected hop distances from `source` over every relation.
inline std::vector<int> hop_distances(const KnowledgeGraph& g, int source) {
  std::vector<int> dist(static_cast<std::size_t>(g.node_count()), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int s = 0; s < kDirectedRelations; ++s) {
      for (int w : g.neighbors(v, s)) {
        if (dist[static_cast<std::size_t>(w)] < 0) {
          dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
          q.push(w);
        }
      }
    }
  }
  return dist;
}

}  // namespace kgrec::testing
