#include "../support/gradcheck.hpp"
#include "../support/rgcn_fixtures.hpp"

#include "kgrec/error.hpp"
#include "kgrec/rgcn.hpp"

#include <doctest.h>

using namespace kgrec;
using namespace kgrec::testing;

namespace {

// user u visits p0 and p1; p0 and p1 are adjacent.
KnowledgeGraph three_nodes() {
  KnowledgeGraph g({1, 2, 0, 0});
  g.add({{EntityType::user, 0}, Relation::visit, {EntityType::poi, 0}});
  g.add({{EntityType::user, 0}, Relation::visit, {EntityType::poi, 1}});
  g.add({{EntityType::poi, 0}, Relation::adjacent, {EntityType::poi, 1}});
  g.add({{EntityType::poi, 1}, Relation::adjacent, {EntityType::poi, 0}});
  g.finalize();
  return g;
}

RgcnParams scalar_params(int layers) {
  nn::Rng rng(1);
  RgcnParams p = RgcnParams::init(3, RgcnConfig{layers, 1}, rng);
  p.base.value = nn::Matrix(3, 1);
  p.base.value << 1.0, 2.0, -1.0;
  const std::array<double, kDirectedRelations> w = {2.0, 3.0, -1.0, 0.25, 7.0, 7.0, 7.0, 7.0};
  for (int l = 0; l < layers; ++l) {
    p.self_loop[l].value(0, 0) = 0.5;
    for (int s = 0; s < kDirectedRelations; ++s) p.relation[l][s].value(0, 0) = w[s];
  }
  return p;
}

}  // namespace

TEST_CASE("three-node forward matches hand computation") {
  const auto g = three_nodes();
  const RelationalAdjacency adj(g);
  auto p1 = scalar_params(1);
  const nn::Matrix h1 = encode_values(adj, p1, Activation::identity);
  // u:  0.5*1 + 2*mean(2, -1)
  // p0: 0.5*2 + 3*1 + (-1)*(-1) + 0.25*(-1)
  // p1: 0.5*(-1) + 3*1 + (-1)*2 + 0.25*2
  CHECK(h1(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(h1(1, 0) == doctest::Approx(4.75).epsilon(1e-12));
  CHECK(h1(2, 0) == doctest::Approx(1.0).epsilon(1e-12));

  auto p2 = scalar_params(2);
  const nn::Matrix h2 = encode_values(adj, p2, Activation::relu);
  CHECK(std::abs(h2(0, 0) - 6.5) < 1e-6);
  CHECK(std::abs(h2(1, 0) - 6.125) < 1e-6);
  CHECK(std::abs(h2(2, 0) - 1.4375) < 1e-6);
}

TEST_CASE("duplicate neighbors average to a single neighbor") {
  // Two users with identical states visiting one POI equal one such user.
  KnowledgeGraph a({2, 1, 0, 0});
  a.add({{EntityType::user, 0}, Relation::visit, {EntityType::poi, 0}});
  a.add({{EntityType::user, 1}, Relation::visit, {EntityType::poi, 0}});
  a.finalize();
  KnowledgeGraph b({2, 1, 0, 0});
  b.add({{EntityType::user, 0}, Relation::visit, {EntityType::poi, 0}});
  b.finalize();
  nn::Rng rng(4);
  RgcnParams p = RgcnParams::init(3, RgcnConfig{1, 2}, rng);
  p.base.value.row(1) = p.base.value.row(0);
  const nn::Matrix ha = encode_values(RelationalAdjacency(a), p);
  const nn::Matrix hb = encode_values(RelationalAdjacency(b), p);
  CHECK((ha.row(2) - hb.row(2)).norm() < 1e-12);
}

TEST_CASE("permutation equivariance is exact") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto triples = dyadic_triples(rng);
    const KnowledgeGraph g0 = make_kg(kDyadicCounts, triples);
    const Relabeling perm = random_relabeling(kDyadicCounts, rng);
    const KnowledgeGraph g1 = make_kg(kDyadicCounts, triples, &perm);
    RgcnParams p0 = dyadic_params(g0.node_count(), 3, 3, rng);
    RgcnParams p1 = p0;
    for (int v = 0; v < g0.node_count(); ++v) {
      p1.base.value.row(g1.node_id(relabel(g0.ref_of(v), perm))) = p0.base.value.row(v);
    }
    const nn::Matrix h0 = encode_values(RelationalAdjacency(g0), p0);
    const nn::Matrix h1 = encode_values(RelationalAdjacency(g1), p1);
    for (int v = 0; v < g0.node_count(); ++v) {
      CHECK(h1.row(g1.node_id(relabel(g0.ref_of(v), perm))) == h0.row(v));
    }
  }
}

TEST_CASE("nodes beyond M hops do not affect a node") {
  // POIs on a path, each with its own category and region.
  const int n = 10;
  KnowledgeGraph g({0, n, n, n});
  for (int i = 0; i < n; ++i) {
    if (i + 1 < n) {
      g.add({{EntityType::poi, i}, Relation::adjacent, {EntityType::poi, i + 1}});
      g.add({{EntityType::poi, i + 1}, Relation::adjacent, {EntityType::poi, i}});
    }
    g.add({{EntityType::poi, i}, Relation::categorized, {EntityType::category, i}});
    g.add({{EntityType::poi, i}, Relation::located, {EntityType::region, i}});
  }
  g.finalize();
  const RelationalAdjacency adj(g);
  nn::Rng rng(8);
  RgcnParams p = RgcnParams::init(g.node_count(), RgcnConfig{3, 4}, rng);
  const nn::Matrix base = encode_values(adj, p);
  std::mt19937_64 noise(3);
  for (int v = 0; v < g.node_count(); ++v) {
    const auto dist = hop_distances(g, v);
    RgcnParams q = p;
    for (int w = 0; w < g.node_count(); ++w) {
      if (dist[w] < 0 || dist[w] > 3) q.base.value.row(w) = random_matrix(1, 4, noise);
    }
    CHECK(encode_values(adj, q).row(v) == base.row(v));
  }
}

TEST_CASE("zero layers return the base embeddings; matrix count") {
  const auto g = three_nodes();
  nn::Rng rng(2);
  RgcnParams p = RgcnParams::init(3, RgcnConfig{0, 4}, rng);
  CHECK(encode_values(RelationalAdjacency(g), p) == p.base.value);
  RgcnParams q = RgcnParams::init(3, RgcnConfig{3, 4}, rng);
  CHECK(q.matrix_count() == 3 * (2 * kRelations + 1));
  CHECK_THROWS_AS(RgcnParams::init(3, RgcnConfig{1, 0}, rng), ConfigError);
}
