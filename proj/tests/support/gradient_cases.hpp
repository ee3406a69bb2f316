#pragma once

// Random small instances of every differentiable operation and both
// tokenizer losses, shared by the unit tests and the acceptance suite.

#include "gradcheck.hpp"

#include "kgrec/kg.hpp"
#include "kgrec/rgcn.hpp"
#include "kgrec/tokenizer.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kgrec::testing {

struct GradInstance {
  TapeFn f;
  /// When set, central differences are taken on this objective instead of
  /// f's forward values (for stop-gradient semantics).
  ValueFn value;
  std::vector<Matrix> inputs;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(std::mt19937_64&)> make;
};

inline GradCheckResult run_instance(const GradInstance& inst) {
  return inst.value ? gradcheck_against(inst.f, inst.value, inst.inputs) : gradcheck(inst.f, inst.inputs);
}

/// Entries bounded away from zero so relu kinks are never straddled.
inline Matrix away_from_zero(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  Matrix m = random_matrix(r, c, rng);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double x = m.data()[i];
    m.data()[i] = (x < 0 ? -1.0 : 1.0) * (0.1 + 0.9 * std::abs(x));
  }
  return m;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// 2 users, 3 POIs, 2 categories, 1 region with every relation present.
inline std::shared_ptr<KnowledgeGraph> tiny_kg() {
  auto g = std::make_shared<KnowledgeGraph>(std::array<int, kEntityTypes>{2, 3, 2, 1});
  auto u = [](int i) { return EntityRef{EntityType::user, i}; };
  auto p = [](int i) { return EntityRef{EntityType::poi, i}; };
  g->add({u(0), Relation::visit, p(0)});
  g->add({u(0), Relation::visit, p(1)});
  g->add({u(1), Relation::visit, p(2)});
  g->add({p(0), Relation::adjacent, p(1)});
  g->add({p(1), Relation::adjacent, p(0)});
  g->add({p(0), Relation::categorized, {EntityType::category, 0}});
  g->add({p(1), Relation::categorized, {EntityType::category, 1}});
  g->add({p(2), Relation::categorized, {EntityType::category, 0}});
  for (int i = 0; i < 3; ++i) g->add({p(i), Relation::located, {EntityType::region, 0}});
  g->finalize();
  return g;
}

inline std::vector<GradCase> gradient_cases() {
  using namespace kgrec::nn;
  std::vector<GradCase> cases;
  auto unary = [&cases](std::string name, std::function<Var(Var)> op, bool kinked = false) {
    cases.push_back({name, [op, kinked](std::mt19937_64& rng) {
                       const auto r = uniform_int(rng, 1, 4), c = uniform_int(rng, 1, 5);
                       return GradInstance{[op](Tape&, std::span<const Var> x) { return op(x[0]); },
                                           {},
                                           {kinked ? away_from_zero(r, c, rng) : random_matrix(r, c, rng)}};
                     }});
  };
  auto binary = [&cases](std::string name, std::function<Var(Var, Var)> op) {
    cases.push_back({name, [op](std::mt19937_64& rng) {
                       const auto r = uniform_int(rng, 1, 4), c = uniform_int(rng, 1, 5);
                       return GradInstance{[op](Tape&, std::span<const Var> x) { return op(x[0], x[1]); },
                                           {},
                                           {random_matrix(r, c, rng), random_matrix(r, c, rng)}};
                     }});
  };

  cases.push_back({"matmul", [](std::mt19937_64& rng) {
                     const auto n = uniform_int(rng, 1, 4), k = uniform_int(rng, 1, 4), m = uniform_int(rng, 1, 4);
                     return GradInstance{[](Tape&, std::span<const Var> x) { return matmul(x[0], x[1]); },
                                         {},
                                         {random_matrix(n, k, rng), random_matrix(k, m, rng)}};
                   }});
  unary("transpose", [](Var a) { return transpose(a); });
  binary("add", [](Var a, Var b) { return add(a, b); });
  cases.push_back({"add_bias", [](std::mt19937_64& rng) {
                     const auto r = uniform_int(rng, 1, 4), c = uniform_int(rng, 1, 5);
                     return GradInstance{[](Tape&, std::span<const Var> x) { return add_bias(x[0], x[1]); },
                                         {},
                                         {random_matrix(r, c, rng), random_matrix(1, c, rng)}};
                   }});
  binary("sub", [](Var a, Var b) { return sub(a, b); });
  binary("mul", [](Var a, Var b) { return mul(a, b); });
  unary("scale", [](Var a) { return scale(a, -1.7); });
  unary("relu", [](Var a) { return relu(a); }, true);
  unary("sigmoid", [](Var a) { return sigmoid(scale(a, 3.0)); });
  unary("softmax_rows", [](Var a) { return softmax_rows(scale(a, 2.0)); });
  cases.push_back({"layer_norm", [](std::mt19937_64& rng) {
                     const auto r = uniform_int(rng, 1, 4), c = uniform_int(rng, 2, 6);
                     return GradInstance{
                         [](Tape&, std::span<const Var> x) { return layer_norm(x[0], x[1], x[2]); },
                         {},
                         {random_matrix(r, c, rng), random_matrix(1, c, rng, 0.5, 1.5), random_matrix(1, c, rng)}};
                   }});
  cases.push_back({"embedding_lookup", [](std::mt19937_64& rng) {
                     const int rows = uniform_int(rng, 2, 5);
                     std::vector<int> idx(static_cast<std::size_t>(uniform_int(rng, 1, 6)));
                     for (int& i : idx) i = uniform_int(rng, 0, rows - 1);
                     return GradInstance{
                         [idx](Tape&, std::span<const Var> x) { return embedding_lookup(x[0], idx); },
                         {},
                         {random_matrix(rows, 3, rng)}};
                   }});
  cases.push_back({"concat_rows", [](std::mt19937_64& rng) {
                     const auto c = uniform_int(rng, 1, 4);
                     return GradInstance{[](Tape&, std::span<const Var> x) { return concat_rows(x); },
                                         {},
                                         {random_matrix(uniform_int(rng, 1, 3), c, rng),
                                          random_matrix(uniform_int(rng, 1, 3), c, rng),
                                          random_matrix(uniform_int(rng, 1, 3), c, rng)}};
                   }});
  cases.push_back({"concat_cols", [](std::mt19937_64& rng) {
                     const auto r = uniform_int(rng, 1, 4);
                     return GradInstance{[](Tape&, std::span<const Var> x) { return concat_cols(x); },
                                         {},
                                         {random_matrix(r, uniform_int(rng, 1, 3), rng),
                                          random_matrix(r, uniform_int(rng, 1, 3), rng)}};
                   }});
  cases.push_back({"slice_rows", [](std::mt19937_64& rng) {
                     const int r = uniform_int(rng, 2, 5);
                     const int start = uniform_int(rng, 0, r - 1), count = uniform_int(rng, 1, r - start);
                     return GradInstance{
                         [start, count](Tape&, std::span<const Var> x) { return slice_rows(x[0], start, count); },
                         {},
                         {random_matrix(r, 3, rng)}};
                   }});
  cases.push_back({"slice_cols", [](std::mt19937_64& rng) {
                     const int c = uniform_int(rng, 2, 5);
                     const int start = uniform_int(rng, 0, c - 1), count = uniform_int(rng, 1, c - start);
                     return GradInstance{
                         [start, count](Tape&, std::span<const Var> x) { return slice_cols(x[0], start, count); },
                         {},
                         {random_matrix(3, c, rng)}};
                   }});
  unary("sum", [](Var a) { return sum(a); });
  unary("mean", [](Var a) { return mean(a); });
  unary("row_sum", [](Var a) { return row_sum(a); });
  binary("squared_distance", [](Var a, Var b) { return squared_distance(a, b); });
  cases.push_back({"cross_entropy", [](std::mt19937_64& rng) {
                     const int r = uniform_int(rng, 1, 4), c = uniform_int(rng, 2, 6);
                     std::vector<int> targets(static_cast<std::size_t>(r));
                     for (int& t : targets) t = uniform_int(rng, 0, c - 1);
                     return GradInstance{
                         [targets](Tape&, std::span<const Var> x) { return cross_entropy(x[0], targets); },
                         {},
                         {random_matrix(r, c, rng, -2.0, 2.0)}};
                   }});
  cases.push_back({"binary_cross_entropy", [](std::mt19937_64& rng) {
                     const int r = uniform_int(rng, 1, 6);
                     std::vector<Real> labels(static_cast<std::size_t>(r));
                     for (Real& l : labels) l = uniform_int(rng, 0, 1);
                     return GradInstance{
                         [labels](Tape&, std::span<const Var> x) { return binary_cross_entropy(x[0], labels); },
                         {},
                         {random_matrix(r, 1, rng, 0.05, 0.95)}};
                   }});
  cases.push_back({"stop_gradient", [](std::mt19937_64& rng) {
                     const Matrix x0 = random_matrix(uniform_int(rng, 1, 4), uniform_int(rng, 1, 4), rng);
                     // sum(sg(x) * x): only the second factor carries gradient.
                     return GradInstance{
                         [](Tape&, std::span<const Var> x) { return sum(mul(stop_gradient(x[0]), x[0])); },
                         [x0](const std::vector<Matrix>& x) { return x0.cwiseProduct(x[0]).sum(); },
                         {x0}};
                   }});
  cases.push_back({"spmm", [](std::mt19937_64& rng) {
                     const int r = uniform_int(rng, 1, 5), k = uniform_int(rng, 1, 5);
                     std::vector<Eigen::Triplet<Real>> trips;
                     for (int i = 0; i < r; ++i) {
                       for (int j = 0; j < k; ++j) {
                         if (uniform_int(rng, 0, 2) == 0) trips.emplace_back(i, j, random_matrix(1, 1, rng)(0, 0));
                       }
                     }
                     SparseMatrix a(r, k);
                     a.setFromTriplets(trips.begin(), trips.end());
                     return GradInstance{[a](Tape&, std::span<const Var> x) { return spmm(a, x[0]); },
                                         {},
                                         {random_matrix(k, uniform_int(rng, 1, 3), rng)}};
                   }});
  cases.push_back({"causal_self_attention", [](std::mt19937_64& rng) {
                     const int heads = uniform_int(rng, 1, 3), hd = uniform_int(rng, 1, 3), t = uniform_int(rng, 1, 6);
                     return GradInstance{
                         [heads](Tape&, std::span<const Var> x) { return causal_self_attention(x[0], heads); },
                         {},
                         {random_matrix(t, 3 * heads * hd, rng)}};
                   }});
  cases.push_back({"dropout", [](std::mt19937_64& rng) {
                     const std::uint64_t seed = rng();
                     return GradInstance{[seed](Tape&, std::span<const Var> x) {
                                           Rng mask_rng(seed);
                                           return dropout(x[0], 0.3, mask_rng);
                                         },
                                         {},
                                         {random_matrix(uniform_int(rng, 1, 4), uniform_int(rng, 2, 6), rng)}};
                   }});
  cases.push_back({"rgcn_layer", [](std::mt19937_64& rng) {
                     auto g = tiny_kg();
                     auto adj = std::make_shared<RelationalAdjacency>(*g);
                     const int d = uniform_int(rng, 1, 3);
                     std::vector<Matrix> inputs = {random_matrix(g->node_count(), d, rng)};
                     for (int i = 0; i <= kDirectedRelations; ++i) inputs.push_back(random_matrix(d, d, rng));
                     return GradInstance{[g, adj](Tape&, std::span<const Var> x) {
                                           return rgcn_layer(x[0], *adj, x[1], x.subspan(2), Activation::identity);
                                         },
                                         {},
                                         std::move(inputs)};
                   }});
  cases.push_back({"rgcn_layer_relu", [](std::mt19937_64& rng) {
                     auto g = tiny_kg();
                     auto adj = std::make_shared<RelationalAdjacency>(*g);
                     const int d = uniform_int(rng, 1, 3);
                     std::vector<Matrix> inputs = {random_matrix(g->node_count(), d, rng)};
                     for (int i = 0; i <= kDirectedRelations; ++i) inputs.push_back(random_matrix(d, d, rng));
                     return GradInstance{[g, adj](Tape&, std::span<const Var> x) {
                                           return rgcn_layer(x[0], *adj, x[1], x.subspan(2), Activation::relu);
                                         },
                                         {},
                                         std::move(inputs)};
                   }});
  cases.push_back({"loss_kg", [](std::mt19937_64& rng) {
                     auto g = tiny_kg();
                     std::vector<LabeledTriple> batch;
                     for (const Triple& t : g->triples()) batch.push_back({t, 1.0});
                     batch.push_back({{{EntityType::user, 1}, Relation::visit, {EntityType::poi, 0}}, 0.0});
                     batch.push_back({{{EntityType::poi, 2}, Relation::adjacent, {EntityType::poi, 0}}, 0.0});
                     batch.push_back({{{EntityType::poi, 2}, Relation::categorized, {EntityType::category, 1}}, 0.0});
                     const int d = uniform_int(rng, 1, 4);
                     std::vector<Matrix> inputs = {random_matrix(g->node_count(), d, rng)};
                     for (int r = 0; r < kRelations; ++r) inputs.push_back(random_matrix(d, d, rng));
                     return GradInstance{[g, batch](Tape&, std::span<const Var> x) {
                                           return loss_kg(*g, x[0], batch, x.subspan(1));
                                         },
                                         {},
                                         std::move(inputs)};
                   }});
  cases.push_back({"loss_rq", [](std::mt19937_64& rng) {
                     const int levels = uniform_int(rng, 1, 3), n = uniform_int(rng, 1, 4), d = uniform_int(rng, 1, 4);
                     const double beta = 0.25;
                     // inputs: z_1..z_L then c_1..c_L
                     std::vector<Matrix> inputs;
                     for (int i = 0; i < 2 * levels; ++i) inputs.push_back(random_matrix(n, d, rng));
                     const std::vector<Matrix> base = inputs;
                     auto f = [levels, beta](Tape&, std::span<const Var> x) {
                       return loss_rq(x.subspan(0, static_cast<std::size_t>(levels)),
                                      x.subspan(static_cast<std::size_t>(levels)), beta);
                     };
                     // Each stop-gradient operand frozen at the base point.
                     auto value = [levels, beta, base](const std::vector<Matrix>& x) {
                       double total = 0.0;
                       for (int l = 0; l < levels; ++l) {
                         const Matrix& z = x[static_cast<std::size_t>(l)];
                         const Matrix& c = x[static_cast<std::size_t>(levels + l)];
                         const Matrix& z0 = base[static_cast<std::size_t>(l)];
                         const Matrix& c0 = base[static_cast<std::size_t>(levels + l)];
                         total += ((z0 - c).rowwise().squaredNorm() + beta * (c0 - z).rowwise().squaredNorm()).mean();
                       }
                       return total;
                     };
                     return GradInstance{f, value, std::move(inputs)};
                   }});
  return cases;
}

}  // namespace kgrec::testing
