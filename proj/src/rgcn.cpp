#include "kgrec/rgcn.hpp"

#include "kgrec/error.hpp"

#include <string>

namespace kgrec {

RelationalAdjacency::RelationalAdjacency(const KnowledgeGraph& g) : nodes_(g.node_count()) {
  for (int s = 0; s < kDirectedRelations; ++s) {
    std::vector<Eigen::Triplet<nn::Real>> entries;
    for (int i = 0; i < nodes_; ++i) {
      const auto nb = g.neighbors(i, s);
      if (nb.empty()) continue;
      const nn::Real w = 1.0 / static_cast<nn::Real>(nb.size());
      for (int j : nb) entries.emplace_back(i, j, w);
    }
    nn::SparseMatrix m(nodes_, nodes_);
    m.setFromTriplets(entries.begin(), entries.end());
    mats_[static_cast<std::size_t>(s)] = std::move(m);
  }
}

RgcnParams RgcnParams::init(int nodes, const RgcnConfig& cfg, nn::Rng& rng) {
  if (cfg.layers < 0 || cfg.dim <= 0) throw ConfigError("rgcn: layers >= 0 and dim > 0 required");
  RgcnParams p;
  p.config = cfg;
  p.base = nn::make_uniform("rgcn/base", nodes, cfg.dim, cfg.dim, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "rgcn/layer" + std::to_string(l) + "/";
    p.self_loop.push_back(nn::make_uniform(prefix + "self", cfg.dim, cfg.dim, cfg.dim, rng));
    std::array<nn::Parameter, kDirectedRelations> rel;
    for (int s = 0; s < kDirectedRelations; ++s) {
      rel[static_cast<std::size_t>(s)] =
          nn::make_uniform(prefix + "rel_" + std::to_string(s), cfg.dim, cfg.dim, cfg.dim, rng);
    }
    p.relation.push_back(std::move(rel));
  }
  return p;
}

std::vector<nn::Parameter*> RgcnParams::parameters() {
  std::vector<nn::Parameter*> out{&base};
  for (std::size_t l = 0; l < self_loop.size(); ++l) {
    out.push_back(&self_loop[l]);
    for (auto& w : relation[l]) out.push_back(&w);
  }
  return out;
}

std::size_t RgcnParams::matrix_count() const {
  return self_loop.size() + relation.size() * kDirectedRelations;
}

nn::Var rgcn_layer(nn::Var h_prev, const RelationalAdjacency& adj, nn::Var self_loop,
                   std::span<const nn::Var> relation, Activation act) {
  if (relation.size() != kDirectedRelations) {
    throw ContractError("rgcn_layer: expected " + std::to_string(kDirectedRelations) +
                        " relation matrices, got " + std::to_string(relation.size()));
  }
  if (h_prev.rows() != adj.node_count()) {
    throw ContractError("rgcn_layer: " + nn::shape_str(h_prev.value()) + " states for " +
                        std::to_string(adj.node_count()) + " nodes");
  }
  // [A_1 H | ... | A_8 H] [W_1; ...; W_8] as one dense product.
  std::vector<nn::Var> msgs;
  msgs.reserve(kDirectedRelations);
  for (int s = 0; s < kDirectedRelations; ++s) msgs.push_back(nn::spmm(adj.slot(s), h_prev));
  nn::Var aggregated = nn::matmul(nn::concat_cols(msgs), nn::concat_rows(relation));
  nn::Var pre = nn::add(nn::matmul(h_prev, self_loop), aggregated);
  return act == Activation::relu ? nn::relu(pre) : pre;
}

nn::Var encode(nn::Tape& tape, const RelationalAdjacency& adj, RgcnParams& params,
               Activation act) {
  nn::Var h = tape.parameter(params.base);
  for (std::size_t l = 0; l < params.self_loop.size(); ++l) {
    nn::Var self = tape.parameter(params.self_loop[l]);
    std::vector<nn::Var> rel;
    rel.reserve(kDirectedRelations);
    for (auto& w : params.relation[l]) rel.push_back(tape.parameter(w));
    h = rgcn_layer(h, adj, self, rel, act);
  }
  return h;
}

nn::Matrix encode_values(const RelationalAdjacency& adj, RgcnParams& params, Activation act) {
  nn::Tape tape;
  return encode(tape, adj, params, act).value();
}

}  // namespace kgrec
