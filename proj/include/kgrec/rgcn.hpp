#pragma once

// Relational graph convolution encoder over the knowledge graph.
//
// Row-vector convention: node states are rows of an N x D matrix and each
// layer computes
//   H' = act( H W_self + sum_r A_r H W_r )
// where A_r is the row-normalised (1/|N_r(i)|) adjacency of directed
// relation slot r. W here is the transpose of the column-vector form.

#include "kgrec/kg.hpp"
#include "kgrec/tensor.hpp"

#include <array>
#include <vector>

namespace kgrec {

struct RgcnConfig {
  int layers = 3;
  int dim = 64;
};

enum class Activation { relu, identity };

/// Mean-normalised sparse adjacency, one matrix per directed relation slot.
class RelationalAdjacency {
 public:
  explicit RelationalAdjacency(const KnowledgeGraph& g);
  int node_count() const { return nodes_; }
  const nn::SparseMatrix& slot(int s) const { return mats_[static_cast<std::size_t>(s)]; }

 private:
  int nodes_ = 0;
  std::array<nn::SparseMatrix, kDirectedRelations> mats_;
};

struct RgcnParams {
  RgcnConfig config;
  nn::Parameter base;  // N x D initial node embeddings
  std::vector<nn::Parameter> self_loop;  // one D x D per layer
  std::vector<std::array<nn::Parameter, kDirectedRelations>> relation;  // per layer, per slot

  static RgcnParams init(int nodes, const RgcnConfig& cfg, nn::Rng& rng);
  std::vector<nn::Parameter*> parameters();
  /// Number of weight matrices: layers x (2|R| + 1).
  std::size_t matrix_count() const;
};

/// One relational convolution on all nodes.
nn::Var rgcn_layer(nn::Var h_prev, const RelationalAdjacency& adj, nn::Var self_loop,
                   std::span<const nn::Var> relation, Activation act = Activation::relu);

/// Stacks config.layers convolutions on the base embeddings; with zero
/// layers the base embeddings are returned.
nn::Var encode(nn::Tape& tape, const RelationalAdjacency& adj, RgcnParams& params,
               Activation act = Activation::relu);

/// Forward pass without gradients.
nn::Matrix encode_values(const RelationalAdjacency& adj, RgcnParams& params,
                         Activation act = Activation::relu);

}  // namespace kgrec
