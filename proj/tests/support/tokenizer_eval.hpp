#pragma once

// Link-ranking AUC and first-token agreement for a trained tokenizer.

#include "kgrec/rgcn.hpp"
#include "kgrec/tokenizer.hpp"

#include <span>
#include <vector>

namespace kgrec::testing {

/// Probability that a random positive outscores a random negative; ties 1/2.
inline double pairwise_auc(std::span<const double> pos, std::span<const double> neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/// Scores triples on quantized node vectors with the trained bilinear weights.
inline std::vector<double> score_triples(TokenizerModel& model, const KnowledgeGraph& g,
                                         std::span<const Triple> triples) {
  const nn::Matrix enc = encode_values(RelationalAdjacency(g), model.rgcn);
  const nn::Matrix hhat = quantized_vectors(enc, g, model.codebooks);
  std::vector<double> out;
  for (const Triple& t : triples) {
    out.push_back(score_triple(hhat.row(g.node_id(t.head)), hhat.row(g.node_id(t.tail)),
                               model.recon.weights[static_cast<std::size_t>(t.relation)].value));
  }
  return out;
}

struct Agreement {
  double intra = 0.0;
  double inter = 0.0;
};

/// Fraction of same-type entity pairs sharing their first code index, over
/// pairs within one block and pairs across blocks.
inline Agreement first_token_agreement(const std::vector<StruId>& ids, std::span<const int> block) {
  long intra_pairs = 0, intra_same = 0, inter_pairs = 0, inter_same = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const bool same = ids[i].indices.front() == ids[j].indices.front();
      if (block[i] == block[j]) {
        ++intra_pairs;
        intra_same += same;
      } else {
        ++inter_pairs;
        inter_same += same;
      }
    }
  }
  return {static_cast<double>(intra_same) / static_cast<double>(intra_pairs),
          static_cast<double>(inter_same) / static_cast<double>(inter_pairs)};
}

}  // namespace kgrec::testing
