#pragma once

// Graph-supervised residual quantization: structure-aware node vectors are
// quantized level by level into discrete code indices (structural IDs),
// trained jointly under a KG reconstruction loss and the residual
// quantization loss.

#include "kgrec/kg.hpp"
#include "kgrec/rgcn.hpp"
#include "kgrec/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

struct CodebookSet {
  EntityType type = EntityType::poi;
  /// books[l] is K_l x D.
  std::vector<nn::Parameter> books;

  static CodebookSet init(EntityType type, std::span<const int> sizes, int dim, nn::Rng& rng);
  int levels() const { return static_cast<int>(books.size()); }
  int size(int level) const { return static_cast<int>(books[static_cast<std::size_t>(level)].value.rows()); }
  int dim() const { return books.empty() ? 0 : static_cast<int>(books.front().value.cols()); }
};

struct StruId {
  EntityType type = EntityType::poi;
  std::vector<int> indices;
  std::optional<int> disambiguator;

  auto operator<=>(const StruId&) const = default;
};

struct QuantizeResult {
  std::vector<int> indices;
  /// Sum of the selected codes.
  Eigen::RowVectorXd quantized;
  /// z_1 .. z_L, the input of each level (z_1 is the input vector).
  std::vector<Eigen::RowVectorXd> residuals;
  /// z_{L+1} = z_L - b_{L, n_L}.
  Eigen::RowVectorXd final_residual;
};

/// Nearest code per level on the running residual; ties go to the lowest index.
QuantizeResult quantize(const Eigen::RowVectorXd& h, const CodebookSet& books);
/// Index of the code nearest to `z` in one K x D codebook.
int nearest_code(const Eigen::Ref<const Eigen::RowVectorXd>& z, const nn::Matrix& book);
/// Level-by-level code indices for every row of `h`: result[l][row].
std::vector<std::vector<int>> quantize_rows(const nn::Matrix& h, const CodebookSet& books);

/// Bilinear triple scorer, one D x D matrix per relation shared by both
/// edge directions.
struct ReconstructionParams {
  std::array<nn::Parameter, kRelations> weights;

  static ReconstructionParams init(int dim, nn::Rng& rng);
  std::vector<nn::Parameter*> parameters();
};

/// logistic(head^T W_r tail).
double score_triple(const Eigen::RowVectorXd& head, const Eigen::RowVectorXd& tail,
                    const nn::Matrix& weight);

struct LabeledTriple {
  Triple triple;
  double label = 1.0;
};

/// Positives plus `negatives_per_positive` tail corruptions each. A corrupted
/// tail is a uniform entity of the tail's type, resampled while the triple is
/// a true positive (at most 64 tries, after which the negative is dropped).
std::vector<LabeledTriple> sample_kg_batch(const KnowledgeGraph& g,
                                           std::span<const Triple> positives,
                                           int negatives_per_positive, nn::Rng& rng);

/// Mean binary cross-entropy over labelled triples scored on the quantized
/// node matrix `hhat` (N x D, global node order).
nn::Var loss_kg(const KnowledgeGraph& g, nn::Var hhat, std::span<const LabeledTriple> batch,
                std::span<const nn::Var> relation_weights);

/// Sum over levels of mean_rows( |sg[z_l] - c_l|^2 + beta |sg[c_l] - z_l|^2 ).
nn::Var loss_rq(std::span<const nn::Var> residuals, std::span<const nn::Var> codes, double beta);

struct TokenizerConfig {
  RgcnConfig rgcn;
  int levels = 3;
  /// Codebook size per level for user, poi, category, region.
  std::array<int, kEntityTypes> codebook_size = {256, 256, 64, 64};
  double beta = 0.25;
  int negatives_per_positive = 1;
  int epochs = 30;
  double lr = 1e-3;
  int triples_per_step = 1024;
  int kmeans_iters = 10;
  std::uint64_t seed = 7;
};

struct EpochLog {
  int epoch = 0;
  double loss_kg = 0.0;
  double loss_rq = 0.0;
  int reseeded_codes = 0;
};

struct TokenizerModel {
  RgcnParams rgcn;
  std::array<CodebookSet, kEntityTypes> codebooks;
  ReconstructionParams recon;

  static TokenizerModel init(const KnowledgeGraph& g, const TokenizerConfig& cfg);
  std::vector<nn::Parameter*> parameters();
};

struct TokenizerTrainResult {
  TokenizerModel model;
  std::vector<EpochLog> log;
  /// Set when training stopped on a non-finite loss; `model` then holds the
  /// last parameters that produced a finite epoch.
  std::optional<std::string> abort_reason;
};

TokenizerTrainResult train_tokenizer(const KnowledgeGraph& g, const TokenizerConfig& cfg);

/// Quantized vector (sum of selected codes) for every node, global order.
nn::Matrix quantized_vectors(const nn::Matrix& encodings, const KnowledgeGraph& g,
                             const std::array<CodebookSet, kEntityTypes>& books);

struct StruIdTable {
  std::array<std::vector<StruId>, kEntityTypes> ids;
  const StruId& at(EntityRef e) const {
    return ids[static_cast<std::size_t>(e.type)][static_cast<std::size_t>(e.index)];
  }
  const std::vector<StruId>& of(EntityType t) const { return ids[static_cast<std::size_t>(t)]; }
};

/// Quantizes every entity. Entities of one type sharing all indices get
/// disambiguators 0, 1, ... in entity-index order; unique ones get none.
StruIdTable assign_struids(const nn::Matrix& encodings, const KnowledgeGraph& g,
                           const std::array<CodebookSet, kEntityTypes>& books);

/// TSV rows: entity_type, raw_id, n_1..n_L, disambiguator (empty if none).
void write_struid_tsv(std::ostream& out, const StruIdTable& table,
                      const std::array<std::vector<std::string>, kEntityTypes>& raw_ids);
StruIdTable read_struid_tsv(std::istream& in,
                            const std::array<std::vector<std::string>, kEntityTypes>& raw_ids);

nlohmann::json tokenizer_log_json(std::span<const EpochLog> log);

}  // namespace kgrec
