#pragma once

// Decoder-only transformer over corpus tokens: learned positions, pre-norm
// residual blocks, ReLU MLP, untied output projection.

#include "kgrec/corpus.hpp"
#include "kgrec/optim.hpp"
#include "kgrec/tensor.hpp"
#include "kgrec/trie.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

struct LmConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int max_len = 0;
  double dropout = 0.1;
  std::uint64_t seed = 7;

  /// Throws ConfigError on an unusable configuration.
  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

struct LmTrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  /// Sequences whose gradients are averaged per optimizer step.
  int batch_size = 16;
  double clip_norm = 1.0;
};

class TransformerLm {
 public:
  TransformerLm() = default;
  explicit TransformerLm(const LmConfig& cfg);

  const LmConfig& config() const { return cfg_; }
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  /// T x D final hidden states (after the last layer norm).
  nn::Var hidden(nn::Tape& tape, std::span<const int> tokens, nn::Rng* dropout_rng = nullptr);
  /// T x V logits at every position.
  nn::Var logits(nn::Tape& tape, std::span<const int> tokens);
  /// Mean cross-entropy of the target block given the input block; only
  /// positions predicting target tokens contribute.
  nn::Var sequence_loss(nn::Tape& tape, std::span<const int> input, std::span<const int> target,
                        nn::Rng* dropout_rng = nullptr);

  /// Cached keys and values of a processed token prefix.
  struct Cache {
    std::vector<nn::Matrix> keys;    // per layer, T x D
    std::vector<nn::Matrix> values;  // per layer, T x D
    int length = 0;
  };
  /// Gradient-free forward over `tokens`; returns log-softmax of the next
  /// token after the last position and fills `cache`.
  Eigen::RowVectorXd prefill(std::span<const int> tokens, Cache& cache) const;
  /// Appends one token to a cache and returns the next-token log-softmax.
  /// The cache is shared read-only up to `shared.length`; `own` holds the
  /// rows appended by this continuation.
  Eigen::RowVectorXd extend(const Cache& shared, Cache& own, int token) const;

 private:
  struct Block {
    nn::Parameter ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
  };
  LmConfig cfg_;
  nn::Parameter tok_emb_, pos_emb_, lnf_g_, lnf_b_, w_out_, b_out_;
  std::vector<Block> blocks_;

  Eigen::RowVectorXd step_values(const Cache& shared, Cache& own, int token, int position) const;
};

struct LmTrainResult {
  std::vector<double> epoch_loss;
  long steps = 0;
  long skipped_steps = 0;
  std::optional<std::string> abort_reason;
};

/// Trains in place. On a non-finite loss the model is restored to the end
/// of the last finite epoch and `abort_reason` is set.
LmTrainResult train_lm(TransformerLm& model, std::span<const TokenSequence> corpus,
                       const LmTrainOptions& opt);

void save_lm(const std::filesystem::path& dir, const TransformerLm& model, long step,
             const nlohmann::json& extra = nlohmann::json::object());
TransformerLm load_lm(const std::filesystem::path& dir);

struct Generation {
  struct Candidate {
    std::vector<int> tokens;
    int entity = -1;
    double score = 0.0;  // length-normalised log-probability
  };
  std::vector<Candidate> ranked;
  /// Fewer than K complete ids were found.
  bool short_result = false;
};

/// Constrained beam search: each step only extends beams along trie edges;
/// token log-probabilities are renormalised over the allowed children.
/// Candidates are ranked by summed log-probability over id length, ties by
/// ascending token sequence.
Generation generate_topk(const TransformerLm& model, std::span<const int> input,
                         const DecodingTrie& trie, int k, int beam_width);

/// Length-normalised constrained log-probability of one complete id, scored
/// the way generate_topk scores it.
double constrained_score(const TransformerLm& model, std::span<const int> input,
                         const DecodingTrie& trie, std::span<const int> id_tokens);

}  // namespace kgrec
