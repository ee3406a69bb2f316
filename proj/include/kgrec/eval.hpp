#pragma once

// Top-K ranking metrics, subset breakdowns, and StruID projections.

#include "kgrec/corpus.hpp"
#include "kgrec/lm.hpp"
#include "kgrec/trie.hpp"

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

/// 1 if `truth` is among the first k ids. Duplicate ids throw ContractError.
double hr_at_k(std::span<const int> ranked, int truth, int k);
/// 1 / log2(rank + 1) for a 1-based rank <= k, else 0.
double ndcg_at_k(std::span<const int> ranked, int truth, int k);

struct SubsetMasks {
  /// Target POI has fewer than `threshold` distinct train-split visitors.
  std::vector<bool> cold_start;
  /// The predicting user never visited the target POI in train.
  std::vector<bool> unseen;
};

/// One mask entry per example, judged on (user, target_poi).
SubsetMasks subset_masks(std::span<const TokenSequence> examples,
                         std::span<const UserTimeline> timelines, int poi_count,
                         int cold_start_threshold = 5);

inline constexpr std::array<std::string_view, 3> kSubsets = {"all", "cold_start", "unseen"};

struct MetricCell {
  std::size_t count = 0;
  /// Empty when count == 0: the metric is absent, not zero.
  std::map<int, double> hr;
  std::map<int, double> ndcg;
};

struct EvalReport {
  std::vector<int> ks = {1, 5, 10};
  /// task name -> subset name -> metrics
  std::map<std::string, std::map<std::string, MetricCell>> tasks;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  std::string table() const;
};

struct EvalOptions {
  std::vector<int> ks = {1, 5, 10};
  int beam_width = 20;
};

struct EvalOutput {
  EvalReport report;
  /// Ranked entity indices per example, in example order.
  std::vector<std::vector<int>> rankings;
};

/// Generates a ranked list for every example and aggregates metrics per
/// task and subset. `tries` is indexed by EntityType.
EvalOutput run_eval(const TransformerLm& model, std::span<const TokenSequence> examples,
                    const EntityCodec& codec, const std::array<DecodingTrie, kEntityTypes>& tries,
                    const SubsetMasks& masks, const EvalOptions& opt);

/// Aggregates precomputed rankings (truth per example) into a report.
EvalReport aggregate(std::span<const TokenSequence> examples,
                     std::span<const std::vector<int>> rankings, std::span<const int> truths,
                     const SubsetMasks& masks, std::span<const int> ks);

std::array<DecodingTrie, kEntityTypes> build_tries(const EntityCodec& codec);

/// Variant label -> report, rendered as the ablation comparison.
nlohmann::json ablation_json(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             const std::string& split_hash);
std::string ablation_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

struct Projection {
  nn::Matrix coords;  // P x 2
  /// Mean silhouette of the labels, measured on the input vectors; absent
  /// with fewer than two distinct labels.
  std::optional<double> silhouette;
};

/// Top-2 principal components of the rows of `vectors`. Each component's
/// sign is fixed so its largest-magnitude loading is positive.
Projection project_ids(const nn::Matrix& vectors, std::span<const int> labels);
double mean_silhouette(const nn::Matrix& vectors, std::span<const int> labels);

void write_projection_tsv(std::ostream& out, const Projection& p,
                          std::span<const std::string> labels,
                          std::span<const std::string> poi_ids);

}  // namespace kgrec
