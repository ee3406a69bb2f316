#pragma once

// Multi-behavior prompt corpora over a closed token vocabulary.
//
// Every example is [input block | target block]. The input block is
//   BOS TASK_x USER <user id> PREF (<cat> <reg> <poi>)x<=5 SEP
//   HIST (<time> <ids...>)x<=window TIME <time of target> TARGET
// and the target block is one entity id followed by EOS. History items of
// the POI task carry category, region and POI ids; the category and region
// tasks carry only their own id stream.

#include "kgrec/ingest.hpp"
#include "kgrec/kg.hpp"
#include "kgrec/tokenizer.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

enum class Task : std::uint8_t { poi = 0, category = 1, region = 2 };
inline constexpr std::array<Task, 3> kAllTasks = {Task::poi, Task::category, Task::region};
std::string_view to_string(Task t);
Task task_from(std::string_view name);
EntityType target_type(Task t);

enum class Special : int {
  pad = 0, bos, eos, sep, task_poi, task_cat, task_reg, user, pref, hist, time, target,
};
inline constexpr int kSpecialCount = 12;
inline constexpr int kTimeBuckets = 48;

/// weekend * 24 + hour of day, in UTC.
int time_bucket(std::int64_t timestamp);

/// Dense token ids: specials, 48 time buckets, then entity tokens. In
/// structural mode entity tokens are one per (type, level, code) plus
/// per-type disambiguators; in flat mode one token per entity.
class Vocabulary {
 public:
  enum class Mode { structural, flat };

  static Vocabulary structural(int levels, const std::array<int, kEntityTypes>& codebook_sizes,
                               const std::array<int, kEntityTypes>& disambiguators);
  static Vocabulary flat(const std::array<int, kEntityTypes>& entity_counts);

  Mode mode() const { return mode_; }
  int size() const { return size_; }
  int levels() const { return levels_; }
  int special(Special s) const { return static_cast<int>(s); }
  int time_token(int bucket) const;
  int code_token(EntityType t, int level, int index) const;
  int disambiguator_token(EntityType t, int d) const;
  int entity_token(EntityType t, int index) const;

  struct TokenInfo {
    enum class Kind { special, time, code, disambiguator, entity } kind;
    EntityType type = EntityType::user;
    int level = 0;
    int value = 0;
  };
  TokenInfo info(int token) const;
  std::string token_string(int token) const;
  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary&) const = default;

 private:
  Mode mode_ = Mode::structural;
  int levels_ = 0;
  std::array<int, kEntityTypes> sizes_{};   // codebook size or entity count
  std::array<int, kEntityTypes> disamb_{};  // disambiguator tokens per type
  std::array<int, kEntityTypes> code_base_{};
  std::array<int, kEntityTypes> disamb_base_{};
  int size_ = 0;
};

/// Maps entities to their token spelling and back.
class EntityCodec {
 public:
  /// Structural ids from an assigned StruID table.
  EntityCodec(const Vocabulary& vocab, const StruIdTable& ids);
  /// One random token per entity: a seeded permutation within each type.
  EntityCodec(const Vocabulary& vocab, const std::array<int, kEntityTypes>& counts,
              std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<int>& tokens(EntityRef e) const;
  /// Entity spelled by `tokens`, if any.
  std::optional<EntityRef> decode(std::span<const int> tokens) const;
  /// Token sequences of every entity of one type, entity-index order.
  const std::vector<std::vector<int>>& all(EntityType t) const {
    return spelled_[static_cast<std::size_t>(t)];
  }

 private:
  Vocabulary vocab_;
  std::array<std::vector<std::vector<int>>, kEntityTypes> spelled_;
  std::map<std::vector<int>, EntityRef> reverse_;
};

enum class SplitPart : std::uint8_t { train = 0, valid = 1, test = 2 };
std::string_view to_string(SplitPart s);

/// A POI spelled with its category and region, as in preference entries.
struct PoiTriple {
  int category = 0;
  int region = 0;
  int poi = 0;
  bool operator==(const PoiTriple&) const = default;
};

struct HistoryItem {
  int bucket = 0;
  int category = -1;
  int region = -1;
  int poi = -1;
  bool operator==(const HistoryItem&) const = default;
};

/// Entity-level content of one example, before tokenization.
struct ExampleSpec {
  Task task = Task::poi;
  SplitPart split = SplitPart::train;
  int user = 0;
  /// Index of the target event in the user's full chronological sequence.
  int position = 0;
  std::vector<PoiTriple> preference;
  std::vector<HistoryItem> history;
  int target_bucket = 0;
  EntityRef target;
  /// POI of the target event (all tasks), for subset breakdowns.
  int target_poi = 0;
  bool operator==(const ExampleSpec&) const = default;
};

struct TokenSequence {
  Task task = Task::poi;
  SplitPart split = SplitPart::train;
  EntityRef user;
  int position = 0;
  int target_poi = 0;
  std::vector<int> input_tokens;
  std::vector<int> target_tokens;
};

struct SegmentOptions {
  bool preference = true;
  bool history = true;
};

/// Up to five POIs by descending train visit count, ties by ascending index.
std::vector<int> top5_preference(std::span<const int> train_pois);

/// Interned, chronologically ordered events of one user.
struct UserTimeline {
  int user = 0;
  std::vector<int> pois;
  std::vector<std::int64_t> timestamps;
  int n_train = 0;
  int n_valid = 0;
};

std::vector<UserTimeline> build_timelines(const DatasetSplit& split, const Catalog& catalog);

/// Example specs for one task: every train position with non-empty history,
/// and every valid/test position with history from the events before it.
std::vector<ExampleSpec> build_example_specs(std::span<const UserTimeline> timelines,
                                             const Catalog& catalog, Task task, int window);

/// Upper bound on input + target length for L id tokens (+1 disambiguator).
std::size_t max_sequence_length(int levels, int window);

TokenSequence serialize(const ExampleSpec& spec, const EntityCodec& codec,
                        const SegmentOptions& seg, std::size_t max_len);
/// Inverse of serialize (`position` and `target_poi` are copied from the
/// sequence metadata, the rest is recovered from tokens).
ExampleSpec detokenize(const TokenSequence& seq, const EntityCodec& codec);

enum class Ablation : std::uint8_t { full, no_struid, no_reg, no_cat, no_regcat, no_pref, no_seq };
inline constexpr std::array<Ablation, 7> kAllAblations = {
    Ablation::full,   Ablation::no_struid, Ablation::no_reg, Ablation::no_cat,
    Ablation::no_regcat, Ablation::no_pref, Ablation::no_seq};
std::string_view to_string(Ablation a);
/// Accepts "wo_struid" style and "w/o StruID" style names.
Ablation ablation_from(std::string_view name);

struct Corpus {
  Vocabulary vocab;
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> valid;
  std::vector<TokenSequence> test;
  int window = 16;
  std::size_t max_len = 0;
};

struct CorpusOptions {
  int window = 16;
  std::uint64_t seed = 7;
};

/// Full multi-task corpus. Train examples are shuffled with the seed.
Corpus build_corpus(std::span<const UserTimeline> timelines, const Catalog& catalog,
                    const StruIdTable& ids, const CorpusOptions& opt);

/// Variant of a full corpus: task filtering, segment removal, or flat
/// single-token ids (fresh vocabulary).
Corpus ablation_variant(const Corpus& full, Ablation variant, const StruIdTable& ids,
                        const std::array<int, kEntityTypes>& entity_counts, std::uint64_t seed);

/// Codec matching a corpus vocabulary.
EntityCodec corpus_codec(const Corpus& corpus, const StruIdTable& ids,
                         const std::array<int, kEntityTypes>& entity_counts, std::uint64_t seed);

nlohmann::json sequence_to_json(const TokenSequence& s);
TokenSequence sequence_from_json(const nlohmann::json& j);
void write_corpus_jsonl(std::ostream& out, std::span<const TokenSequence> seqs);
std::vector<TokenSequence> read_corpus_jsonl(std::istream& in);

}  // namespace kgrec
