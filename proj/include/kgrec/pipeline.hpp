#pragma once

// Stage orchestration over one working directory. Every stage writes its
// artifacts under <workdir>/<stage>/ and finishes by writing manifest.json:
// stage name, tool version, stage config hash, seed, SHA-256 of every input
// and output file, and the config hashes of the upstream stages.

#include "kgrec/config.hpp"
#include "kgrec/corpus.hpp"
#include "kgrec/ingest.hpp"
#include "kgrec/kg.hpp"
#include "kgrec/lm.hpp"
#include "kgrec/tokenizer.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Stage {
  ingest,
  build_kg,
  train_tokenizer,
  assign_ids,
  build_corpus,
  train_lm,
  evaluate,
  project,
  ablate,
};

/// CLI spelling: "ingest", "build-kg", "train-tokenizer", ...
std::string_view to_string(Stage s);
Stage stage_from(std::string_view name);
std::vector<Stage> stage_dependencies(Stage s);

struct RunOptions {
  /// Accept upstream artifacts built under a different configuration.
  bool force = false;
};

/// Runs one stage. Returns false when the stage was already up to date
/// (same config hash, inputs and outputs unchanged) and nothing was done.
bool run_stage(Stage s, const RunConfig& cfg, const RunOptions& opt = {});

/// ingest through evaluate and project; ablate too if configured.
void run_pipeline(const RunConfig& cfg, const RunOptions& opt = {});

// ---- artifact loading ---------------------------------------------------------

std::filesystem::path stage_dir(const std::filesystem::path& workdir, Stage s);

struct IngestArtifacts {
  Catalog catalog;
  DatasetSplit split;
};
IngestArtifacts load_ingest(const std::filesystem::path& workdir);
KnowledgeGraph load_kg(const std::filesystem::path& workdir);
TokenizerModel load_tokenizer(const std::filesystem::path& workdir, const KnowledgeGraph& g,
                              const TokenizerConfig& cfg);
StruIdTable load_struids(const std::filesystem::path& workdir, const Catalog& catalog);
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir, const Corpus& c);

/// Raw identifiers per entity type; regions are spelled "cell<grid index>".
std::array<std::vector<std::string>, kEntityTypes> raw_ids(const Catalog& catalog);
std::array<int, kEntityTypes> entity_counts(const Catalog& catalog);

nlohmann::json read_json(const std::filesystem::path& path, std::string_view producing_stage);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace kgrec
