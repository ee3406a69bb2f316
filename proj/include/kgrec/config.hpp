#pragma once

// Run configuration: one TOML file, every default materialised on load,
// `section.key=value` overrides on top.

#include "kgrec/corpus.hpp"
#include "kgrec/lm.hpp"
#include "kgrec/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

struct RunConfig {
  std::uint64_t seed = 7;

  struct Paths {
    std::filesystem::path raw;
    std::filesystem::path workdir = "runs/default";
    /// "jsonl", "tsv", or empty to guess from the extension.
    std::string format;
  } paths;

  int cells_per_axis = 20;
  double d_km = 0.2;

  TokenizerConfig tokenizer;
  int window = 16;

  LmConfig lm;  // vocab_size and max_len are filled from the corpus
  LmTrainOptions lm_train;

  std::vector<int> ks = {1, 5, 10};
  int beam_width = 20;
  int cold_start_threshold = 5;

  /// "region" or "category".
  std::string project_label = "region";

  std::vector<Ablation> ablations = {kAllAblations.begin(), kAllAblations.end()};
  /// Whether `pipeline` also runs the ablation fan-out.
  bool pipeline_ablate = false;

  void validate() const;
  /// Full materialised configuration, TOML section layout.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Loads `path` over the defaults, then applies `overrides` ("a.b=value",
/// value in TOML syntax). Relative paths in [paths] resolve against the
/// config file's directory. Unknown keys and bad values throw ConfigError.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
/// Defaults plus overrides, without a file.
RunConfig default_config(const std::vector<std::string>& overrides = {});

/// SHA-256 over a canonical dump of the given top-level config sections
/// (plus the seed). Paths never enter any hash.
std::string config_hash(const RunConfig& cfg, const std::vector<std::string>& sections);
/// Hash of every section except [paths].
std::string full_config_hash(const RunConfig& cfg);

}  // namespace kgrec
