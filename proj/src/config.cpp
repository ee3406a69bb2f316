#include "kgrec/config.hpp"

#include "kgrec/error.hpp"
#include "kgrec/hashing.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <sstream>

namespace kgrec {

namespace {

using json = nlohmann::json;

json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = n.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  throw ConfigError("unsupported TOML value (dates and times are not config values)");
}

void merge_into(json& base, const json& patch, const std::string& where) {
  for (const auto& [k, v] : patch.items()) {
    const std::string key = where.empty() ? k : where + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + key + "'");
    json& dst = base[k];
    if (dst.is_object()) {
      if (!v.is_object()) throw ConfigError("config key '" + key + "' must be a table");
      merge_into(dst, v, key);
      continue;
    }
    const bool ok = (dst.is_number_integer() && v.is_number_integer()) ||
                    (dst.is_number_float() && v.is_number()) ||
                    (dst.is_boolean() && v.is_boolean()) || (dst.is_string() && v.is_string()) ||
                    (dst.is_array() && v.is_array());
    if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
    dst = v;
  }
}

void apply_override(json& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' is not of the form section.key=value");
  }
  const std::string path = spec.substr(0, eq);
  json value;
  try {
    value = toml_to_json(*toml::parse("v = " + spec.substr(eq + 1)).get("v"));
  } catch (const toml::parse_error& e) {
    throw ConfigError("override '" + spec + "': " + std::string(e.description()));
  }
  // Build a nested patch from the dotted path.
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1,
                                        end - (dot == std::string::npos ? 0 : dot + 1));
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_into(cfg, patch, "");
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (cells_per_axis < 1) throw ConfigError("ingest.cells_per_axis must be >= 1");
  if (!(d_km > 0.0)) throw ConfigError("kg.d_km must be > 0");
  if (tokenizer.rgcn.layers < 0 || tokenizer.rgcn.dim < 1) {
    throw ConfigError("tokenizer.rgcn_layers must be >= 0 and tokenizer.dim >= 1");
  }
  if (tokenizer.levels < 1) throw ConfigError("tokenizer.levels must be >= 1");
  for (int k : tokenizer.codebook_size) {
    if (k < 1) throw ConfigError("tokenizer.codebook_size entries must be >= 1");
  }
  if (tokenizer.beta < 0.0) throw ConfigError("tokenizer.beta must be >= 0");
  if (tokenizer.negatives_per_positive < 0) throw ConfigError("tokenizer.negatives_per_positive must be >= 0");
  if (tokenizer.epochs < 1 || !(tokenizer.lr > 0.0) || tokenizer.triples_per_step < 1) {
    throw ConfigError("tokenizer.epochs, lr and triples_per_step must be positive");
  }
  if (window < 1) throw ConfigError("corpus.window must be >= 1");
  if (lm.d_model < 1 || lm.n_heads < 1 || lm.d_model % lm.n_heads != 0) {
    throw ConfigError("lm.d_model must be a positive multiple of lm.n_heads");
  }
  if (lm.n_layers < 0) throw ConfigError("lm.n_layers must be >= 0");
  if (lm.dropout < 0.0 || lm.dropout >= 1.0) throw ConfigError("lm.dropout must be in [0, 1)");
  if (lm_train.epochs < 1 || lm_train.batch_size < 1 || !(lm_train.lr > 0.0)) {
    throw ConfigError("lm.epochs, batch_size and lr must be positive");
  }
  if (ks.empty()) throw ConfigError("eval.ks must not be empty");
  for (int k : ks) {
    if (k < 1) throw ConfigError("eval.ks entries must be >= 1");
  }
  if (beam_width < 1) throw ConfigError("eval.beam_width must be >= 1");
  if (project_label != "region" && project_label != "category") {
    throw ConfigError("project.label must be 'region' or 'category'");
  }
}

json RunConfig::to_json() const {
  json variants = json::array();
  for (Ablation a : ablations) variants.push_back(to_string(a));
  const auto& cs = tokenizer.codebook_size;
  return {
      {"seed", seed},
      {"paths", {{"raw", paths.raw.string()}, {"workdir", paths.workdir.string()}, {"format", paths.format}}},
      {"ingest", {{"cells_per_axis", cells_per_axis}}},
      {"kg", {{"d_km", d_km}}},
      {"tokenizer",
       {{"rgcn_layers", tokenizer.rgcn.layers},
        {"dim", tokenizer.rgcn.dim},
        {"levels", tokenizer.levels},
        {"codebook_size", {{"user", cs[0]}, {"poi", cs[1]}, {"category", cs[2]}, {"region", cs[3]}}},
        {"beta", tokenizer.beta},
        {"negatives_per_positive", tokenizer.negatives_per_positive},
        {"epochs", tokenizer.epochs},
        {"lr", tokenizer.lr},
        {"triples_per_step", tokenizer.triples_per_step},
        {"kmeans_iters", tokenizer.kmeans_iters}}},
      {"corpus", {{"window", window}}},
      {"lm",
       {{"d_model", lm.d_model},
        {"n_layers", lm.n_layers},
        {"n_heads", lm.n_heads},
        {"dropout", lm.dropout},
        {"epochs", lm_train.epochs},
        {"lr", lm_train.lr},
        {"batch_size", lm_train.batch_size},
        {"clip_norm", lm_train.clip_norm}}},
      {"eval", {{"ks", ks}, {"beam_width", beam_width}, {"cold_start_threshold", cold_start_threshold}}},
      {"project", {{"label", project_label}}},
      {"ablate", {{"variants", variants}}},
      {"pipeline", {{"ablate", pipeline_ablate}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config seed: ") + e.what());
  }
  c.paths.raw = get<std::string>(j, "paths", "raw");
  c.paths.workdir = get<std::string>(j, "paths", "workdir");
  c.paths.format = get<std::string>(j, "paths", "format");
  c.cells_per_axis = get<int>(j, "ingest", "cells_per_axis");
  c.d_km = get<double>(j, "kg", "d_km");
  auto& t = c.tokenizer;
  t.rgcn.layers = get<int>(j, "tokenizer", "rgcn_layers");
  t.rgcn.dim = get<int>(j, "tokenizer", "dim");
  t.levels = get<int>(j, "tokenizer", "levels");
  const json cs = get<json>(j, "tokenizer", "codebook_size");
  for (EntityType e : kAllEntityTypes) {
    t.codebook_size[static_cast<std::size_t>(e)] = get<int>(json{{"cs", cs}}, "cs", std::string(to_string(e)).c_str());
  }
  t.beta = get<double>(j, "tokenizer", "beta");
  t.negatives_per_positive = get<int>(j, "tokenizer", "negatives_per_positive");
  t.epochs = get<int>(j, "tokenizer", "epochs");
  t.lr = get<double>(j, "tokenizer", "lr");
  t.triples_per_step = get<int>(j, "tokenizer", "triples_per_step");
  t.kmeans_iters = get<int>(j, "tokenizer", "kmeans_iters");
  t.seed = c.seed;
  c.window = get<int>(j, "corpus", "window");
  c.lm.d_model = get<int>(j, "lm", "d_model");
  c.lm.n_layers = get<int>(j, "lm", "n_layers");
  c.lm.n_heads = get<int>(j, "lm", "n_heads");
  c.lm.dropout = get<double>(j, "lm", "dropout");
  c.lm.seed = c.seed;
  c.lm_train.epochs = get<int>(j, "lm", "epochs");
  c.lm_train.lr = get<double>(j, "lm", "lr");
  c.lm_train.batch_size = get<int>(j, "lm", "batch_size");
  c.lm_train.clip_norm = get<double>(j, "lm", "clip_norm");
  c.ks = get<std::vector<int>>(j, "eval", "ks");
  c.beam_width = get<int>(j, "eval", "beam_width");
  c.cold_start_threshold = get<int>(j, "eval", "cold_start_threshold");
  c.project_label = get<std::string>(j, "project", "label");
  c.ablations.clear();
  for (const auto& name : get<std::vector<std::string>>(j, "ablate", "variants")) {
    c.ablations.push_back(ablation_from(name));
  }
  c.pipeline_ablate = get<bool>(j, "pipeline", "ablate");
  c.validate();
  return c;
}

RunConfig default_config(const std::vector<std::string>& overrides) {
  json j = RunConfig{}.to_json();
  for (const auto& o : overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  toml::table file;
  try {
    file = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse config " << path << ": " << e.description() << " (line "
        << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  json j = RunConfig{}.to_json();
  merge_into(j, toml_to_json(file), "");
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = RunConfig::from_json(j);
  const auto base = path.parent_path();
  if (!c.paths.raw.empty() && c.paths.raw.is_relative()) c.paths.raw = base / c.paths.raw;
  if (c.paths.workdir.is_relative()) c.paths.workdir = base / c.paths.workdir;
  return c;
}

std::string config_hash(const RunConfig& cfg, const std::vector<std::string>& sections) {
  const json all = cfg.to_json();
  json picked = {{"seed", all.at("seed")}};
  for (const auto& s : sections) picked[s] = all.at(s);
  return sha256_hex(picked.dump());
}

std::string full_config_hash(const RunConfig& cfg) {
  json all = cfg.to_json();
  all.erase("paths");
  return sha256_hex(all.dump());
}

}  // namespace kgrec
