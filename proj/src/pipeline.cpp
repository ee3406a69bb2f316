#include "kgrec/pipeline.hpp"

#include "kgrec/checkpoint.hpp"
#include "kgrec/error.hpp"
#include "kgrec/eval.hpp"
#include "kgrec/hashing.hpp"
#include "kgrec/rgcn.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <set>

namespace kgrec {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct StageInfo {
  Stage stage;
  std::string_view name;
  std::string_view dir;
  std::vector<Stage> deps;
  std::vector<std::string> sections;
};

const std::vector<StageInfo>& stages() {
  static const std::vector<StageInfo> all = {
      {Stage::ingest, "ingest", "ingest", {}, {"ingest"}},
      {Stage::build_kg, "build-kg", "kg", {Stage::ingest}, {"kg"}},
      {Stage::train_tokenizer, "train-tokenizer", "tokenizer", {Stage::build_kg}, {"tokenizer"}},
      {Stage::assign_ids, "assign-ids", "ids", {Stage::ingest, Stage::build_kg, Stage::train_tokenizer}, {"tokenizer"}},
      {Stage::build_corpus, "build-corpus", "corpus", {Stage::ingest, Stage::assign_ids}, {"corpus"}},
      {Stage::train_lm, "train-lm", "lm", {Stage::build_corpus}, {"lm"}},
      {Stage::evaluate, "evaluate", "eval",
       {Stage::ingest, Stage::assign_ids, Stage::build_corpus, Stage::train_lm}, {"eval"}},
      {Stage::project, "project", "project", {Stage::ingest, Stage::build_kg, Stage::train_tokenizer}, {"project"}},
      {Stage::ablate, "ablate", "ablate", {Stage::ingest, Stage::assign_ids, Stage::build_corpus},
       {"corpus", "lm", "eval", "ablate"}},
  };
  return all;
}

const StageInfo& info(Stage s) { return stages()[static_cast<std::size_t>(s)]; }

std::string stage_hash(const RunConfig& cfg, Stage s) { return config_hash(cfg, info(s).sections); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<CheckInEvent> flatten(const DatasetSplit& split, SplitPart part) {
  std::vector<CheckInEvent> out;
  for (const UserSequence& u : split.users) {
    const auto& src = part == SplitPart::train ? u.train : part == SplitPart::valid ? u.valid : u.test;
    out.insert(out.end(), src.begin(), src.end());
  }
  return out;
}

// ---- stage bodies -------------------------------------------------------------
// Each writes into `dir` and returns its output files relative to `dir`.

std::vector<std::string> do_ingest(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.paths.raw.empty()) throw ConfigError("paths.raw is not set");
  const InputFormat fmt =
      cfg.paths.format.empty() ? input_format_for(cfg.paths.raw) : parse_input_format(cfg.paths.format);
  const auto events = parse_checkins(cfg.paths.raw, fmt);
  if (events.empty()) throw DataError("no check-ins in " + cfg.paths.raw.string());
  const RegionAssignment regions = assign_regions(events, cfg.cells_per_axis);
  const Catalog catalog = build_catalog(events, regions);
  const DatasetSplit split = split_chronological(events);
  write_json(dir / "catalog.json", catalog_to_json(catalog));
  write_json(dir / "stats.json", stats_to_json(compute_stats(events, regions)));
  std::vector<std::string> out = {"catalog.json", "stats.json"};
  for (SplitPart p : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
    const std::string name = std::string(to_string(p)) + ".jsonl";
    std::ofstream f(dir / name, std::ios::binary);
    write_checkins_jsonl(f, flatten(split, p));
    out.push_back(name);
  }
  spdlog::info("ingest: {} check-ins, {} users, {} POIs, {} regions", events.size(),
               catalog.users.size(), catalog.pois.size(), catalog.region_count);
  return out;
}

std::vector<std::string> do_build_kg(const RunConfig& cfg, const fs::path& dir) {
  const auto ing = load_ingest(cfg.paths.workdir);
  const KnowledgeGraph g = build_kg(ing.split, ing.catalog, cfg.d_km);
  write_json(dir / "kg.json", kg_to_json(g));
  const json stats = kg_stats_json(g);
  write_json(dir / "stats.json", stats);
  spdlog::info("build-kg: {}", stats.dump());
  return {"kg.json", "stats.json"};
}

void save_tokenizer(const fs::path& dir, TokenizerModel& model, const TokenizerConfig& cfg, long step) {
  nn::CheckpointInfo ci;
  ci.seed = cfg.seed;
  ci.step = step;
  const auto params = model.parameters();
  const std::vector<const nn::Parameter*> cparams(params.begin(), params.end());
  nn::save_checkpoint(dir, cparams, ci);
}

std::vector<std::string> checkpoint_files(const fs::path& dir, const fs::path& rel) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir / rel)) out.push_back((rel / e.path().filename()).string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> do_train_tokenizer(const RunConfig& cfg, const fs::path& dir) {
  const KnowledgeGraph g = load_kg(cfg.paths.workdir);
  TokenizerTrainResult res = train_tokenizer(g, cfg.tokenizer);
  save_tokenizer(dir / "checkpoint", res.model, cfg.tokenizer, static_cast<long>(res.log.size()));
  write_json(dir / "log.json", tokenizer_log_json(res.log));
  if (res.abort_reason) {
    throw NumericalFailure(*res.abort_reason + "; last finite parameters saved under " +
                           (dir / "checkpoint").string());
  }
  auto out = checkpoint_files(dir, "checkpoint");
  out.push_back("log.json");
  return out;
}

std::vector<std::string> do_assign_ids(const RunConfig& cfg, const fs::path& dir) {
  const auto ing = load_ingest(cfg.paths.workdir);
  const KnowledgeGraph g = load_kg(cfg.paths.workdir);
  TokenizerModel model = load_tokenizer(cfg.paths.workdir, g, cfg.tokenizer);
  const RelationalAdjacency adj(g);
  const nn::Matrix enc = encode_values(adj, model.rgcn);
  const StruIdTable table = assign_struids(enc, g, model.codebooks);
  {
    std::ofstream f(dir / "struids.tsv", std::ios::binary);
    write_struid_tsv(f, table, raw_ids(ing.catalog));
  }
  json summary = json::object();
  for (EntityType t : kAllEntityTypes) {
    std::set<std::vector<int>> distinct;
    std::set<int> first;
    int disamb = 0;
    for (const StruId& id : table.of(t)) {
      distinct.insert(id.indices);
      if (!id.indices.empty()) first.insert(id.indices.front());
      if (id.disambiguator) ++disamb;
    }
    summary[std::string(to_string(t))] = {{"entities", table.of(t).size()},
                                          {"distinct_codes", distinct.size()},
                                          {"distinct_first_tokens", first.size()},
                                          {"disambiguated", disamb}};
  }
  write_json(dir / "summary.json", summary);
  spdlog::info("assign-ids: {}", summary.dump());
  return {"struids.tsv", "summary.json"};
}

std::vector<std::string> corpus_files() {
  return {"vocab.json", "meta.json", "train.jsonl", "valid.jsonl", "test.jsonl"};
}

std::vector<std::string> do_build_corpus(const RunConfig& cfg, const fs::path& dir) {
  const auto ing = load_ingest(cfg.paths.workdir);
  const StruIdTable table = load_struids(cfg.paths.workdir, ing.catalog);
  const auto timelines = build_timelines(ing.split, ing.catalog);
  const Corpus c = build_corpus(timelines, ing.catalog, table, {cfg.window, cfg.seed});
  save_corpus(dir, c);
  spdlog::info("build-corpus: {} train / {} valid / {} test sequences, vocabulary {}", c.train.size(),
               c.valid.size(), c.test.size(), c.vocab.size());
  return corpus_files();
}

/// Trains on `corpus.train` and saves under `dir`; returns the output files.
std::vector<std::string> train_and_save(const Corpus& corpus, const RunConfig& cfg, const fs::path& dir) {
  LmConfig lc = cfg.lm;
  lc.vocab_size = corpus.vocab.size();
  lc.max_len = static_cast<int>(corpus.max_len);
  TransformerLm model(lc);
  const LmTrainResult res = train_lm(model, corpus.train, cfg.lm_train);
  save_lm(dir / "checkpoint", model, res.steps, {{"epoch_loss", res.epoch_loss}});
  write_json(dir / "loss.json", {{"epoch_loss", res.epoch_loss},
                                 {"steps", res.steps},
                                 {"skipped_steps", res.skipped_steps}});
  if (res.abort_reason) {
    throw NumericalFailure(*res.abort_reason + "; last finite parameters saved under " +
                           (dir / "checkpoint").string());
  }
  auto out = checkpoint_files(dir, "checkpoint");
  out.push_back("loss.json");
  return out;
}

std::vector<std::string> do_train_lm(const RunConfig& cfg, const fs::path& dir) {
  const Corpus corpus = load_corpus(stage_dir(cfg.paths.workdir, Stage::build_corpus));
  if (corpus.train.empty()) throw DataError("train-lm: the corpus has no training sequences");
  return train_and_save(corpus, cfg, dir);
}

/// Evaluates `model` on `corpus.test` and writes report.json, report.txt and
/// predictions.jsonl into `dir`.
EvalReport evaluate_into(const TransformerLm& model, const Corpus& corpus, const IngestArtifacts& ing,
                         const StruIdTable& table, const RunConfig& cfg, const fs::path& dir) {
  const auto counts = entity_counts(ing.catalog);
  const EntityCodec codec = corpus_codec(corpus, table, counts, cfg.seed);
  const auto tries = build_tries(codec);
  const auto timelines = build_timelines(ing.split, ing.catalog);
  const SubsetMasks masks = subset_masks(corpus.test, timelines, counts[1], cfg.cold_start_threshold);
  EvalOutput out = run_eval(model, corpus.test, codec, tries, masks, {cfg.ks, cfg.beam_width});
  out.report.meta = {{"seed", cfg.seed},
                     {"config_hash", full_config_hash(cfg)},
                     {"test_examples", corpus.test.size()},
                     {"version", kVersion}};
  write_text(dir / "report.json", out.report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", out.report.table());
  const auto names = raw_ids(ing.catalog);
  std::ofstream pred(dir / "predictions.jsonl", std::ios::binary);
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    const TokenSequence& s = corpus.test[i];
    const auto& typed = names[static_cast<std::size_t>(target_type(s.task))];
    json ranked = json::array();
    for (int e : out.rankings[i]) ranked.push_back(typed.at(static_cast<std::size_t>(e)));
    pred << json{{"task", to_string(s.task)},
                 {"user", names[0].at(static_cast<std::size_t>(s.user.index))},
                 {"position", s.position},
                 {"target_poi", names[1].at(static_cast<std::size_t>(s.target_poi))},
                 {"ranked", ranked}}
                .dump()
         << '\n';
  }
  return out.report;
}

std::vector<std::string> do_evaluate(const RunConfig& cfg, const fs::path& dir) {
  const auto& wd = cfg.paths.workdir;
  const auto ing = load_ingest(wd);
  const StruIdTable table = load_struids(wd, ing.catalog);
  const Corpus corpus = load_corpus(stage_dir(wd, Stage::build_corpus));
  const TransformerLm model = load_lm(stage_dir(wd, Stage::train_lm) / "checkpoint");
  const EvalReport rep = evaluate_into(model, corpus, ing, table, cfg, dir);
  spdlog::info("evaluate:\n{}", rep.table());
  return {"report.json", "report.txt", "predictions.jsonl"};
}

std::vector<std::string> do_project(const RunConfig& cfg, const fs::path& dir) {
  const auto& wd = cfg.paths.workdir;
  const auto ing = load_ingest(wd);
  const KnowledgeGraph g = load_kg(wd);
  TokenizerModel model = load_tokenizer(wd, g, cfg.tokenizer);
  const RelationalAdjacency adj(g);
  const nn::Matrix q = quantized_vectors(encode_values(adj, model.rgcn), g, model.codebooks);
  const int n = g.count(EntityType::poi);
  const nn::Matrix pois = q.middleRows(g.offset(EntityType::poi), n);
  const bool by_region = cfg.project_label == "region";
  const auto names = raw_ids(ing.catalog);
  std::vector<int> labels;
  std::vector<std::string> label_names;
  for (const PoiMeta& m : ing.catalog.poi_meta) {
    labels.push_back(by_region ? m.region : m.category);
    label_names.push_back(by_region ? names[3].at(static_cast<std::size_t>(m.region))
                                    : names[2].at(static_cast<std::size_t>(m.category)));
  }
  const Projection p = project_ids(pois, labels);
  {
    std::ofstream f(dir / "projection.tsv", std::ios::binary);
    write_projection_tsv(f, p, label_names, names[1]);
  }
  write_json(dir / "summary.json",
             {{"label", cfg.project_label},
              {"pois", n},
              {"silhouette", p.silhouette ? json(*p.silhouette) : json()}});
  spdlog::info("project: silhouette by {} = {}", cfg.project_label,
               p.silhouette ? std::to_string(*p.silhouette) : "n/a");
  return {"projection.tsv", "summary.json"};
}

std::vector<std::string> do_ablate(const RunConfig& cfg, const fs::path& dir) {
  const auto& wd = cfg.paths.workdir;
  const auto ing = load_ingest(wd);
  const StruIdTable table = load_struids(wd, ing.catalog);
  const Corpus full = load_corpus(stage_dir(wd, Stage::build_corpus));
  const auto counts = entity_counts(ing.catalog);
  std::string split_concat;
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) {
    split_concat += sha256_file(stage_dir(wd, Stage::ingest) / f);
  }
  const std::string split_hash = sha256_hex(split_concat);
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (Ablation v : cfg.ablations) {
    const std::string name(to_string(v));
    const fs::path vdir = dir / name;
    spdlog::info("ablate: variant {}", name);
    const Corpus c = v == Ablation::full ? full : ablation_variant(full, v, table, counts, cfg.seed);
    save_corpus(vdir / "corpus", c);
    for (const auto& f : train_and_save(c, cfg, vdir / "lm")) outputs.push_back(name + "/lm/" + f);
    const TransformerLm model = load_lm(vdir / "lm" / "checkpoint");
    EvalReport rep = evaluate_into(model, c, ing, table, cfg, vdir);
    rep.meta["split_sha256"] = split_hash;
    rep.meta["variant"] = name;
    write_text(vdir / "report.json", rep.to_json().dump(2) + "\n");
    for (const auto& f : corpus_files()) outputs.push_back(name + "/corpus/" + f);
    for (const char* f : {"report.json", "report.txt", "predictions.jsonl"}) outputs.push_back(name + "/" + f);
  }
  for (Ablation v : cfg.ablations) {
    const std::string name(to_string(v));
    const fs::path rp = dir / name / "report.json";
    if (!fs::exists(rp)) throw MissingArtifact("ablate", "ablation variant '" + name + "' has no report");
    std::ifstream in(rp);
    rows.emplace_back(name, EvalReport::from_json(json::parse(in)));
  }
  write_text(dir / "table.json", ablation_json(rows, split_hash).dump(2) + "\n");
  write_text(dir / "table.txt", ablation_table(rows));
  spdlog::info("ablate:\n{}", ablation_table(rows));
  outputs.push_back("table.json");
  outputs.push_back("table.txt");
  return outputs;
}

using StageFn = std::vector<std::string> (*)(const RunConfig&, const fs::path&);

StageFn body(Stage s) {
  switch (s) {
    case Stage::ingest:
      return do_ingest;
    case Stage::build_kg:
      return do_build_kg;
    case Stage::train_tokenizer:
      return do_train_tokenizer;
    case Stage::assign_ids:
      return do_assign_ids;
    case Stage::build_corpus:
      return do_build_corpus;
    case Stage::train_lm:
      return do_train_lm;
    case Stage::evaluate:
      return do_evaluate;
    case Stage::project:
      return do_project;
    case Stage::ablate:
      return do_ablate;
  }
  throw ContractError("unknown stage");
}

json hash_files(const fs::path& base, const std::vector<std::string>& rel) {
  json out = json::object();
  for (const auto& r : rel) out[r] = sha256_file(base / r);
  return out;
}

}  // namespace

std::string_view to_string(Stage s) { return info(s).name; }

Stage stage_from(std::string_view name) {
  for (const StageInfo& i : stages()) {
    if (i.name == name) return i.stage;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> stage_dependencies(Stage s) { return info(s).deps; }

fs::path stage_dir(const fs::path& workdir, Stage s) { return workdir / info(s).dir; }

json read_json(const fs::path& path, std::string_view producing_stage) {
  std::ifstream in(path);
  if (!in) {
    throw MissingArtifact(std::string(producing_stage),
                          "missing " + path.string() + "; run `" + std::string(producing_stage) + "` first");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

bool run_stage(Stage s, const RunConfig& cfg, const RunOptions& opt) {
  const fs::path& wd = cfg.paths.workdir;
  const StageInfo& me = info(s);
  const fs::path dir = stage_dir(wd, s);
  json upstream = json::object();
  json inputs = json::object();
  for (Stage d : me.deps) {
    const fs::path mpath = stage_dir(wd, d) / "manifest.json";
    if (!fs::exists(mpath)) {
      throw MissingArtifact(std::string(to_string(d)),
                            "stage '" + std::string(me.name) + "' needs the artifacts of stage '" +
                                std::string(to_string(d)) + "'; run `kgrec " + std::string(to_string(d)) +
                                "` first");
    }
    const json m = read_json(mpath, to_string(d));
    const std::string want = stage_hash(cfg, d);
    if (m.at("config_hash").get<std::string>() != want) {
      if (!opt.force) {
        throw ConfigError("stage '" + std::string(to_string(d)) +
                          "' was run with a different configuration; rerun it or pass --force");
      }
      spdlog::warn("{}: using '{}' artifacts built under a different configuration (--force)", me.name,
                   to_string(d));
    }
    upstream[std::string(to_string(d))] = m.at("config_hash");
    for (const auto& [rel, h] : m.at("outputs").items()) {
      inputs[(fs::path(info(d).dir) / rel).string()] = sha256_file(stage_dir(wd, d) / rel);
    }
  }
  if (s == Stage::ingest && !cfg.paths.raw.empty() && fs::exists(cfg.paths.raw)) {
    inputs["raw"] = sha256_file(cfg.paths.raw);
  }
  const std::string own = stage_hash(cfg, s);

  const fs::path mpath = dir / "manifest.json";
  if (fs::exists(mpath)) {
    std::ifstream in(mpath);
    const json old = json::parse(in, nullptr, false);
    bool fresh = !old.is_discarded() && old.value("config_hash", "") == own &&
                 old.value("upstream", json()) == upstream && old.value("inputs", json()) == inputs;
    if (fresh) {
      for (const auto& [rel, h] : old.at("outputs").items()) {
        if (!fs::exists(dir / rel) || sha256_file(dir / rel) != h.get<std::string>()) {
          fresh = false;
          break;
        }
      }
    }
    if (fresh) {
      spdlog::info("{}: up to date", me.name);
      return false;
    }
  }

  spdlog::info("{}: running", me.name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto outputs = body(s)(cfg, dir);
  json manifest = {{"stage", me.name},
                   {"version", kVersion},
                   {"config_hash", own},
                   {"full_config_hash", full_config_hash(cfg)},
                   {"seed", cfg.seed},
                   {"inputs", inputs},
                   {"upstream", upstream},
                   {"outputs", hash_files(dir, outputs)}};
  write_json(mpath, manifest);
  return true;
}

void run_pipeline(const RunConfig& cfg, const RunOptions& opt) {
  for (Stage s : {Stage::ingest, Stage::build_kg, Stage::train_tokenizer, Stage::assign_ids,
                  Stage::build_corpus, Stage::train_lm, Stage::evaluate, Stage::project}) {
    run_stage(s, cfg, opt);
  }
  if (cfg.pipeline_ablate) run_stage(Stage::ablate, cfg, opt);
}

// ---- loading ------------------------------------------------------------------

IngestArtifacts load_ingest(const fs::path& workdir) {
  const fs::path dir = stage_dir(workdir, Stage::ingest);
  IngestArtifacts a;
  a.catalog = catalog_from_json(read_json(dir / "catalog.json", "ingest"));
  a.split.users.resize(a.catalog.users.size());
  for (std::size_t u = 0; u < a.catalog.users.size(); ++u) a.split.users[u].user_id = a.catalog.users[u];
  for (SplitPart p : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
    const fs::path f = dir / (std::string(to_string(p)) + ".jsonl");
    if (!fs::exists(f)) throw MissingArtifact("ingest", "missing " + f.string() + "; run `ingest` first");
    for (CheckInEvent& e : parse_checkins(f, InputFormat::jsonl)) {
      UserSequence& us = a.split.users[static_cast<std::size_t>(a.catalog.user(e.user_id))];
      auto& dst = p == SplitPart::train ? us.train : p == SplitPart::valid ? us.valid : us.test;
      dst.push_back(std::move(e));
    }
  }
  return a;
}

KnowledgeGraph load_kg(const fs::path& workdir) {
  return kg_from_json(read_json(stage_dir(workdir, Stage::build_kg) / "kg.json", "build-kg"));
}

TokenizerModel load_tokenizer(const fs::path& workdir, const KnowledgeGraph& g, const TokenizerConfig& cfg) {
  const fs::path dir = stage_dir(workdir, Stage::train_tokenizer) / "checkpoint";
  if (!fs::exists(dir / "checkpoint.json")) {
    throw MissingArtifact("train-tokenizer", "missing tokenizer checkpoint; run `train-tokenizer` first");
  }
  TokenizerModel model = TokenizerModel::init(g, cfg);
  const auto params = model.parameters();
  nn::load_checkpoint(dir, params);
  return model;
}

StruIdTable load_struids(const fs::path& workdir, const Catalog& catalog) {
  const fs::path f = stage_dir(workdir, Stage::assign_ids) / "struids.tsv";
  std::ifstream in(f);
  if (!in) throw MissingArtifact("assign-ids", "missing " + f.string() + "; run `assign-ids` first");
  return read_struid_tsv(in, raw_ids(catalog));
}

void save_corpus(const fs::path& dir, const Corpus& c) {
  fs::create_directories(dir);
  write_json(dir / "vocab.json", c.vocab.to_json());
  write_json(dir / "meta.json", {{"window", c.window}, {"max_len", c.max_len}});
  for (SplitPart p : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
    const auto& seqs = p == SplitPart::train ? c.train : p == SplitPart::valid ? c.valid : c.test;
    std::ofstream f(dir / (std::string(to_string(p)) + ".jsonl"), std::ios::binary);
    write_corpus_jsonl(f, seqs);
  }
}

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.vocab = Vocabulary::from_json(read_json(dir / "vocab.json", "build-corpus"));
  const json meta = read_json(dir / "meta.json", "build-corpus");
  c.window = meta.at("window").get<int>();
  c.max_len = meta.at("max_len").get<std::size_t>();
  for (SplitPart p : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
    const fs::path f = dir / (std::string(to_string(p)) + ".jsonl");
    std::ifstream in(f);
    if (!in) throw MissingArtifact("build-corpus", "missing " + f.string() + "; run `build-corpus` first");
    auto seqs = read_corpus_jsonl(in);
    (p == SplitPart::train ? c.train : p == SplitPart::valid ? c.valid : c.test) = std::move(seqs);
  }
  return c;
}

std::array<std::vector<std::string>, kEntityTypes> raw_ids(const Catalog& catalog) {
  std::array<std::vector<std::string>, kEntityTypes> out;
  out[0] = catalog.users;
  out[1] = catalog.pois;
  out[2] = catalog.categories;
  for (int cell : catalog.regions.cell_of_region) out[3].push_back("cell" + std::to_string(cell));
  return out;
}

std::array<int, kEntityTypes> entity_counts(const Catalog& catalog) {
  return {static_cast<int>(catalog.users.size()), static_cast<int>(catalog.pois.size()),
          static_cast<int>(catalog.categories.size()), catalog.region_count};
}

}  // namespace kgrec
