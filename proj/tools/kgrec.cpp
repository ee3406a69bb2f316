// kgrec: command-line driver for the staged pipeline.

#include "kgrec/config.hpp"
#include "kgrec/error.hpp"
#include "kgrec/eval.hpp"
#include "kgrec/pipeline.hpp"
#include "kgrec/synth.hpp"
#include "kgrec/tensor.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string workdir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string log_level = "info";
};

kgrec::RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  kgrec::RunConfig cfg = c.config.empty() ? kgrec::default_config(overrides)
                                          : kgrec::load_config(c.config, overrides);
  if (const char* env = std::getenv("KGREC_WORKDIR"); env && *env) cfg.paths.workdir = env;
  if (!c.workdir.empty()) cfg.paths.workdir = c.workdir;
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "TOML run configuration")->check(CLI::ExistingFile);
  sub->add_option("-w,--workdir", c.workdir, "Working directory (overrides KGREC_WORKDIR and the config)");
  sub->add_option("-s,--set", c.overrides, "Override a config field, e.g. --set lm.epochs=3");
  sub->add_option("--seed", c.seed, "Override the run seed");
  sub->add_flag("--force", c.force, "Accept upstream artifacts built under a different config");
  sub->add_option("--log-level", c.log_level, "trace|debug|info|warn|error|off");
}

int generate(const kgrec::RunConfig& cfg, const std::string& input, const std::string& output, int k,
             int beam) {
  const auto& wd = cfg.paths.workdir;
  const auto ing = kgrec::load_ingest(wd);
  const auto table = kgrec::load_struids(wd, ing.catalog);
  const auto corpus = kgrec::load_corpus(kgrec::stage_dir(wd, kgrec::Stage::build_corpus));
  const auto model = kgrec::load_lm(kgrec::stage_dir(wd, kgrec::Stage::train_lm) / "checkpoint");
  const auto codec = kgrec::corpus_codec(corpus, table, kgrec::entity_counts(ing.catalog), cfg.seed);
  const auto tries = kgrec::build_tries(codec);
  const auto names = kgrec::raw_ids(ing.catalog);
  std::ifstream in(input);
  if (!in) throw kgrec::DataError("cannot read " + input);
  std::ofstream file;
  if (!output.empty()) file.open(output, std::ios::binary);
  std::ostream& out = output.empty() ? std::cout : file;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw kgrec::DataError("input line " + std::to_string(n) + ": " + e.what());
    }
    const kgrec::Task task = kgrec::task_from(j.value("task", "poi"));
    const auto type = kgrec::target_type(task);
    const auto ids = j.at("input_ids").get<std::vector<int>>();
    const auto gen = kgrec::generate_topk(model, ids, tries[static_cast<std::size_t>(type)], k, std::max(k, beam));
    json ranked = json::array();
    for (const auto& c : gen.ranked) {
      ranked.push_back({{"id", names[static_cast<std::size_t>(type)].at(static_cast<std::size_t>(c.entity))},
                        {"tokens", c.tokens},
                        {"score", c.score}});
    }
    out << json{{"task", kgrec::to_string(task)}, {"ranked", ranked}, {"short_result", gen.short_result}}.dump()
        << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  kgrec::nn::tune_allocator();
  CLI::App app{"Knowledge-graph tokenized next-POI recommendation"};
  app.require_subcommand(1);
  Common common;

  std::vector<std::pair<CLI::App*, kgrec::Stage>> stage_cmds;
  auto stage_cmd = [&](kgrec::Stage s, const std::string& help) {
    CLI::App* sub = app.add_subcommand(std::string(kgrec::to_string(s)), help);
    add_common(sub, common);
    stage_cmds.emplace_back(sub, s);
    return sub;
  };
  stage_cmd(kgrec::Stage::ingest, "Parse check-ins, derive regions, split chronologically");
  bool kg_stats = false;
  stage_cmd(kgrec::Stage::build_kg, "Build the knowledge graph")
      ->add_flag("--stats", kg_stats, "Print per-relation triple counts");
  stage_cmd(kgrec::Stage::train_tokenizer, "Train the graph-supervised quantizer");
  stage_cmd(kgrec::Stage::assign_ids, "Assign structural ids to every entity");
  stage_cmd(kgrec::Stage::build_corpus, "Serialize multi-task training corpora");
  stage_cmd(kgrec::Stage::train_lm, "Train the sequence model");
  stage_cmd(kgrec::Stage::evaluate, "Evaluate top-K recommendation on the test split");
  std::vector<std::string> variants;
  stage_cmd(kgrec::Stage::ablate, "Train and evaluate every ablation variant")
      ->add_option("--variants", variants, "Subset of variants (wo_struid, wo_regcat, ...)");
  std::string label;
  stage_cmd(kgrec::Stage::project, "Export 2-D projections of POI quantized vectors")
      ->add_option("--label", label, "region or category");

  CLI::App* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  add_common(pipeline, common);

  CLI::App* gen = app.add_subcommand("generate", "Rank ids for JSONL input sequences");
  add_common(gen, common);
  std::string gen_in, gen_out;
  int gen_k = 10, gen_beam = 20;
  gen->add_option("-i,--input", gen_in, "JSONL with input_ids (and task)")->required();
  gen->add_option("-o,--output", gen_out, "Output JSONL (default stdout)");
  gen->add_option("-k", gen_k, "Ids per input");
  gen->add_option("--beam", gen_beam, "Beam width");

  CLI::App* synth = app.add_subcommand("synth", "Write the synthetic-city check-in fixture");
  kgrec::CityOptions city;
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "Output file (.tsv or .jsonl)")->required();
  synth->add_option("--users", city.users);
  synth->add_option("--pois", city.pois);
  synth->add_option("--days", city.days);
  synth->add_option("--grid-side", city.grid_side);
  synth->add_option("--categories", city.categories);
  synth->add_option("--regularity", city.regularity);
  synth->add_option("--seed", city.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    if (synth->parsed()) {
      const auto events = kgrec::synthetic_city(city);
      std::ofstream out(synth_out, std::ios::binary);
      if (!out) throw kgrec::DataError("cannot write " + synth_out);
      if (kgrec::input_format_for(synth_out) == kgrec::InputFormat::jsonl) {
        kgrec::write_checkins_jsonl(out, events);
      } else {
        kgrec::write_checkins_tsv(out, events);
      }
      spdlog::info("wrote {} check-ins to {}", events.size(), synth_out);
      return 0;
    }
    kgrec::RunConfig cfg = resolve(common);
    if (!label.empty()) cfg.project_label = label;
    if (!variants.empty()) {
      cfg.ablations.clear();
      for (const auto& v : variants) cfg.ablations.push_back(kgrec::ablation_from(v));
    }
    cfg.validate();
    const kgrec::RunOptions opt{common.force};
    if (pipeline->parsed()) {
      kgrec::run_pipeline(cfg, opt);
      std::cout << kgrec::EvalReport::from_json(
                       kgrec::read_json(kgrec::stage_dir(cfg.paths.workdir, kgrec::Stage::evaluate) / "report.json",
                                        "evaluate"))
                       .table();
      return 0;
    }
    if (gen->parsed()) return generate(cfg, gen_in, gen_out, gen_k, gen_beam);
    for (const auto& [sub, stage] : stage_cmds) {
      if (!sub->parsed()) continue;
      kgrec::run_stage(stage, cfg, opt);
      if (stage == kgrec::Stage::build_kg && kg_stats) {
        std::cout << kgrec::read_json(kgrec::stage_dir(cfg.paths.workdir, stage) / "stats.json", "build-kg").dump(2)
                  << '\n';
      }
      if (stage == kgrec::Stage::evaluate) {
        std::cout << kgrec::EvalReport::from_json(
                         kgrec::read_json(kgrec::stage_dir(cfg.paths.workdir, stage) / "report.json", "evaluate"))
                         .table();
      }
    }
    return 0;
  } catch (const kgrec::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const kgrec::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
