#include "kgrec/config.hpp"
#include "kgrec/error.hpp"
#include "kgrec/eval.hpp"
#include "kgrec/ingest.hpp"
#include "kgrec/kg.hpp"
#include "kgrec/lm.hpp"
#include "kgrec/pipeline.hpp"
#include "kgrec/synth.hpp"
#include "kgrec/tensor.hpp"
#include "kgrec/tokenizer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <spdlog/spdlog.h>

#include <fstream>

namespace py = pybind11;
using namespace kgrec;

namespace {

RunConfig make_config(const std::string& path, const std::vector<std::string>& overrides) {
  return path.empty() ? default_config(overrides) : load_config(path, overrides);
}

// JSON crosses the boundary as text; the Python side parses it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

/// Trained artifacts of one work directory, ready to rank ids.
class Recommender {
 public:
  explicit Recommender(const std::filesystem::path& workdir, std::uint64_t seed)
      : ingest_(load_ingest(workdir)),
        table_(load_struids(workdir, ingest_.catalog)),
        corpus_(load_corpus(stage_dir(workdir, Stage::build_corpus))),
        model_(load_lm(stage_dir(workdir, Stage::train_lm) / "checkpoint")),
        codec_(corpus_codec(corpus_, table_, entity_counts(ingest_.catalog), seed)),
        tries_(build_tries(codec_)),
        names_(raw_ids(ingest_.catalog)) {}

  py::list rank(const std::vector<int>& input_ids, const std::string& task, int k, int beam_width) const {
    const auto type = target_type(task_from(task));
    Generation g;
    {
      py::gil_scoped_release release;
      g = generate_topk(model_, input_ids, tries_[static_cast<std::size_t>(type)], k, beam_width);
    }
    py::list out;
    for (const auto& c : g.ranked) {
      out.append(py::make_tuple(names_[static_cast<std::size_t>(type)].at(static_cast<std::size_t>(c.entity)),
                                c.score, c.tokens));
    }
    return out;
  }

  std::vector<py::dict> test_examples(const std::string& task) const {
    std::vector<py::dict> out;
    for (const TokenSequence& s : corpus_.test) {
      if (!task.empty() && to_string(s.task) != task) continue;
      py::dict d;
      d["task"] = std::string(to_string(s.task));
      d["user"] = names_[0].at(static_cast<std::size_t>(s.user.index));
      d["input_ids"] = s.input_tokens;
      d["target_ids"] = s.target_tokens;
      d["target_poi"] = names_[1].at(static_cast<std::size_t>(s.target_poi));
      out.push_back(std::move(d));
    }
    return out;
  }

  std::vector<int> struid(const std::string& type, const std::string& raw) const {
    const EntityType t = entity_type_from(type);
    const auto& names = names_[static_cast<std::size_t>(t)];
    const auto it = std::find(names.begin(), names.end(), raw);
    if (it == names.end()) throw DataError("unknown " + type + " id '" + raw + "'");
    return codec_.tokens({t, static_cast<int>(it - names.begin())});
  }

  int vocab_size() const { return model_.config().vocab_size; }

 private:
  IngestArtifacts ingest_;
  StruIdTable table_;
  Corpus corpus_;
  TransformerLm model_;
  EntityCodec codec_;
  std::array<DecodingTrie, kEntityTypes> tries_;
  std::array<std::vector<std::string>, kEntityTypes> names_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge-graph tokenized next-POI recommendation";
  nn::tune_allocator();
  spdlog::set_level(spdlog::level::warn);

  py::register_exception<DataError>(m, "DataError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<MissingArtifact>(m, "MissingArtifact");
  py::register_exception<NumericalFailure>(m, "NumericalFailure");
  py::register_exception<ContractError>(m, "ContractError");

  m.attr("__version__") = std::string(kVersion);

  m.def("set_log_level", [](const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); });

  m.def(
      "config_json",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        return dump(make_config(path, overrides).to_json());
      },
      py::arg("path") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& path, const std::vector<std::string>& overrides, bool force) {
        const RunConfig cfg = make_config(path, overrides);
        py::gil_scoped_release release;
        return run_stage(stage_from(stage), cfg, RunOptions{force});
      },
      py::arg("stage"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
      py::arg("force") = false, "Runs one stage; returns False if it was already up to date.");

  m.def(
      "run_pipeline",
      [](const std::string& path, const std::vector<std::string>& overrides, bool force) {
        const RunConfig cfg = make_config(path, overrides);
        py::gil_scoped_release release;
        run_pipeline(cfg, RunOptions{force});
      },
      py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("force") = false);

  m.def(
      "synthetic_city",
      [](const std::filesystem::path& out, int users, int pois, int days, int grid_side, int categories,
         double regularity, std::uint64_t seed) {
        CityOptions o;
        o.users = users;
        o.pois = pois;
        o.days = days;
        o.grid_side = grid_side;
        o.categories = categories;
        o.regularity = regularity;
        o.seed = seed;
        const auto events = synthetic_city(o);
        std::ofstream f(out, std::ios::binary);
        if (!f) throw DataError("cannot write " + out.string());
        if (input_format_for(out.string()) == InputFormat::jsonl) {
          write_checkins_jsonl(f, events);
        } else {
          write_checkins_tsv(f, events);
        }
        return events.size();
      },
      py::arg("out"), py::arg("users") = 60, py::arg("pois") = 240, py::arg("days") = 14, py::arg("grid_side") = 3,
      py::arg("categories") = 12, py::arg("regularity") = 0.6, py::arg("seed") = 7,
      "Writes the synthetic-city check-ins; returns the number of events.");

  m.def("haversine_km", &haversine_km, py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

  m.def(
      "adjacent_pairs",
      [](const std::vector<double>& lat, const std::vector<double>& lon, double d_km) {
        if (lat.size() != lon.size()) throw ContractError("adjacent_pairs: lat and lon differ in length");
        std::vector<PoiMeta> pts;
        for (std::size_t i = 0; i < lat.size(); ++i) pts.push_back({lat[i], lon[i], 0, 0});
        return adjacent_pairs(pts, d_km);
      },
      py::arg("lat"), py::arg("lon"), py::arg("d_km") = 0.2);

  m.def("time_bucket", &time_bucket, py::arg("unix_seconds"));

  m.def(
      "hr_at_k", [](const std::vector<int>& ranked, int truth, int k) { return hr_at_k(ranked, truth, k); },
      py::arg("ranked"), py::arg("truth"), py::arg("k"));
  m.def(
      "ndcg_at_k", [](const std::vector<int>& ranked, int truth, int k) { return ndcg_at_k(ranked, truth, k); },
      py::arg("ranked"), py::arg("truth"), py::arg("k"));

  m.def(
      "quantize",
      [](const Eigen::RowVectorXd& h, const std::vector<nn::Matrix>& books) {
        CodebookSet set;
        set.type = EntityType::poi;
        for (const auto& b : books) {
          nn::Parameter p;
          p.value = b;
          set.books.push_back(std::move(p));
        }
        const QuantizeResult q = quantize(h, set);
        return py::make_tuple(q.indices, Eigen::RowVectorXd(q.quantized));
      },
      py::arg("h"), py::arg("codebooks"), "Residual quantization: (code indices, quantized vector).");

  m.def(
      "project",
      [](const nn::Matrix& vectors, const std::vector<int>& labels) {
        const Projection p = project_ids(vectors, labels);
        return py::make_tuple(nn::Matrix(p.coords), p.silhouette);
      },
      py::arg("vectors"), py::arg("labels"), "Top-2 principal components and mean silhouette by label.");

  py::class_<Recommender>(m, "Recommender")
      .def(py::init<const std::filesystem::path&, std::uint64_t>(), py::arg("workdir"), py::arg("seed") = 7)
      .def("rank", &Recommender::rank, py::arg("input_ids"), py::arg("task") = "poi", py::arg("k") = 10,
           py::arg("beam_width") = 20, "Ranked (raw id, score, tokens) by constrained beam search.")
      .def("test_examples", &Recommender::test_examples, py::arg("task") = "")
      .def("struid", &Recommender::struid, py::arg("type"), py::arg("raw_id"))
      .def_property_readonly("vocab_size", &Recommender::vocab_size);
}
