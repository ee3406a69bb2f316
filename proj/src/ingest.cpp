#include "kgrec/ingest.hpp"

#include "kgrec/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

namespace kgrec {

InputFormat parse_input_format(std::string_view name) {
  if (name == "jsonl") return InputFormat::jsonl;
  if (name == "tsv") return InputFormat::tsv;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected jsonl or tsv)");
}

InputFormat input_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".json") ? InputFormat::jsonl : InputFormat::tsv;
}

namespace {

bool valid_event(const CheckInEvent& e) {
  return !e.user_id.empty() && !e.poi_id.empty() && !e.category_id.empty() &&
         std::isfinite(e.lat) && std::isfinite(e.lon) && e.lat >= -90.0 && e.lat <= 90.0 &&
         e.lon >= -180.0 && e.lon <= 180.0 && e.timestamp > 0;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<CheckInEvent> parse_tsv_line(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos
                                                                    : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 6) return std::nullopt;
  auto lat = parse_number<double>(cols[2]);
  auto lon = parse_number<double>(cols[3]);
  auto ts = parse_number<std::int64_t>(cols[5]);
  if (!lat || !lon || !ts) return std::nullopt;
  return CheckInEvent{std::string(cols[0]), std::string(cols[1]), *lat, *lon,
                      std::string(cols[4]), *ts};
}

std::optional<std::string> json_id(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

std::optional<CheckInEvent> parse_json_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto user = json_id(j, "user");
  auto poi = json_id(j, "poi");
  auto cat = json_id(j, "category");
  auto lat = j.find("lat");
  auto lon = j.find("lon");
  auto ts = j.find("ts");
  if (!user || !poi || !cat || lat == j.end() || lon == j.end() || ts == j.end()) {
    return std::nullopt;
  }
  if (!lat->is_number() || !lon->is_number() || !ts->is_number_integer()) return std::nullopt;
  return CheckInEvent{*user, *poi, lat->get<double>(), lon->get<double>(), *cat,
                      ts->get<std::int64_t>()};
}

struct PoiRecord {
  double lat;
  double lon;
  std::string category;
  std::size_t line;
};

}  // namespace

std::vector<CheckInEvent> parse_checkins(const std::filesystem::path& path, InputFormat format,
                                         ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read check-in file " + path.string());
  return parse_checkins(in, format, report);
}

std::vector<CheckInEvent> parse_checkins(std::istream& in, InputFormat format,
                                         ParseReport* report) {
  ParseReport local;
  ParseReport& rep = report != nullptr ? *report : local;
  rep = {};
  std::vector<CheckInEvent> events;
  std::unordered_map<std::string, PoiRecord> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++rep.lines;
    auto ev = format == InputFormat::tsv ? parse_tsv_line(line) : parse_json_line(line);
    if (!ev || !valid_event(*ev)) {
      ++rep.malformed;
      rep.malformed_lines.push_back(lineno);
      continue;
    }
    auto [it, inserted] = seen.try_emplace(ev->poi_id, PoiRecord{ev->lat, ev->lon, ev->category_id, lineno});
    if (!inserted) {
      const PoiRecord& first = it->second;
      if (first.lat != ev->lat || first.lon != ev->lon || first.category != ev->category_id) {
        std::ostringstream os;
        os << "POI '" << ev->poi_id << "' at line " << lineno
           << " conflicts with its first record at line " << first.line;
        throw DataError(os.str());
      }
    }
    events.push_back(std::move(*ev));
  }
  if (rep.lines == 0) {
    spdlog::warn("check-in input is empty");
    return events;
  }
  if (rep.malformed * 100 > rep.lines) {
    std::ostringstream os;
    os << rep.malformed << " of " << rep.lines << " lines malformed (limit 1%); lines:";
    const std::size_t shown = std::min<std::size_t>(rep.malformed_lines.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) os << ' ' << rep.malformed_lines[i];
    if (shown < rep.malformed_lines.size()) os << " ...";
    throw DataError(os.str());
  }
  if (rep.malformed > 0) {
    spdlog::warn("skipped {} malformed check-in lines", rep.malformed);
  }
  return events;
}

void write_checkins_jsonl(std::ostream& out, std::span<const CheckInEvent> events) {
  for (const CheckInEvent& e : events) {
    nlohmann::json j = {{"user", e.user_id}, {"poi", e.poi_id},          {"lat", e.lat},
                        {"lon", e.lon},      {"category", e.category_id}, {"ts", e.timestamp}};
    out << j.dump() << '\n';
  }
}

void write_checkins_tsv(std::ostream& out, std::span<const CheckInEvent> events) {
  const auto precision = out.precision(9);
  for (const CheckInEvent& e : events) {
    out << e.user_id << '\t' << e.poi_id << '\t' << e.lat << '\t' << e.lon << '\t' << e.category_id << '\t'
        << e.timestamp << '\n';
  }
  out.precision(precision);
}

int RegionGrid::cell_of(double lat, double lon) const {
  auto axis = [this](double v, double lo, double hi) {
    const double t = (v - lo) / (hi - lo);
    const int c = static_cast<int>(std::floor(t * cells_per_axis));
    return std::clamp(c, 0, cells_per_axis - 1);
  };
  return axis(lat, min_lat, max_lat) * cells_per_axis + axis(lon, min_lon, max_lon);
}

RegionAssignment assign_regions(std::span<const CheckInEvent> events, int cells_per_axis) {
  if (events.empty()) throw DataError("assign_regions: no events");
  if (cells_per_axis < 1) throw ConfigError("cells_per_axis must be >= 1");
  RegionAssignment out;
  RegionGrid& g = out.grid;
  g.cells_per_axis = cells_per_axis;
  g.min_lat = g.max_lat = events.front().lat;
  g.min_lon = g.max_lon = events.front().lon;
  for (const CheckInEvent& e : events) {
    g.min_lat = std::min(g.min_lat, e.lat);
    g.max_lat = std::max(g.max_lat, e.lat);
    g.min_lon = std::min(g.min_lon, e.lon);
    g.max_lon = std::max(g.max_lon, e.lon);
  }
  // A zero-extent axis puts every POI in cell 0 of that axis.
  if (g.max_lat <= g.min_lat) g.max_lat = g.min_lat + 1e-6;
  if (g.max_lon <= g.min_lon) g.max_lon = g.min_lon + 1e-6;

  std::map<int, std::vector<const std::string*>> by_cell;
  std::unordered_map<std::string, int> cell_of_poi;
  for (const CheckInEvent& e : events) {
    if (cell_of_poi.contains(e.poi_id)) continue;
    const int cell = g.cell_of(e.lat, e.lon);
    cell_of_poi.emplace(e.poi_id, cell);
    by_cell[cell];
  }
  std::unordered_map<int, int> dense;
  for (const auto& [cell, unused] : by_cell) {
    dense.emplace(cell, static_cast<int>(out.cell_of_region.size()));
    out.cell_of_region.push_back(cell);
  }
  for (const auto& [poi, cell] : cell_of_poi) out.region_of_poi.emplace(poi, dense.at(cell));
  return out;
}

DatasetSplit split_chronological(std::span<const CheckInEvent> events) {
  DatasetSplit split;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<std::size_t>> order;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(events[i].user_id, order.size());
    if (inserted) {
      order.emplace_back();
      split.users.push_back(UserSequence{events[i].user_id, {}, {}, {}});
    }
    order[it->second].push_back(i);
  }
  for (std::size_t u = 0; u < order.size(); ++u) {
    auto& idx = order[u];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].timestamp < events[b].timestamp;
    });
    const std::size_t n = idx.size();
    std::size_t n_train = n;
    std::size_t n_valid = 0;
    if (n >= 3) {
      n_train = n * 7 / 10;
      n_valid = n / 10;
    }
    UserSequence& us = split.users[u];
    for (std::size_t k = 0; k < n; ++k) {
      const CheckInEvent& e = events[idx[k]];
      if (k < n_train) {
        us.train.push_back(e);
      } else if (k < n_train + n_valid) {
        us.valid.push_back(e);
      } else {
        us.test.push_back(e);
      }
    }
  }
  return split;
}

int Catalog::user(const std::string& id) const {
  auto it = user_index.find(id);
  if (it == user_index.end()) throw DataError("unknown user '" + id + "'");
  return it->second;
}

int Catalog::poi(const std::string& id) const {
  auto it = poi_index.find(id);
  if (it == poi_index.end()) throw DataError("unknown POI '" + id + "'");
  return it->second;
}

namespace {

void rebuild_indices(Catalog& c) {
  c.user_index.clear();
  c.poi_index.clear();
  c.category_index.clear();
  for (std::size_t i = 0; i < c.users.size(); ++i) c.user_index.emplace(c.users[i], static_cast<int>(i));
  for (std::size_t i = 0; i < c.pois.size(); ++i) c.poi_index.emplace(c.pois[i], static_cast<int>(i));
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    c.category_index.emplace(c.categories[i], static_cast<int>(i));
  }
}

}  // namespace

Catalog build_catalog(std::span<const CheckInEvent> events, const RegionAssignment& regions) {
  Catalog c;
  c.regions = regions;
  c.region_count = static_cast<int>(regions.cell_of_region.size());
  for (const CheckInEvent& e : events) {
    if (c.user_index.try_emplace(e.user_id, static_cast<int>(c.users.size())).second) {
      c.users.push_back(e.user_id);
    }
    auto [cit, new_cat] = c.category_index.try_emplace(e.category_id, static_cast<int>(c.categories.size()));
    if (new_cat) c.categories.push_back(e.category_id);
    if (c.poi_index.try_emplace(e.poi_id, static_cast<int>(c.pois.size())).second) {
      c.pois.push_back(e.poi_id);
      auto rit = regions.region_of_poi.find(e.poi_id);
      if (rit == regions.region_of_poi.end()) {
        throw DataError("POI '" + e.poi_id + "' has no region assignment");
      }
      c.poi_meta.push_back(PoiMeta{e.lat, e.lon, cit->second, rit->second});
    }
  }
  return c;
}

nlohmann::json catalog_to_json(const Catalog& c) {
  nlohmann::json pois = nlohmann::json::array();
  for (std::size_t i = 0; i < c.pois.size(); ++i) {
    const PoiMeta& m = c.poi_meta[i];
    pois.push_back({{"id", c.pois[i]}, {"lat", m.lat}, {"lon", m.lon},
                    {"category", m.category}, {"region", m.region}});
  }
  const RegionGrid& g = c.regions.grid;
  return {{"users", c.users},
          {"categories", c.categories},
          {"pois", pois},
          {"grid",
           {{"min_lat", g.min_lat},
            {"min_lon", g.min_lon},
            {"max_lat", g.max_lat},
            {"max_lon", g.max_lon},
            {"cells_per_axis", g.cells_per_axis}}},
          {"region_cells", c.regions.cell_of_region}};
}

Catalog catalog_from_json(const nlohmann::json& j) {
  Catalog c;
  c.users = j.at("users").get<std::vector<std::string>>();
  c.categories = j.at("categories").get<std::vector<std::string>>();
  for (const auto& p : j.at("pois")) {
    c.pois.push_back(p.at("id").get<std::string>());
    c.poi_meta.push_back(PoiMeta{p.at("lat").get<double>(), p.at("lon").get<double>(),
                                 p.at("category").get<int>(), p.at("region").get<int>()});
    c.regions.region_of_poi.emplace(c.pois.back(), c.poi_meta.back().region);
  }
  const auto& g = j.at("grid");
  c.regions.grid = RegionGrid{g.at("min_lat").get<double>(), g.at("min_lon").get<double>(),
                              g.at("max_lat").get<double>(), g.at("max_lon").get<double>(),
                              g.at("cells_per_axis").get<int>()};
  c.regions.cell_of_region = j.at("region_cells").get<std::vector<int>>();
  c.region_count = static_cast<int>(c.regions.cell_of_region.size());
  rebuild_indices(c);
  return c;
}

DatasetStats compute_stats(std::span<const CheckInEvent> events, const RegionAssignment& regions) {
  std::unordered_map<std::string, int> users, pois, cats;
  for (const CheckInEvent& e : events) {
    users.try_emplace(e.user_id, 0);
    pois.try_emplace(e.poi_id, 0);
    cats.try_emplace(e.category_id, 0);
  }
  return DatasetStats{users.size(), pois.size(), events.size(), cats.size(),
                      regions.cell_of_region.size()};
}

nlohmann::json stats_to_json(const DatasetStats& s) {
  return {{"users", s.users},           {"pois", s.pois},      {"records", s.records},
          {"categories", s.categories}, {"regions", s.regions}};
}

}  // namespace kgrec
