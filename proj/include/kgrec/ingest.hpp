#pragma once

// Check-in ingestion: parsing, region derivation, chronological splitting.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgrec {

struct CheckInEvent {
  std::string user_id;
  std::string poi_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string category_id;
  std::int64_t timestamp = 0;

  bool operator==(const CheckInEvent&) const = default;
};

enum class InputFormat { jsonl, tsv };

InputFormat parse_input_format(std::string_view name);
/// Guesses from the extension: .jsonl/.json -> jsonl, anything else -> tsv.
InputFormat input_format_for(const std::filesystem::path& path);

struct ParseReport {
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_lines;  // 1-based
};

/// Parses a check-in log. Malformed lines are skipped and reported; more than
/// 1% malformed lines, or one POI carrying two different (lat, lon, category)
/// records, throws DataError.
std::vector<CheckInEvent> parse_checkins(const std::filesystem::path& path, InputFormat format,
                                         ParseReport* report = nullptr);
std::vector<CheckInEvent> parse_checkins(std::istream& in, InputFormat format,
                                         ParseReport* report = nullptr);

void write_checkins_jsonl(std::ostream& out, std::span<const CheckInEvent> events);
void write_checkins_tsv(std::ostream& out, std::span<const CheckInEvent> events);

/// Uniform lat/lon grid over a bounding box.
struct RegionGrid {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;
  int cells_per_axis = 20;

  /// Row-major cell index: lat_cell * cells_per_axis + lon_cell.
  int cell_of(double lat, double lon) const;
};

struct RegionAssignment {
  RegionGrid grid;
  /// Dense region id per POI id.
  std::unordered_map<std::string, int> region_of_poi;
  /// Grid cell of each dense region id, ascending.
  std::vector<int> cell_of_region;
};

/// Tight bounding box over all POIs, `cells_per_axis`^2 cells, region ids
/// renumbered densely over the non-empty cells in cell order.
RegionAssignment assign_regions(std::span<const CheckInEvent> events, int cells_per_axis);

struct UserSequence {
  std::string user_id;
  std::vector<CheckInEvent> train;
  std::vector<CheckInEvent> valid;
  std::vector<CheckInEvent> test;
};

struct DatasetSplit {
  /// Users in order of first appearance in the input.
  std::vector<UserSequence> users;
};

/// Per user: stable sort by timestamp, then floor(70%) train, floor(10%)
/// valid, remainder test. Users with fewer than 3 events go wholly to train.
DatasetSplit split_chronological(std::span<const CheckInEvent> events);

struct PoiMeta {
  double lat = 0.0;
  double lon = 0.0;
  int category = 0;
  int region = 0;
};

/// Interned entity tables. Users, POIs and categories are numbered in order
/// of first appearance in the event stream the catalog is built from.
struct Catalog {
  std::vector<std::string> users;
  std::vector<std::string> pois;
  std::vector<std::string> categories;
  std::vector<PoiMeta> poi_meta;
  int region_count = 0;
  RegionAssignment regions;

  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> poi_index;
  std::unordered_map<std::string, int> category_index;

  int user(const std::string& id) const;
  int poi(const std::string& id) const;
};

Catalog build_catalog(std::span<const CheckInEvent> events, const RegionAssignment& regions);

nlohmann::json catalog_to_json(const Catalog& c);
Catalog catalog_from_json(const nlohmann::json& j);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t pois = 0;
  std::size_t records = 0;
  std::size_t categories = 0;
  std::size_t regions = 0;
};

DatasetStats compute_stats(std::span<const CheckInEvent> events, const RegionAssignment& regions);
nlohmann::json stats_to_json(const DatasetStats& s);

}  // namespace kgrec
