#pragma once

// Synthetic fixtures: a city with neighbourhoods, categories and daily
// routines; a two-block knowledge graph; looping 4-POI routes.

#include "kgrec/ingest.hpp"
#include "kgrec/kg.hpp"

#include <cstdint>
#include <vector>

namespace kgrec {

struct CityOptions {
  int users = 60;
  /// Neighbourhoods laid out on a square grid of this side.
  int grid_side = 3;
  int pois = 240;
  int categories = 12;
  int days = 14;
  /// Check-in probability per daily time slot.
  double activity = 0.8;
  /// Probability that a slot visit goes to the user's routine POI.
  double regularity = 0.6;
  std::uint64_t seed = 7;
};

/// Check-ins in chronological order per user, users interleaved by day.
///
/// Each day has four slots (08h, 12h, 18h, 21h). Categories are split into
/// four slot groups. Every user has a home and a work neighbourhood and one
/// routine POI per slot; a non-routine visit picks a popularity-weighted POI
/// of the slot's category group in the slot's neighbourhood.
std::vector<CheckInEvent> synthetic_city(const CityOptions& opt);

struct TwoBlockOptions {
  int pois_per_block = 30;
  int users_per_block = 10;
  int categories = 4;
  double p_in = 0.8;
  double p_out = 0.02;
  double held_out_fraction = 0.1;
  std::uint64_t seed = 11;
};

struct TwoBlockKg {
  /// Visit edges minus the held-out ones, plus adjacency, category and region.
  KnowledgeGraph graph{std::array<int, kEntityTypes>{}};
  std::vector<Triple> held_out;
  /// Non-edges of the full visit graph, one per held-out positive.
  std::vector<Triple> negatives;
  std::vector<int> poi_block;
  std::vector<int> user_block;
};

/// Two spatially separate POI clusters, one region each; users visit their
/// own block with probability p_in per POI and the other with p_out.
TwoBlockKg two_block_kg(const TwoBlockOptions& opt);

struct RouteOptions {
  int users = 24;
  /// POI pool the routes draw from.
  int pois = 48;
  int events_per_user = 40;
  std::uint64_t seed = 5;
};

/// Every user cycles through a fixed route of 4 distinct POIs, one check-in
/// per hour.
std::vector<CheckInEvent> cyclic_routes(const RouteOptions& opt);

}  // namespace kgrec
