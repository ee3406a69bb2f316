#include "kgrec/synth.hpp"

#include "kgrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

namespace kgrec {

namespace {
constexpr std::int64_t kStartMonday = 1672617600;  // 2023-01-02 00:00 UTC
constexpr double kKmPerDegLat = 111.195;
constexpr std::array<int, 4> kSlotHours = {8, 12, 18, 21};

struct Point {
  double lat;
  double lon;
};

Point offset_km(Point c, double dn_km, double de_km) {
  const double lat = c.lat + dn_km / kKmPerDegLat;
  const double lon = c.lon + de_km / (kKmPerDegLat * std::cos(c.lat * std::numbers::pi / 180.0));
  return {lat, lon};
}

std::string id(const char* prefix, int i) { return prefix + std::to_string(i); }
}  // namespace

std::vector<CheckInEvent> synthetic_city(const CityOptions& opt) {
  if (opt.users < 1 || opt.grid_side < 1 || opt.categories < 4 || opt.days < 1) {
    throw ConfigError("synthetic city needs users, grid_side, days >= 1 and categories >= 4");
  }
  const int hoods = opt.grid_side * opt.grid_side;
  if (opt.pois < hoods * opt.categories) {
    throw ConfigError("synthetic city needs at least one POI per neighbourhood and category");
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> jitter(0.0, 0.25);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Point origin{40.70, -74.00};

  std::vector<Point> centers;
  for (int r = 0; r < opt.grid_side; ++r) {
    for (int c = 0; c < opt.grid_side; ++c) centers.push_back(offset_km(origin, 3.0 * r, 3.0 * c));
  }
  struct Poi {
    Point at;
    int hood;
    int category;
    double weight;
  };
  std::vector<Poi> pois;
  // One POI per (neighbourhood, category) first so every slot group is
  // available everywhere, the rest uniform.
  for (int i = 0; i < opt.pois; ++i) {
    const int hood = i < hoods * opt.categories ? i / opt.categories
                                                : static_cast<int>(rng() % static_cast<std::uint64_t>(hoods));
    const int cat = i < hoods * opt.categories ? i % opt.categories
                                               : static_cast<int>(rng() % static_cast<std::uint64_t>(opt.categories));
    const Point at = offset_km(centers[static_cast<std::size_t>(hood)], jitter(rng), jitter(rng));
    // Zipf-like popularity.
    pois.push_back({at, hood, cat, 1.0 / (1.0 + static_cast<double>(rng() % 10))});
  }
  // candidates[hood][slot] = POIs of the slot's category group.
  std::vector<std::array<std::vector<int>, 4>> candidates(static_cast<std::size_t>(hoods));
  for (int i = 0; i < opt.pois; ++i) {
    const Poi& p = pois[static_cast<std::size_t>(i)];
    candidates[static_cast<std::size_t>(p.hood)][static_cast<std::size_t>(p.category % 4)].push_back(i);
  }
  auto pick = [&](int hood, int slot) {
    const auto& c = candidates[static_cast<std::size_t>(hood)][static_cast<std::size_t>(slot)];
    std::vector<double> w;
    for (int i : c) w.push_back(pois[static_cast<std::size_t>(i)].weight);
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    return c[d(rng)];
  };

  struct User {
    std::array<int, 4> slot_hood;
    std::array<int, 4> routine;
  };
  std::vector<User> users;
  for (int u = 0; u < opt.users; ++u) {
    const int home = static_cast<int>(rng() % static_cast<std::uint64_t>(hoods));
    const int work = static_cast<int>(rng() % static_cast<std::uint64_t>(hoods));
    User us;
    us.slot_hood = {home, work, work, home};
    for (int s = 0; s < 4; ++s) us.routine[static_cast<std::size_t>(s)] = pick(us.slot_hood[static_cast<std::size_t>(s)], s);
    users.push_back(us);
  }

  std::vector<CheckInEvent> out;
  for (int day = 0; day < opt.days; ++day) {
    for (int u = 0; u < opt.users; ++u) {
      const User& us = users[static_cast<std::size_t>(u)];
      for (int s = 0; s < 4; ++s) {
        if (unit(rng) >= opt.activity) continue;
        const int p = unit(rng) < opt.regularity
                          ? us.routine[static_cast<std::size_t>(s)]
                          : pick(us.slot_hood[static_cast<std::size_t>(s)], s);
        const Poi& poi = pois[static_cast<std::size_t>(p)];
        const std::int64_t ts = kStartMonday + static_cast<std::int64_t>(day) * 86400 +
                                kSlotHours[static_cast<std::size_t>(s)] * 3600 +
                                static_cast<std::int64_t>(rng() % 1800);
        out.push_back({id("u", u), id("p", p), poi.at.lat, poi.at.lon, id("c", poi.category), ts});
      }
    }
  }
  return out;
}

TwoBlockKg two_block_kg(const TwoBlockOptions& opt) {
  const int np = 2 * opt.pois_per_block;
  const int nu = 2 * opt.users_per_block;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.08);
  TwoBlockKg fx;
  fx.graph = KnowledgeGraph({nu, np, opt.categories, 2});
  std::vector<PoiMeta> meta;
  for (int p = 0; p < np; ++p) {
    const int b = p / opt.pois_per_block;
    fx.poi_block.push_back(b);
    const Point at = offset_km({40.0 + 0.2 * b, -74.0}, jitter(rng), jitter(rng));
    const int cat = static_cast<int>(rng() % static_cast<std::uint64_t>(opt.categories));
    meta.push_back({at.lat, at.lon, cat, b});
  }
  std::vector<Triple> visits;
  std::set<std::pair<int, int>> edge;
  for (int u = 0; u < nu; ++u) {
    const int b = u / opt.users_per_block;
    fx.user_block.push_back(b);
    for (int p = 0; p < np; ++p) {
      if (unit(rng) < (fx.poi_block[static_cast<std::size_t>(p)] == b ? opt.p_in : opt.p_out)) {
        visits.push_back({{EntityType::user, u}, Relation::visit, {EntityType::poi, p}});
        edge.insert({u, p});
      }
    }
  }
  std::shuffle(visits.begin(), visits.end(), rng);
  const auto n_hold = static_cast<std::size_t>(opt.held_out_fraction * static_cast<double>(visits.size()));
  fx.held_out.assign(visits.begin(), visits.begin() + static_cast<std::ptrdiff_t>(n_hold));
  for (std::size_t i = n_hold; i < visits.size(); ++i) fx.graph.add(visits[i]);
  for (const Triple& pos : fx.held_out) {
    const int u = pos.head.index;
    int p = 0;
    do {
      p = static_cast<int>(rng() % static_cast<std::uint64_t>(np));
    } while (edge.contains({u, p}));
    fx.negatives.push_back({{EntityType::user, u}, Relation::visit, {EntityType::poi, p}});
  }
  for (const auto& [a, b] : adjacent_pairs(meta, 0.2)) {
    fx.graph.add({{EntityType::poi, a}, Relation::adjacent, {EntityType::poi, b}});
    fx.graph.add({{EntityType::poi, b}, Relation::adjacent, {EntityType::poi, a}});
  }
  for (int p = 0; p < np; ++p) {
    const PoiMeta& m = meta[static_cast<std::size_t>(p)];
    fx.graph.add({{EntityType::poi, p}, Relation::categorized, {EntityType::category, m.category}});
    fx.graph.add({{EntityType::poi, p}, Relation::located, {EntityType::region, m.region}});
  }
  fx.graph.finalize();
  return fx;
}

std::vector<CheckInEvent> cyclic_routes(const RouteOptions& opt) {
  if (opt.pois < 4) throw ConfigError("cyclic routes need at least 4 POIs");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Point origin{40.70, -74.00};
  std::vector<Point> at;
  for (int p = 0; p < opt.pois; ++p) at.push_back(offset_km(origin, 6.0 * unit(rng), 6.0 * unit(rng)));
  std::vector<int> pool(static_cast<std::size_t>(opt.pois));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<CheckInEvent> out;
  for (int u = 0; u < opt.users; ++u) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::array<int, 4> route = {pool[0], pool[1], pool[2], pool[3]};
    for (int i = 0; i < opt.events_per_user; ++i) {
      const int p = route[static_cast<std::size_t>(i % 4)];
      const Point& pt = at[static_cast<std::size_t>(p)];
      out.push_back({id("u", u), id("p", p), pt.lat, pt.lon, id("c", p % 5),
                     kStartMonday + static_cast<std::int64_t>(i) * 3600});
    }
  }
  return out;
}

}  // namespace kgrec
