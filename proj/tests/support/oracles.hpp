#pragma once

// Independent brute-force reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace kgrec::testing {

inline double oracle_haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double rad = std::numbers::pi / 180.0;
  const double s1 = std::sin((lat2 - lat1) * rad / 2.0);
  const double s2 = std::sin((lon2 - lon1) * rad / 2.0);
  const double a = s1 * s1 + std::cos(lat1 * rad) * std::cos(lat2 * rad) * s2 * s2;
  return 2.0 * 6371.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Every pair (i < j) closer than d_km, by exhaustive scan.
template <typename Point>
std::vector<std::pair<int, int>> oracle_adjacent_pairs(std::span<const Point> pts, double d_km) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      if (oracle_haversine_km(pts[i].lat, pts[i].lon, pts[j].lat, pts[j].lon) < d_km) {
        out.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  return out;
}

/// 1 if the truth is in the first k entries.
inline double oracle_hr(const std::vector<int>& ranked, int truth, int k) {
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    if (ranked[static_cast<std::size_t>(i)] == truth) return 1.0;
  }
  return 0.0;
}

/// DCG of a single relevant item over an ideal DCG of 1.
inline double oracle_ndcg(const std::vector<int>& ranked, int truth, int k) {
  double dcg = 0.0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    const double gain = ranked[static_cast<std::size_t>(i)] == truth ? 1.0 : 0.0;
    dcg += gain / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg;
}

/// Distinct train visitors of `poi`, recounted by scanning every timeline.
template <typename Timeline>
int oracle_train_visitors(std::span<const Timeline> timelines, int poi) {
  std::vector<int> users;
  for (const auto& tl : timelines) {
    for (int i = 0; i < tl.n_train; ++i) {
      if (tl.pois[static_cast<std::size_t>(i)] == poi) {
        if (std::find(users.begin(), users.end(), tl.user) == users.end()) users.push_back(tl.user);
      }
    }
  }
  return static_cast<int>(users.size());
}

/// True if `user` visited `poi` in its train prefix.
template <typename Timeline>
bool oracle_visited_in_train(std::span<const Timeline> timelines, int user, int poi) {
  for (const auto& tl : timelines) {
    if (tl.user != user) continue;
    for (int i = 0; i < tl.n_train; ++i) {
      if (tl.pois[static_cast<std::size_t>(i)] == poi) return true;
    }
  }
  return false;
}

}  // namespace kgrec::testing
