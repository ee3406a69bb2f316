#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "../support/small_world.hpp"

#include "kgrec/error.hpp"
#include "kgrec/eval.hpp"

#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

using namespace kgrec;
using namespace kgrec::testing;

namespace {

std::vector<int> random_ranking(int n, int len, std::mt19937_64& rng) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(len));
  return ids;
}

// Top-2 principal axes by power iteration with deflation.
nn::Matrix oracle_pca2(const nn::Matrix& x) {
  const nn::Matrix c = x.rowwise() - x.colwise().mean();
  nn::Matrix cov = c.transpose() * c;
  nn::Matrix axes(x.cols(), 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(x.cols());
    for (int it = 0; it < 5000; ++it) v = (cov * v).normalized();
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
    cov -= (v.transpose() * cov * v)(0, 0) * v * v.transpose();
  }
  return c * axes;
}

double oracle_silhouette(const nn::Matrix& x, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::map<int, std::pair<double, int>> by;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (j == i) continue;
      auto& [sum, n] = by[labels[static_cast<std::size_t>(j)]];
      sum += (x.row(i) - x.row(j)).norm();
      ++n;
    }
    const auto own = by[labels[static_cast<std::size_t>(i)]];
    if (own.second == 0) continue;
    const double a = own.first / own.second;
    double b = 1e300;
    for (const auto& [l, sn] : by) {
      if (l != labels[static_cast<std::size_t>(i)] && sn.second > 0) b = std::min(b, sn.first / sn.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("hit rate and ndcg closed forms") {
  const std::vector<int> r = {7, 3, 9, 1, 4};
  CHECK(hr_at_k(r, 7, 1) == 1.0);
  CHECK(ndcg_at_k(r, 7, 5) == 1.0);
  CHECK(ndcg_at_k(r, 9, 5) == 0.5);
  CHECK(hr_at_k(r, 9, 2) == 0.0);
  CHECK(ndcg_at_k(r, 9, 2) == 0.0);
  CHECK(hr_at_k(r, 42, 5) == 0.0);
  const std::vector<int> dup = {1, 2, 1};
  CHECK_THROWS_AS(hr_at_k(dup, 2, 3), ContractError);
}

TEST_CASE("metrics match the oracle and are monotone in k") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto ranked = random_ranking(30, 20, rng);
    const int truth = static_cast<int>(rng() % 30);
    double prev_hr = 0.0, prev_nd = 0.0;
    for (int k = 1; k <= 20; ++k) {
      CHECK(hr_at_k(ranked, truth, k) == oracle_hr(ranked, truth, k));
      CHECK(ndcg_at_k(ranked, truth, k) == oracle_ndcg(ranked, truth, k));
      CHECK(hr_at_k(ranked, truth, k) >= prev_hr);
      CHECK(ndcg_at_k(ranked, truth, k) >= prev_nd);
      prev_hr = hr_at_k(ranked, truth, k);
      prev_nd = ndcg_at_k(ranked, truth, k);
    }
  }
}

TEST_CASE("aggregate averages per task and reports empty subsets as absent") {
  std::vector<TokenSequence> ex(3);
  ex[0].task = Task::poi;
  ex[1].task = Task::poi;
  ex[2].task = Task::region;
  const std::vector<std::vector<int>> rankings = {{1, 2, 3}, {3, 2, 1}, {0, 1}};
  const std::vector<int> truths = {1, 1, 1};
  SubsetMasks masks{{true, false, false}, {false, false, false}};
  const std::vector<int> ks = {1, 3};
  const EvalReport r = aggregate(ex, rankings, truths, masks, ks);
  const MetricCell& all = r.tasks.at("poi").at("all");
  CHECK(all.count == 2);
  CHECK(all.hr.at(1) == 0.5);
  CHECK(all.ndcg.at(3) == doctest::Approx((1.0 + 0.5) / 2.0));
  CHECK(r.tasks.at("poi").at("cold_start").count == 1);
  const MetricCell& unseen = r.tasks.at("poi").at("unseen");
  CHECK(unseen.count == 0);
  CHECK(unseen.hr.empty());
  CHECK(r.to_json()["tasks"]["poi"]["unseen"]["hr"]["1"].is_null());
  CHECK(r.table().find(" - ") != std::string::npos);
  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());

  // Order of examples does not change corpus metrics.
  std::vector<TokenSequence> rev(ex.rbegin(), ex.rend());
  std::vector<std::vector<int>> rrev(rankings.rbegin(), rankings.rend());
  SubsetMasks mrev{{false, false, true}, {false, false, false}};
  const EvalReport r2 = aggregate(rev, rrev, truths, mrev, ks);
  CHECK(r2.tasks.at("poi").at("all").ndcg.at(3) == doctest::Approx(all.ndcg.at(3)));
}

TEST_CASE("subset masks equal a brute-force recount") {
  const auto w = small_world();
  const auto& test = w.corpus.test;
  const int pois = w.graph.count(EntityType::poi);
  const SubsetMasks m = subset_masks(test, w.timelines, pois);
  REQUIRE(m.cold_start.size() == test.size());
  int cold = 0, unseen = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::span<const UserTimeline> tl(w.timelines);
    CHECK(m.cold_start[i] == (oracle_train_visitors(tl, test[i].target_poi) < 5));
    CHECK(m.unseen[i] == !oracle_visited_in_train(tl, test[i].user.index, test[i].target_poi));
    cold += m.cold_start[i];
    unseen += m.unseen[i];
  }
  CHECK(cold > 0);
  CHECK(unseen > 0);
}

TEST_CASE("four distinct visitors are cold start, five are not") {
  std::vector<UserTimeline> tls;
  for (int u = 0; u < 5; ++u) {
    UserTimeline tl;
    tl.user = u;
    tl.pois = {u < 4 ? 0 : 1, 0, 1};
    tl.timestamps = {1, 2, 3};
    tl.n_train = 2;
    tls.push_back(tl);
  }
  tls[4].pois[1] = 1;
  std::vector<TokenSequence> ex(2);
  ex[0].user = {EntityType::user, 4};
  ex[0].target_poi = 0;
  ex[1].user = {EntityType::user, 0};
  ex[1].target_poi = 1;
  const auto m = subset_masks(ex, tls, 2);
  CHECK(m.cold_start[0]);  // visited by users 0..3
  CHECK(m.unseen[0]);
  CHECK(m.cold_start[1]);  // only user 4
  CHECK(m.unseen[1]);
  tls[4].pois[1] = 0;
  CHECK_FALSE(subset_masks(ex, tls, 2).cold_start[0]);
}

TEST_CASE("projection matches a power-iteration PCA") {
  std::mt19937_64 rng(9);
  nn::Matrix x = random_matrix(60, 5, rng);
  x.col(0) *= 4.0;
  x.col(3) *= 2.0;
  const std::vector<int> labels(60, 0);
  const Projection p = project_ids(x, labels);
  const nn::Matrix ref = oracle_pca2(x);
  CHECK((p.coords - ref).cwiseAbs().maxCoeff() < 1e-8);
  CHECK_FALSE(p.silhouette.has_value());
  // Pairwise distance ranking in the projected plane is preserved.
  for (int i = 0; i < 20; ++i) {
    const double d1 = (p.coords.row(i) - p.coords.row(i + 1)).norm();
    const double d2 = (p.coords.row(i) - p.coords.row(i + 2)).norm();
    const double r1 = (ref.row(i) - ref.row(i + 1)).norm();
    const double r2 = (ref.row(i) - ref.row(i + 2)).norm();
    CHECK((d1 < d2) == (r1 < r2));
  }
  nn::Matrix same = nn::Matrix::Zero(4, 3);
  same.row(1) << 1, 2, 3;
  same.row(2) = same.row(1);
  const Projection q = project_ids(same, std::vector<int>{0, 0, 1, 1});
  CHECK(q.coords.row(1) == q.coords.row(2));
  CHECK_THROWS_AS(project_ids(nn::Matrix::Zero(2, 3), std::vector<int>{0, 1}), DataError);
}

TEST_CASE("silhouette matches the oracle and separates two clusters") {
  std::mt19937_64 rng(4);
  nn::Matrix x = random_matrix(40, 3, rng);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  CHECK(mean_silhouette(x, labels) == doctest::Approx(oracle_silhouette(x, labels)).epsilon(1e-12));
  for (int i = 0; i < 40; ++i) {
    labels[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
    if (i >= 20) x(i, 0) += 10.0;
  }
  CHECK(mean_silhouette(x, labels) > 0.5);
  std::ostringstream out;
  const Projection p = project_ids(x, labels);
  std::vector<std::string> names(40, "r"), ids(40, "p");
  write_projection_tsv(out, p, names, ids);
  const std::string tsv = out.str();
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 41);
}
