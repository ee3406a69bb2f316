#include "kgrec/eval.hpp"

#include "kgrec/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_set>

namespace kgrec {

namespace {

/// 1-based rank of `truth` within the first k ids, 0 if absent.
int rank_within(std::span<const int> ranked, int truth, int k) {
  std::unordered_set<int> seen;
  int rank = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!seen.insert(ranked[i]).second) {
      throw ContractError("ranking contains id " + std::to_string(ranked[i]) + " twice");
    }
    if (rank == 0 && ranked[i] == truth && static_cast<int>(i) < k) rank = static_cast<int>(i) + 1;
  }
  return rank;
}

}  // namespace

double hr_at_k(std::span<const int> ranked, int truth, int k) {
  return rank_within(ranked, truth, k) > 0 ? 1.0 : 0.0;
}

double ndcg_at_k(std::span<const int> ranked, int truth, int k) {
  const int r = rank_within(ranked, truth, k);
  return r > 0 ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
}

SubsetMasks subset_masks(std::span<const TokenSequence> examples,
                         std::span<const UserTimeline> timelines, int poi_count,
                         int cold_start_threshold) {
  std::vector<std::set<int>> visitors(static_cast<std::size_t>(poi_count));
  std::map<int, std::set<int>> visited;
  for (const UserTimeline& tl : timelines) {
    auto& mine = visited[tl.user];
    for (int i = 0; i < tl.n_train; ++i) {
      const int p = tl.pois[static_cast<std::size_t>(i)];
      visitors.at(static_cast<std::size_t>(p)).insert(tl.user);
      mine.insert(p);
    }
  }
  SubsetMasks m;
  for (const TokenSequence& s : examples) {
    const auto p = static_cast<std::size_t>(s.target_poi);
    m.cold_start.push_back(static_cast<int>(visitors.at(p).size()) < cold_start_threshold);
    const auto it = visited.find(s.user.index);
    m.unseen.push_back(it == visited.end() || !it->second.contains(s.target_poi));
  }
  return m;
}

// ---- reports ----------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  nlohmann::json tj = nlohmann::json::object();
  for (const auto& [task, subsets] : tasks) {
    for (const auto& [name, cell] : subsets) {
      nlohmann::json c = {{"count", cell.count}};
      for (const char* metric : {"hr", "ndcg"}) {
        const auto& values = std::string(metric) == "hr" ? cell.hr : cell.ndcg;
        nlohmann::json vals = nlohmann::json::object();
        for (int k : ks) {
          const auto it = values.find(k);
          vals[std::to_string(k)] = it == values.end() ? nlohmann::json() : nlohmann::json(it->second);
        }
        c[metric] = vals;
      }
      tj[task][name] = c;
    }
  }
  return {{"ks", ks}, {"meta", meta}, {"tasks", tj}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.ks = j.at("ks").get<std::vector<int>>();
  r.meta = j.value("meta", nlohmann::json::object());
  for (const auto& [task, subsets] : j.at("tasks").items()) {
    for (const auto& [name, c] : subsets.items()) {
      MetricCell cell;
      cell.count = c.at("count").get<std::size_t>();
      for (int k : r.ks) {
        const auto key = std::to_string(k);
        if (!c.at("hr").at(key).is_null()) cell.hr[k] = c.at("hr").at(key).get<double>();
        if (!c.at("ndcg").at(key).is_null()) cell.ndcg[k] = c.at("ndcg").at(key).get<double>();
      }
      r.tasks[task][name] = cell;
    }
  }
  return r;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char buf[64];
  out << "task      subset      count";
  for (int k : ks) out << "    HR@" << k << "  NDCG@" << k;
  out << '\n';
  for (const auto& [task, subsets] : tasks) {
    for (std::string_view sub : kSubsets) {
      const auto it = subsets.find(std::string(sub));
      if (it == subsets.end()) continue;
      const MetricCell& c = it->second;
      std::snprintf(buf, sizeof buf, "%-9s %-11s %6zu", task.c_str(), std::string(sub).c_str(), c.count);
      out << buf;
      for (int k : ks) {
        if (c.count == 0) {
          std::snprintf(buf, sizeof buf, " %8s %8s", "-", "-");
        } else {
          std::snprintf(buf, sizeof buf, " %8.4f %8.4f", c.hr.at(k), c.ndcg.at(k));
        }
        out << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

EvalReport aggregate(std::span<const TokenSequence> examples,
                     std::span<const std::vector<int>> rankings, std::span<const int> truths,
                     const SubsetMasks& masks, std::span<const int> ks) {
  if (rankings.size() != examples.size() || truths.size() != examples.size() ||
      masks.cold_start.size() != examples.size() || masks.unseen.size() != examples.size()) {
    throw ContractError("aggregate: examples, rankings, truths and masks differ in length");
  }
  EvalReport r;
  r.ks.assign(ks.begin(), ks.end());
  struct Sums {
    std::size_t n = 0;
    std::map<int, double> hr, ndcg;
  };
  std::map<std::string, std::map<std::string, Sums>> sums;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::string task(to_string(examples[i].task));
    for (std::string_view sub : kSubsets) sums[task][std::string(sub)];
    std::vector<std::string> in = {"all"};
    if (masks.cold_start[i]) in.emplace_back("cold_start");
    if (masks.unseen[i]) in.emplace_back("unseen");
    for (const std::string& sub : in) {
      Sums& s = sums[task][sub];
      ++s.n;
      for (int k : ks) {
        s.hr[k] += hr_at_k(rankings[i], truths[i], k);
        s.ndcg[k] += ndcg_at_k(rankings[i], truths[i], k);
      }
    }
  }
  for (const auto& [task, subs] : sums) {
    for (const auto& [sub, s] : subs) {
      MetricCell c;
      c.count = s.n;
      if (s.n > 0) {
        for (int k : ks) {
          c.hr[k] = s.hr.at(k) / static_cast<double>(s.n);
          c.ndcg[k] = s.ndcg.at(k) / static_cast<double>(s.n);
        }
      }
      r.tasks[task][sub] = c;
    }
  }
  return r;
}

std::array<DecodingTrie, kEntityTypes> build_tries(const EntityCodec& codec) {
  std::array<DecodingTrie, kEntityTypes> out;
  for (EntityType t : kAllEntityTypes) {
    if (!codec.all(t).empty()) out[static_cast<std::size_t>(t)] = DecodingTrie(codec.all(t));
  }
  return out;
}

EvalOutput run_eval(const TransformerLm& model, std::span<const TokenSequence> examples,
                    const EntityCodec& codec, const std::array<DecodingTrie, kEntityTypes>& tries,
                    const SubsetMasks& masks, const EvalOptions& opt) {
  if (opt.ks.empty()) throw ConfigError("eval.ks must not be empty");
  const int kmax = *std::max_element(opt.ks.begin(), opt.ks.end());
  EvalOutput out;
  std::vector<int> truths;
  for (const TokenSequence& s : examples) {
    const EntityType type = target_type(s.task);
    const DecodingTrie& trie = tries[static_cast<std::size_t>(type)];
    const std::span<const int> id(s.target_tokens.data(), s.target_tokens.size() - 1);
    const auto truth = codec.decode(id);
    if (!truth || truth->type != type) throw DataError("test example with an unknown target id");
    truths.push_back(truth->index);
    const Generation g = generate_topk(model, s.input_tokens, trie, kmax, std::max(opt.beam_width, kmax));
    std::vector<int> ranked;
    for (const auto& c : g.ranked) ranked.push_back(c.entity);
    out.rankings.push_back(std::move(ranked));
  }
  out.report = aggregate(examples, out.rankings, truths, masks, opt.ks);
  return out;
}

nlohmann::json ablation_json(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             const std::string& split_hash) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& [label, rep] : rows) variants.push_back({{"variant", label}, {"report", rep.to_json()}});
  return {{"split_sha256", split_hash}, {"variants", variants}};
}

std::string ablation_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s\n", "variant", "HR@5", "NDCG@5", "HR@10",
                "NDCG@10");
  out << buf;
  for (const auto& [label, rep] : rows) {
    const auto& c = rep.tasks.at("poi").at("all");
    auto get = [&](const std::map<int, double>& m, int k) {
      const auto it = m.find(k);
      return it == m.end() ? std::nan("") : it->second;
    };
    std::snprintf(buf, sizeof buf, "%-12s %8.4f %8.4f %8.4f %8.4f\n", label.c_str(), get(c.hr, 5),
                  get(c.ndcg, 5), get(c.hr, 10), get(c.ndcg, 10));
    out << buf;
  }
  return out.str();
}

// ---- projection -------------------------------------------------------------

double mean_silhouette(const nn::Matrix& x, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) return std::nan("");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    bool alone = false;
    for (const auto& [label, members] : groups) {
      double s = 0.0;
      for (std::size_t j : members) s += (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
      if (label == labels[i]) {
        alone = members.size() == 1;
        if (!alone) a = s / static_cast<double>(members.size() - 1);
      } else {
        b = std::min(b, s / static_cast<double>(members.size()));
      }
    }
    if (alone) continue;  // silhouette of a singleton is 0
    const double d = std::max(a, b);
    total += d > 0.0 ? (b - a) / d : 0.0;
  }
  return total / static_cast<double>(n);
}

Projection project_ids(const nn::Matrix& vectors, std::span<const int> labels) {
  if (vectors.rows() < 3) throw DataError("projection needs at least 3 POIs");
  if (static_cast<Eigen::Index>(labels.size()) != vectors.rows()) {
    throw ContractError("project_ids: one label per vector required");
  }
  const Eigen::RowVectorXd mu = vectors.colwise().mean();
  const nn::Matrix c = vectors.rowwise() - mu;
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(vectors.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis(d, 2);
  for (int k = 0; k < 2; ++k) {
    // Eigenvalues come in ascending order.
    Eigen::VectorXd v = d - 1 - k >= 0 ? Eigen::VectorXd(es.eigenvectors().col(d - 1 - k))
                                       : Eigen::VectorXd::Zero(d);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(k) = v;
  }
  Projection p;
  p.coords = c * basis;
  const double s = mean_silhouette(vectors, labels);
  if (!std::isnan(s)) p.silhouette = s;
  return p;
}

void write_projection_tsv(std::ostream& out, const Projection& p,
                          std::span<const std::string> labels,
                          std::span<const std::string> poi_ids) {
  out << "x\ty\tlabel\tpoi_id\n";
  char buf[64];
  for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g\t%.9g", p.coords(i, 0), p.coords(i, 1));
    out << buf << '\t' << labels[static_cast<std::size_t>(i)] << '\t'
        << poi_ids[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace kgrec
