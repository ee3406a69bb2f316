#include "kgrec/tokenizer.hpp"

#include "kgrec/error.hpp"
#include "kgrec/optim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace kgrec {

CodebookSet CodebookSet::init(EntityType type, std::span<const int> sizes, int dim, nn::Rng& rng) {
  CodebookSet set;
  set.type = type;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (sizes[l] < 1) throw ConfigError("codebook sizes must be >= 1");
    set.books.push_back(nn::make_uniform(
        "codebook/" + std::string(to_string(type)) + "/level" + std::to_string(l), sizes[l], dim,
        dim, rng));
  }
  return set;
}

int nearest_code(const Eigen::Ref<const Eigen::RowVectorXd>& z, const nn::Matrix& book) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < book.rows(); ++k) {
    const double d = (book.row(k) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

QuantizeResult quantize(const Eigen::RowVectorXd& h, const CodebookSet& books) {
  if (books.levels() > 0 && h.size() != books.dim()) {
    throw ContractError("quantize: vector of size " + std::to_string(h.size()) +
                        " for codebooks of dim " + std::to_string(books.dim()));
  }
  QuantizeResult r;
  r.quantized = Eigen::RowVectorXd::Zero(h.size());
  Eigen::RowVectorXd z = h;
  for (const nn::Parameter& book : books.books) {
    r.residuals.push_back(z);
    const int n = nearest_code(z, book.value);
    r.indices.push_back(n);
    r.quantized += book.value.row(n);
    z -= book.value.row(n);
  }
  r.final_residual = z;
  return r;
}

std::vector<std::vector<int>> quantize_rows(const nn::Matrix& h, const CodebookSet& books) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(books.levels()));
  nn::Matrix z = h;
  for (int l = 0; l < books.levels(); ++l) {
    const nn::Matrix& book = books.books[static_cast<std::size_t>(l)].value;
    auto& idx = out[static_cast<std::size_t>(l)];
    idx.resize(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      idx[static_cast<std::size_t>(r)] = nearest_code(z.row(r), book);
      z.row(r) -= book.row(idx[static_cast<std::size_t>(r)]);
    }
  }
  return out;
}

ReconstructionParams ReconstructionParams::init(int dim, nn::Rng& rng) {
  ReconstructionParams p;
  for (Relation r : kAllRelations) {
    p.weights[static_cast<std::size_t>(r)] =
        nn::make_uniform("recon/" + std::string(to_string(r)), dim, dim, dim, rng);
  }
  return p;
}

std::vector<nn::Parameter*> ReconstructionParams::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& w : weights) out.push_back(&w);
  return out;
}

double score_triple(const Eigen::RowVectorXd& head, const Eigen::RowVectorXd& tail,
                    const nn::Matrix& weight) {
  const double logit = (head * weight).dot(tail);
  return 1.0 / (1.0 + std::exp(-logit));
}

std::vector<LabeledTriple> sample_kg_batch(const KnowledgeGraph& g,
                                           std::span<const Triple> positives,
                                           int negatives_per_positive, nn::Rng& rng) {
  if (negatives_per_positive < 1) throw ConfigError("negatives_per_positive must be >= 1");
  std::vector<LabeledTriple> out;
  out.reserve(positives.size() * static_cast<std::size_t>(1 + negatives_per_positive));
  for (const Triple& t : positives) {
    out.push_back({t, 1.0});
    const int n = g.count(t.tail.type);
    std::uniform_int_distribution<int> pick(0, std::max(n - 1, 0));
    for (int k = 0; k < negatives_per_positive; ++k) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        Triple neg = t;
        neg.tail.index = pick(rng);
        if (neg.relation == Relation::adjacent && neg.tail == neg.head) continue;
        if (g.contains(neg)) continue;
        out.push_back({neg, 0.0});
        break;
      }
    }
  }
  return out;
}

nn::Var loss_kg(const KnowledgeGraph& g, nn::Var hhat, std::span<const LabeledTriple> batch,
                std::span<const nn::Var> relation_weights) {
  if (relation_weights.size() != kRelations) {
    throw ContractError("loss_kg: expected one weight per relation");
  }
  if (batch.empty()) throw ContractError("loss_kg: empty batch");
  std::vector<nn::Var> probs;
  std::vector<double> labels;
  labels.reserve(batch.size());
  for (Relation r : kAllRelations) {
    std::vector<int> heads;
    std::vector<int> tails;
    for (const LabeledTriple& lt : batch) {
      if (lt.triple.relation != r) continue;
      heads.push_back(g.node_id(lt.triple.head));
      tails.push_back(g.node_id(lt.triple.tail));
      labels.push_back(lt.label);
    }
    if (heads.empty()) continue;
    nn::Var h = nn::embedding_lookup(hhat, heads);
    nn::Var t = nn::embedding_lookup(hhat, tails);
    nn::Var logits =
        nn::row_sum(nn::mul(nn::matmul(h, relation_weights[static_cast<std::size_t>(r)]), t));
    probs.push_back(nn::sigmoid(logits));
  }
  return nn::binary_cross_entropy(nn::concat_rows(probs), labels);
}

nn::Var loss_rq(std::span<const nn::Var> residuals, std::span<const nn::Var> codes, double beta) {
  if (residuals.size() != codes.size() || residuals.empty()) {
    throw ContractError("loss_rq: need one code block per residual block");
  }
  nn::Var total;
  for (std::size_t l = 0; l < residuals.size(); ++l) {
    const nn::Var& z = residuals[l];
    const nn::Var& c = codes[l];
    nn::Var codebook_term = nn::squared_distance(nn::stop_gradient(z), c);
    nn::Var commit_term = nn::squared_distance(nn::stop_gradient(c), z);
    nn::Var level = nn::mean(nn::add(codebook_term, nn::scale(commit_term, beta)));
    total = total.valid() ? nn::add(total, level) : level;
  }
  return total;
}

TokenizerModel TokenizerModel::init(const KnowledgeGraph& g, const TokenizerConfig& cfg) {
  if (cfg.levels < 1) throw ConfigError("tokenizer.levels must be >= 1");
  nn::Rng rng(cfg.seed);
  TokenizerModel m;
  m.rgcn = RgcnParams::init(g.node_count(), cfg.rgcn, rng);
  for (EntityType t : kAllEntityTypes) {
    std::vector<int> sizes(static_cast<std::size_t>(cfg.levels),
                           cfg.codebook_size[static_cast<std::size_t>(t)]);
    m.codebooks[static_cast<std::size_t>(t)] = CodebookSet::init(t, sizes, cfg.rgcn.dim, rng);
  }
  m.recon = ReconstructionParams::init(cfg.rgcn.dim, rng);
  return m;
}

std::vector<nn::Parameter*> TokenizerModel::parameters() {
  std::vector<nn::Parameter*> out = rgcn.parameters();
  for (auto& set : codebooks) {
    for (auto& b : set.books) out.push_back(&b);
  }
  for (nn::Parameter* p : recon.parameters()) out.push_back(p);
  return out;
}

namespace {

/// k-means++ seeding followed by Lloyd iterations. With fewer distinct points
/// than centers, surplus centers are jittered copies of random points.
nn::Matrix kmeans(const nn::Matrix& pts, int k, int iters, nn::Rng& rng) {
  const Eigen::Index n = pts.rows();
  nn::Matrix centers(k, pts.cols());
  double spread = std::sqrt((pts.rowwise() - pts.colwise().mean()).squaredNorm() /
                            static_cast<double>(std::max<Eigen::Index>(n * pts.cols(), 1)));
  if (!(spread > 0.0)) spread = 1.0;
  std::normal_distribution<double> jitter(0.0, 1e-3 * spread);
  std::uniform_int_distribution<Eigen::Index> any(0, n - 1);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 0; c < k; ++c) {
    double total = 0.0;
    if (c > 0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)],
                                                   (pts.row(i) - centers.row(c - 1)).squaredNorm());
        total += d2[static_cast<std::size_t>(i)];
      }
    }
    if (c > 0 && total > 0.0) {
      std::discrete_distribution<Eigen::Index> pick(d2.begin(), d2.end());
      centers.row(c) = pts.row(pick(rng));
    } else {
      centers.row(c) = pts.row(any(rng));
      if (c > 0) {
        for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) += jitter(rng);
      }
    }
  }
  for (int it = 0; it < iters; ++it) {
    nn::Matrix sums = nn::Matrix::Zero(k, pts.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_code(pts.row(i), centers);
      sums.row(c) += pts.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  return centers;
}

void kmeans_init(TokenizerModel& m, const nn::Matrix& h, const KnowledgeGraph& g, int iters,
                 nn::Rng& rng) {
  for (EntityType t : kAllEntityTypes) {
    const int n = g.count(t);
    if (n == 0) continue;
    CodebookSet& set = m.codebooks[static_cast<std::size_t>(t)];
    nn::Matrix z = h.middleRows(g.offset(t), n);
    for (auto& book : set.books) {
      book.value = kmeans(z, static_cast<int>(book.value.rows()), iters, rng);
      for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) -= book.value.row(nearest_code(z.row(r), book.value));
    }
  }
}

struct Snapshot {
  std::vector<nn::Matrix> values;
  explicit Snapshot(const std::vector<nn::Parameter*>& ps) {
    for (const nn::Parameter* p : ps) values.push_back(p->value);
  }
  void restore(const std::vector<nn::Parameter*>& ps) const {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i]->value = values[i];
      ps[i]->zero_grad();
    }
  }
};

}  // namespace

TokenizerTrainResult train_tokenizer(const KnowledgeGraph& g, const TokenizerConfig& cfg) {
  if (g.triples().empty()) throw DataError("train_tokenizer: graph has no triples");
  if (cfg.epochs < 1 || cfg.triples_per_step < 1) {
    throw ConfigError("tokenizer.epochs and tokenizer.triples_per_step must be >= 1");
  }
  TokenizerTrainResult result{TokenizerModel::init(g, cfg), {}, std::nullopt};
  TokenizerModel& model = result.model;
  nn::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const RelationalAdjacency adj(g);
  const std::vector<nn::Parameter*> params = model.parameters();
  nn::Adam opt(params, nn::AdamConfig{cfg.lr});
  std::vector<Triple> order = g.triples();
  const std::size_t steps = (order.size() + static_cast<std::size_t>(cfg.triples_per_step) - 1) /
                            static_cast<std::size_t>(cfg.triples_per_step);
  Snapshot last_good(params);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch == 1) kmeans_init(model, encode_values(adj, model.rgcn), g, cfg.kmeans_iters, rng);
    std::shuffle(order.begin(), order.end(), rng);
    std::array<std::vector<std::vector<long>>, kEntityTypes> usage;
    std::array<std::vector<nn::Matrix>, kEntityTypes> last_residuals;
    for (EntityType t : kAllEntityTypes) {
      const CodebookSet& set = model.codebooks[static_cast<std::size_t>(t)];
      for (const auto& b : set.books) {
        usage[static_cast<std::size_t>(t)].emplace_back(static_cast<std::size_t>(b.value.rows()), 0);
      }
      last_residuals[static_cast<std::size_t>(t)].resize(set.books.size());
    }
    double sum_kg = 0.0;
    double sum_rq = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      nn::Tape tape;
      nn::Var h = encode(tape, adj, model.rgcn);
      std::vector<nn::Var> st_parts;
      std::vector<std::vector<nn::Var>> z_levels(static_cast<std::size_t>(cfg.levels));
      std::vector<std::vector<nn::Var>> c_levels(static_cast<std::size_t>(cfg.levels));
      for (EntityType t : kAllEntityTypes) {
        const int n = g.count(t);
        if (n == 0) continue;
        const auto ti = static_cast<std::size_t>(t);
        CodebookSet& set = model.codebooks[ti];
        nn::Var ht = nn::slice_rows(h, g.offset(t), n);
        const auto idx = quantize_rows(ht.value(), set);
        nn::Var z = ht;
        nn::Matrix qhat = nn::Matrix::Zero(n, cfg.rgcn.dim);
        for (int l = 0; l < cfg.levels; ++l) {
          const auto li = static_cast<std::size_t>(l);
          nn::Var codes = nn::embedding_lookup(tape.parameter(set.books[li]), idx[li]);
          for (int k : idx[li]) ++usage[ti][li][static_cast<std::size_t>(k)];
          last_residuals[ti][li] = z.value();
          z_levels[li].push_back(z);
          c_levels[li].push_back(codes);
          qhat += codes.value();
          z = nn::sub(z, nn::stop_gradient(codes));
        }
        // Straight-through: forward value is the quantized vector, gradient
        // flows to the encoder output unchanged.
        st_parts.push_back(nn::add(ht, tape.constant(qhat - ht.value())));
      }
      nn::Var hhat = nn::concat_rows(st_parts);
      std::vector<nn::Var> zs;
      std::vector<nn::Var> cs;
      for (int l = 0; l < cfg.levels; ++l) {
        zs.push_back(nn::concat_rows(z_levels[static_cast<std::size_t>(l)]));
        cs.push_back(nn::concat_rows(c_levels[static_cast<std::size_t>(l)]));
      }
      const std::size_t begin = s * static_cast<std::size_t>(cfg.triples_per_step);
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.triples_per_step));
      const auto batch = sample_kg_batch(
          g, std::span<const Triple>(order).subspan(begin, end - begin), cfg.negatives_per_positive,
          rng);
      std::vector<nn::Var> rel_w;
      for (auto& w : model.recon.weights) rel_w.push_back(tape.parameter(w));
      nn::Var lkg = loss_kg(g, hhat, batch, rel_w);
      nn::Var lrq = loss_rq(zs, cs, cfg.beta);
      nn::Var total = nn::add(lkg, lrq);
      if (!std::isfinite(total.scalar())) {
        last_good.restore(params);
        result.abort_reason = "non-finite tokenizer loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(s);
        spdlog::error("{}", *result.abort_reason);
        return result;
      }
      sum_kg += lkg.scalar();
      sum_rq += lrq.scalar();
      tape.backward(total);
      opt.step();
    }

    int reseeded = 0;
    for (EntityType t : kAllEntityTypes) {
      const auto ti = static_cast<std::size_t>(t);
      if (g.count(t) == 0) continue;
      CodebookSet& set = model.codebooks[ti];
      for (std::size_t l = 0; l < set.books.size(); ++l) {
        const nn::Matrix& res = last_residuals[ti][l];
        std::uniform_int_distribution<Eigen::Index> pick(0, res.rows() - 1);
        for (std::size_t k = 0; k < usage[ti][l].size(); ++k) {
          if (usage[ti][l][k] > 0) continue;
          set.books[l].value.row(static_cast<Eigen::Index>(k)) = res.row(pick(rng));
          ++reseeded;
        }
      }
    }
    const EpochLog entry{epoch, sum_kg / static_cast<double>(steps),
                         sum_rq / static_cast<double>(steps), reseeded};
    result.log.push_back(entry);
    spdlog::info("tokenizer epoch {}: L_KG {:.5f}  L_RQ {:.5f}  reseeded {}", epoch, entry.loss_kg,
                 entry.loss_rq, reseeded);
    last_good = Snapshot(params);
  }
  return result;
}

nn::Matrix quantized_vectors(const nn::Matrix& encodings, const KnowledgeGraph& g,
                             const std::array<CodebookSet, kEntityTypes>& books) {
  nn::Matrix out = nn::Matrix::Zero(encodings.rows(), encodings.cols());
  for (int node = 0; node < g.node_count(); ++node) {
    const EntityRef e = g.ref_of(node);
    out.row(node) = quantize(encodings.row(node), books[static_cast<std::size_t>(e.type)]).quantized;
  }
  return out;
}

StruIdTable assign_struids(const nn::Matrix& encodings, const KnowledgeGraph& g,
                           const std::array<CodebookSet, kEntityTypes>& books) {
  StruIdTable table;
  for (EntityType t : kAllEntityTypes) {
    const auto ti = static_cast<std::size_t>(t);
    const int n = g.count(t);
    auto& ids = table.ids[ti];
    ids.reserve(static_cast<std::size_t>(n));
    std::map<std::vector<int>, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) {
      StruId id{t, quantize(encodings.row(g.offset(t) + i), books[ti]).indices, std::nullopt};
      groups[id.indices].push_back(i);
      ids.push_back(std::move(id));
    }
    for (const auto& [key, members] : groups) {
      if (members.size() < 2) continue;
      for (std::size_t k = 0; k < members.size(); ++k) {
        ids[static_cast<std::size_t>(members[k])].disambiguator = static_cast<int>(k);
      }
    }
  }
  return table;
}

void write_struid_tsv(std::ostream& out, const StruIdTable& table,
                      const std::array<std::vector<std::string>, kEntityTypes>& raw_ids) {
  for (EntityType t : kAllEntityTypes) {
    const auto ti = static_cast<std::size_t>(t);
    for (std::size_t i = 0; i < table.ids[ti].size(); ++i) {
      const StruId& id = table.ids[ti][i];
      out << to_string(t) << '\t' << raw_ids[ti].at(i);
      for (int n : id.indices) out << '\t' << n;
      out << '\t';
      if (id.disambiguator) out << *id.disambiguator;
      out << '\n';
    }
  }
}

StruIdTable read_struid_tsv(std::istream& in,
                            const std::array<std::vector<std::string>, kEntityTypes>& raw_ids) {
  StruIdTable table;
  std::array<std::unordered_map<std::string, int>, kEntityTypes> index;
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    for (std::size_t i = 0; i < raw_ids[t].size(); ++i) index[t].emplace(raw_ids[t][i], static_cast<int>(i));
    table.ids[t].resize(raw_ids[t].size());
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (!line.empty() && line.back() == '\t') cols.emplace_back();
    if (cols.size() < 4) throw DataError("struid table line " + std::to_string(lineno) + " is short");
    const EntityType t = entity_type_from(cols[0]);
    const auto ti = static_cast<std::size_t>(t);
    auto it = index[ti].find(cols[1]);
    if (it == index[ti].end()) throw DataError("struid table: unknown " + cols[0] + " '" + cols[1] + "'");
    StruId id{t, {}, std::nullopt};
    for (std::size_t c = 2; c + 1 < cols.size(); ++c) id.indices.push_back(std::stoi(cols[c]));
    if (!cols.back().empty()) id.disambiguator = std::stoi(cols.back());
    table.ids[ti][static_cast<std::size_t>(it->second)] = std::move(id);
  }
  return table;
}

nlohmann::json tokenizer_log_json(std::span<const EpochLog> log) {
  nlohmann::json out = nlohmann::json::array();
  for (const EpochLog& e : log) {
    out.push_back({{"epoch", e.epoch},
                   {"loss_kg", e.loss_kg},
                   {"loss_rq", e.loss_rq},
                   {"total", e.loss_kg + e.loss_rq},
                   {"reseeded_codes", e.reseeded_codes}});
  }
  return out;
}

}  // namespace kgrec
