#include "kgrec/lm.hpp"

#include "kgrec/checkpoint.hpp"
#include "kgrec/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace kgrec {

using nn::Matrix;
using nn::Parameter;
using nn::Tape;
using nn::Var;

namespace {
constexpr double kLnEps = 1e-5;

Parameter ones(std::string name, int n) { return Parameter(std::move(name), Matrix::Ones(1, n)); }
Parameter zeros(std::string name, int r, int c) {
  return Parameter(std::move(name), Matrix::Zero(r, c));
}

Eigen::RowVectorXd layer_norm_row(const Eigen::RowVectorXd& x, const Parameter& g,
                                  const Parameter& b) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double inv = 1.0 / std::sqrt(var + kLnEps);
  Eigen::RowVectorXd out = ((x.array() - mu).matrix() * inv).array() * g.value.row(0).array();
  return out + b.value.row(0);
}

Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& x) {
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return x.array() - lse;
}
}  // namespace

// ---- config -----------------------------------------------------------------

void LmConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("lm.vocab_size must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("lm.d_model (" + std::to_string(d_model) + ") must be a positive multiple of lm.n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (n_layers < 0) throw ConfigError("lm.n_layers must be >= 0");
  if (max_len < 2) throw ConfigError("lm.max_len must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("lm.dropout must be in [0, 1)");
}

nlohmann::json LmConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"d_model", d_model}, {"n_layers", n_layers},
          {"n_heads", n_heads},       {"max_len", max_len}, {"dropout", dropout},
          {"seed", seed}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---- model ------------------------------------------------------------------

TransformerLm::TransformerLm(const LmConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  nn::Rng rng(cfg.seed);
  const int d = cfg.d_model;
  tok_emb_ = nn::make_uniform("lm/tok_emb", cfg.vocab_size, d, d, rng);
  pos_emb_ = nn::make_uniform("lm/pos_emb", cfg.max_len, d, d, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "lm/block" + std::to_string(l) + "/";
    Block b;
    b.ln1_g = ones(p + "ln1_g", d);
    b.ln1_b = zeros(p + "ln1_b", 1, d);
    b.w_qkv = nn::make_uniform(p + "w_qkv", d, 3 * d, d, rng);
    b.b_qkv = zeros(p + "b_qkv", 1, 3 * d);
    b.w_o = nn::make_uniform(p + "w_o", d, d, d, rng);
    b.b_o = zeros(p + "b_o", 1, d);
    b.ln2_g = ones(p + "ln2_g", d);
    b.ln2_b = zeros(p + "ln2_b", 1, d);
    b.w_fc1 = nn::make_uniform(p + "w_fc1", d, 4 * d, d, rng);
    b.b_fc1 = zeros(p + "b_fc1", 1, 4 * d);
    b.w_fc2 = nn::make_uniform(p + "w_fc2", 4 * d, d, 4 * d, rng);
    b.b_fc2 = zeros(p + "b_fc2", 1, d);
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = ones("lm/lnf_g", d);
  lnf_b_ = zeros("lm/lnf_b", 1, d);
  w_out_ = nn::make_uniform("lm/w_out", d, cfg.vocab_size, d, rng);
  b_out_ = zeros("lm/b_out", 1, cfg.vocab_size);
}

std::vector<Parameter*> TransformerLm::parameters() {
  std::vector<Parameter*> out{&tok_emb_, &pos_emb_};
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.w_qkv, &b.b_qkv, &b.w_o, &b.b_o, &b.ln2_g,
                         &b.ln2_b, &b.w_fc1, &b.b_fc1, &b.w_fc2, &b.b_fc2}) {
      out.push_back(p);
    }
  }
  for (Parameter* p : {&lnf_g_, &lnf_b_, &w_out_, &b_out_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> TransformerLm::parameters() const {
  auto mut = const_cast<TransformerLm*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Var TransformerLm::hidden(Tape& tape, std::span<const int> tokens, nn::Rng* dropout_rng) {
  const auto t = static_cast<int>(tokens.size());
  if (t < 1 || t > cfg_.max_len) {
    throw ContractError("lm: sequence of " + std::to_string(t) + " tokens, max_len " +
                        std::to_string(cfg_.max_len));
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= cfg_.vocab_size) throw ContractError("lm: token outside vocabulary");
  }
  const double p = dropout_rng ? cfg_.dropout : 0.0;
  auto drop = [&](Var v) { return p > 0.0 ? nn::dropout(v, p, *dropout_rng) : v; };
  std::vector<int> pos(static_cast<std::size_t>(t));
  std::iota(pos.begin(), pos.end(), 0);
  Var x = nn::add(nn::embedding_lookup(tape.parameter(tok_emb_), tokens),
                  nn::embedding_lookup(tape.parameter(pos_emb_), pos));
  x = drop(x);
  for (Block& b : blocks_) {
    Var h = nn::layer_norm(x, tape.parameter(b.ln1_g), tape.parameter(b.ln1_b), kLnEps);
    Var qkv = nn::add_bias(nn::matmul(h, tape.parameter(b.w_qkv)), tape.parameter(b.b_qkv));
    Var a = nn::causal_self_attention(qkv, cfg_.n_heads);
    a = nn::add_bias(nn::matmul(a, tape.parameter(b.w_o)), tape.parameter(b.b_o));
    x = nn::add(x, drop(a));
    h = nn::layer_norm(x, tape.parameter(b.ln2_g), tape.parameter(b.ln2_b), kLnEps);
    Var m = nn::relu(nn::add_bias(nn::matmul(h, tape.parameter(b.w_fc1)), tape.parameter(b.b_fc1)));
    m = nn::add_bias(nn::matmul(m, tape.parameter(b.w_fc2)), tape.parameter(b.b_fc2));
    x = nn::add(x, drop(m));
  }
  return nn::layer_norm(x, tape.parameter(lnf_g_), tape.parameter(lnf_b_), kLnEps);
}

Var TransformerLm::logits(Tape& tape, std::span<const int> tokens) {
  return nn::add_bias(nn::matmul(hidden(tape, tokens), tape.parameter(w_out_)),
                      tape.parameter(b_out_));
}

Var TransformerLm::sequence_loss(Tape& tape, std::span<const int> input,
                                 std::span<const int> target, nn::Rng* dropout_rng) {
  if (input.empty() || target.empty()) throw ContractError("lm: empty input or target block");
  std::vector<int> seq(input.begin(), input.end());
  seq.insert(seq.end(), target.begin(), target.end() - 1);
  Var h = hidden(tape, seq, dropout_rng);
  // Row input.size()-1+j predicts target[j].
  std::vector<int> rows(target.size());
  std::iota(rows.begin(), rows.end(), static_cast<int>(input.size()) - 1);
  Var sel = nn::embedding_lookup(h, rows);
  Var lg = nn::add_bias(nn::matmul(sel, tape.parameter(w_out_)), tape.parameter(b_out_));
  return nn::cross_entropy(lg, target);
}

// ---- cached inference -----------------------------------------------------------

Eigen::RowVectorXd TransformerLm::prefill(std::span<const int> tokens, Cache& cache) const {
  auto& self = const_cast<TransformerLm&>(*this);
  Tape tape;
  cache = Cache{};
  cache.length = static_cast<int>(tokens.size());
  // Recompute the forward on a tape, reading keys and values out of each
  // block's fused projection.
  const auto t = static_cast<int>(tokens.size());
  if (t < 1 || t > cfg_.max_len) {
    throw ContractError("lm: prefix of " + std::to_string(t) + " tokens, max_len " +
                        std::to_string(cfg_.max_len));
  }
  std::vector<int> pos(static_cast<std::size_t>(t));
  std::iota(pos.begin(), pos.end(), 0);
  Var x = nn::add(nn::embedding_lookup(tape.constant(tok_emb_.value), tokens),
                  nn::embedding_lookup(tape.constant(pos_emb_.value), pos));
  const int d = cfg_.d_model;
  for (Block& b : self.blocks_) {
    Var h = nn::layer_norm(x, tape.constant(b.ln1_g.value), tape.constant(b.ln1_b.value), kLnEps);
    Var qkv = nn::add_bias(nn::matmul(h, tape.constant(b.w_qkv.value)), tape.constant(b.b_qkv.value));
    cache.keys.push_back(qkv.value().middleCols(d, d));
    cache.values.push_back(qkv.value().middleCols(2 * d, d));
    Var a = nn::causal_self_attention(qkv, cfg_.n_heads);
    a = nn::add_bias(nn::matmul(a, tape.constant(b.w_o.value)), tape.constant(b.b_o.value));
    x = nn::add(x, a);
    h = nn::layer_norm(x, tape.constant(b.ln2_g.value), tape.constant(b.ln2_b.value), kLnEps);
    Var m = nn::relu(
        nn::add_bias(nn::matmul(h, tape.constant(b.w_fc1.value)), tape.constant(b.b_fc1.value)));
    m = nn::add_bias(nn::matmul(m, tape.constant(b.w_fc2.value)), tape.constant(b.b_fc2.value));
    x = nn::add(x, m);
  }
  const Eigen::RowVectorXd last = x.value().row(t - 1);
  const Eigen::RowVectorXd hf = layer_norm_row(last, lnf_g_, lnf_b_);
  return log_softmax(hf * w_out_.value + b_out_.value);
}

Eigen::RowVectorXd TransformerLm::extend(const Cache& shared, Cache& own, int token) const {
  if (token < 0 || token >= cfg_.vocab_size) throw ContractError("lm: token outside vocabulary");
  const int position = shared.length + own.length;
  if (position >= cfg_.max_len) throw ContractError("lm: generation exceeds max_len");
  return step_values(shared, own, token, position);
}

Eigen::RowVectorXd TransformerLm::step_values(const Cache& shared, Cache& own, int token,
                                              int position) const {
  const int d = cfg_.d_model;
  const int dh = d / cfg_.n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  if (own.keys.empty()) {
    own.keys.assign(blocks_.size(), Matrix(0, d));
    own.values.assign(blocks_.size(), Matrix(0, d));
  }
  Eigen::RowVectorXd x = tok_emb_.value.row(token) + pos_emb_.value.row(position);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    const Eigen::RowVectorXd h = layer_norm_row(x, b.ln1_g, b.ln1_b);
    const Eigen::RowVectorXd qkv = h * b.w_qkv.value + b.b_qkv.value;
    Matrix& ok = own.keys[l];
    Matrix& ov = own.values[l];
    ok.conservativeResize(ok.rows() + 1, d);
    ov.conservativeResize(ov.rows() + 1, d);
    ok.row(ok.rows() - 1) = qkv.segment(d, d);
    ov.row(ov.rows() - 1) = qkv.segment(2 * d, d);
    const Matrix& sk = shared.keys[l];
    const Matrix& sv = shared.values[l];
    const Eigen::Index ns = shared.length;
    const Eigen::Index no = ok.rows();
    Eigen::RowVectorXd att(d);
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      const auto q = qkv.segment(hd * dh, dh);
      Eigen::RowVectorXd s(ns + no);
      s.head(ns) = (sk.topRows(ns).middleCols(hd * dh, dh) * q.transpose()).transpose() * inv;
      s.tail(no) = (ok.middleCols(hd * dh, dh) * q.transpose()).transpose() * inv;
      const double m = s.maxCoeff();
      s = (s.array() - m).exp().matrix();
      s /= s.sum();
      att.segment(hd * dh, dh) = s.head(ns) * sv.topRows(ns).middleCols(hd * dh, dh) +
                                 s.tail(no) * ov.middleCols(hd * dh, dh);
    }
    x += att * b.w_o.value + b.b_o.value;
    const Eigen::RowVectorXd h2 = layer_norm_row(x, b.ln2_g, b.ln2_b);
    const Eigen::RowVectorXd m =
        (h2 * b.w_fc1.value + b.b_fc1.value).cwiseMax(0.0);
    x += m * b.w_fc2.value + b.b_fc2.value;
  }
  ++own.length;
  const Eigen::RowVectorXd hf = layer_norm_row(x, lnf_g_, lnf_b_);
  return log_softmax(hf * w_out_.value + b_out_.value);
}

// ---- training -----------------------------------------------------------------

LmTrainResult train_lm(TransformerLm& model, std::span<const TokenSequence> corpus,
                       const LmTrainOptions& opt) {
  if (corpus.empty()) throw DataError("train_lm: empty corpus");
  if (opt.epochs < 1 || opt.batch_size < 1 || !(opt.lr > 0.0)) {
    throw ConfigError("train_lm: epochs, batch_size and lr must be positive");
  }
  LmTrainResult res;
  auto params = model.parameters();
  nn::Adam adam(params, {.lr = opt.lr, .clip_norm = opt.clip_norm});
  nn::Rng order_rng(model.config().seed ^ 0x5eedULL);
  nn::Rng drop_rng(model.config().seed + 1);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> last_good;
  for (const Parameter* p : params) last_good.push_back(p->value);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const TokenSequence& s = corpus[order[i]];
        Tape tape;
        Var loss = model.sequence_loss(tape, s.input_tokens, s.target_tokens, &drop_rng);
        const double v = loss.scalar();
        if (!std::isfinite(v)) {
          for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = last_good[k];
          res.abort_reason = "non-finite LM loss in epoch " + std::to_string(epoch);
          spdlog::error("{}", *res.abort_reason);
          res.steps = adam.steps();
          res.skipped_steps = adam.skipped();
          return res;
        }
        total += v;
        tape.backward(nn::scale(loss, w));
      }
      adam.step();
    }
    const double mean = total / static_cast<double>(corpus.size());
    res.epoch_loss.push_back(mean);
    spdlog::info("lm epoch {}: loss {:.5f}", epoch, mean);
    for (std::size_t k = 0; k < params.size(); ++k) last_good[k] = params[k]->value;
  }
  res.steps = adam.steps();
  res.skipped_steps = adam.skipped();
  return res;
}

void save_lm(const std::filesystem::path& dir, const TransformerLm& model, long step,
             const nlohmann::json& extra) {
  nn::CheckpointInfo info;
  info.seed = model.config().seed;
  info.step = step;
  info.extra = extra;
  info.extra["lm_config"] = model.config().to_json();
  const auto params = model.parameters();
  nn::save_checkpoint(dir, params, info);
}

TransformerLm load_lm(const std::filesystem::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw MissingArtifact("train-lm", (dir / "checkpoint.json").string());
  const auto manifest = nlohmann::json::parse(in);
  TransformerLm model(LmConfig::from_json(manifest.at("extra").at("lm_config")));
  const auto params = model.parameters();
  nn::load_checkpoint(dir, params);
  return model;
}

// ---- constrained generation ----------------------------------------------------

namespace {

double renormalised(const Eigen::RowVectorXd& logp, std::span<const std::pair<int, int>> allowed,
                    int token) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& [tok, child] : allowed) m = std::max(m, logp(tok));
  double z = 0.0;
  for (const auto& [tok, child] : allowed) z += std::exp(logp(tok) - m);
  return logp(token) - (m + std::log(z));
}

struct Beam {
  std::vector<int> tokens;
  double logp = 0.0;
  int node = DecodingTrie::kRoot;
  TransformerLm::Cache own;
  Eigen::RowVectorXd next;
};

bool ranks_before(double sa, const std::vector<int>& ta, double sb, const std::vector<int>& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

}  // namespace

Generation generate_topk(const TransformerLm& model, std::span<const int> input,
                         const DecodingTrie& trie, int k, int beam_width) {
  if (k < 1 || beam_width < k) throw ConfigError("generate_topk: need 1 <= K <= beam_width");
  if (trie.node_count() == 0) throw ContractError("generate_topk: empty trie");
  TransformerLm::Cache shared;
  std::vector<Beam> beams(1);
  beams[0].next = model.prefill(input, shared);
  Generation gen;
  struct Cand {
    std::size_t parent;
    int token;
    int node;
    double logp;
    std::vector<int> tokens;
  };
  while (!beams.empty()) {
    std::vector<Cand> cands;
    for (std::size_t bi = 0; bi < beams.size(); ++bi) {
      const Beam& b = beams[bi];
      const auto allowed = trie.children(b.node);
      for (const auto& [tok, child] : allowed) {
        Cand c{bi, tok, child, b.logp + renormalised(b.next, allowed, tok), b.tokens};
        c.tokens.push_back(tok);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return ranks_before(a.logp / static_cast<double>(a.tokens.size()), a.tokens,
                          b.logp / static_cast<double>(b.tokens.size()), b.tokens);
    });
    if (cands.size() > static_cast<std::size_t>(beam_width)) cands.resize(static_cast<std::size_t>(beam_width));
    std::vector<Beam> next;
    for (Cand& c : cands) {
      if (trie.is_leaf(c.node)) {
        const double score = c.logp / static_cast<double>(c.tokens.size());
        gen.ranked.push_back({std::move(c.tokens), trie.entity(c.node), score});
        continue;
      }
      Beam nb;
      nb.own = beams[c.parent].own;
      nb.next = model.extend(shared, nb.own, c.token);
      nb.tokens = std::move(c.tokens);
      nb.logp = c.logp;
      nb.node = c.node;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }
  std::sort(gen.ranked.begin(), gen.ranked.end(),
            [](const Generation::Candidate& a, const Generation::Candidate& b) {
              return ranks_before(a.score, a.tokens, b.score, b.tokens);
            });
  if (gen.ranked.size() > static_cast<std::size_t>(k)) gen.ranked.resize(static_cast<std::size_t>(k));
  gen.short_result = gen.ranked.size() < static_cast<std::size_t>(k);
  return gen;
}

double constrained_score(const TransformerLm& model, std::span<const int> input,
                         const DecodingTrie& trie, std::span<const int> id_tokens) {
  if (trie.walk(id_tokens) < 0) throw ContractError("constrained_score: id not in trie");
  TransformerLm::Cache shared;
  TransformerLm::Cache own;
  Eigen::RowVectorXd next = model.prefill(input, shared);
  int node = DecodingTrie::kRoot;
  double total = 0.0;
  for (std::size_t i = 0; i < id_tokens.size(); ++i) {
    total += renormalised(next, trie.children(node), id_tokens[i]);
    node = trie.child(node, id_tokens[i]);
    if (i + 1 < id_tokens.size()) next = model.extend(shared, own, id_tokens[i]);
  }
  return total / static_cast<double>(id_tokens.size());
}

}  // namespace kgrec
