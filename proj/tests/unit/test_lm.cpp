#include "../support/id_fixtures.hpp"

#include "kgrec/error.hpp"
#include "kgrec/lm.hpp"
#include "kgrec/trie.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace kgrec;
using kgrec::testing::random_spellings;
using kgrec::testing::spelling_vocab;

namespace {

LmConfig small_config(int vocab, double dropout = 0.0) {
  LmConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.max_len = 32;
  cfg.dropout = dropout;
  cfg.seed = 3;
  return cfg;
}

Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& x) {
  const double m = x.maxCoeff();
  return x.array() - (m + std::log((x.array() - m).exp().sum()));
}

}  // namespace

TEST_CASE("trie structure and rejection of bad spellings") {
  const DecodingTrie t({{5, 1}, {5, 2, 9}, {3}});
  CHECK(t.leaf_count() == 3);
  const auto root = t.children(DecodingTrie::kRoot);
  REQUIRE(root.size() == 2);
  CHECK(root[0].first == 3);
  CHECK(root[1].first == 5);
  CHECK(t.entity(t.walk(std::vector<int>{5, 2, 9})) == 1);
  CHECK(t.walk(std::vector<int>{5, 2}) == -1);
  CHECK(t.walk(std::vector<int>{7}) == -1);
  CHECK_THROWS_AS(DecodingTrie({{1, 2}, {1, 2}}), DataError);
  CHECK_THROWS_AS(DecodingTrie({{1, 2}, {1}}), DataError);
  CHECK_THROWS_AS(DecodingTrie({{1}, {1, 2}}), DataError);
  CHECK_THROWS_AS(DecodingTrie(std::vector<std::vector<int>>(1)), DataError);
}

TEST_CASE("logits are causal") {
  TransformerLm lm(small_config(20));
  std::vector<int> a = {1, 4, 7, 2, 9, 3};
  std::vector<int> b = a;
  b[4] = 11;
  b[5] = 0;
  nn::Tape ta, tb;
  const nn::Matrix la = lm.logits(ta, a).value();
  const nn::Matrix lb = lm.logits(tb, b).value();
  CHECK(la.topRows(4) == lb.topRows(4));
  CHECK(la.row(4) != lb.row(4));
}

TEST_CASE("sequence loss only counts target positions") {
  TransformerLm lm(small_config(20));
  const std::vector<int> input = {1, 4, 7, 2};
  const std::vector<int> target = {9, 3};
  nn::Tape tape;
  const double loss = lm.sequence_loss(tape, input, target).scalar();
  std::vector<int> all = input;
  all.insert(all.end(), target.begin(), target.end());
  nn::Tape t2;
  const nn::Matrix logits = lm.logits(t2, all).value();
  double expected = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    expected -= log_softmax(logits.row(static_cast<Eigen::Index>(input.size() - 1 + j)))(target[j]);
  }
  expected /= static_cast<double>(target.size());
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cached decoding matches the full forward pass") {
  TransformerLm lm(small_config(20));
  const std::vector<int> tokens = {1, 4, 7, 2, 9, 3, 3};
  nn::Tape tape;
  const nn::Matrix logits = lm.logits(tape, tokens).value();
  TransformerLm::Cache shared;
  const Eigen::RowVectorXd first = lm.prefill(std::span(tokens).first(4), shared);
  CHECK((first - log_softmax(logits.row(3))).cwiseAbs().maxCoeff() < 1e-10);
  TransformerLm::Cache own;
  for (std::size_t t = 4; t < tokens.size(); ++t) {
    const Eigen::RowVectorXd next = lm.extend(shared, own, tokens[t]);
    CHECK((next - log_softmax(logits.row(static_cast<Eigen::Index>(t)))).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(shared.length == 4);
}

TEST_CASE("a single example is memorized and training is deterministic") {
  std::vector<TokenSequence> corpus(1);
  corpus[0].input_tokens = {1, 4, 7, 2};
  corpus[0].target_tokens = {9, 3};
  LmTrainOptions opt;
  opt.epochs = 200;
  opt.lr = 0.01;
  opt.batch_size = 1;
  TransformerLm a(small_config(20));
  const auto ra = train_lm(a, corpus, opt);
  CHECK(ra.epoch_loss.back() < 0.01);
  CHECK_FALSE(ra.abort_reason.has_value());
  TransformerLm b(small_config(20));
  const auto rb = train_lm(b, corpus, opt);
  CHECK(rb.epoch_loss == ra.epoch_loss);
}

TEST_CASE("checkpoint round trip keeps predictions") {
  TransformerLm lm(small_config(20));
  const auto dir = std::filesystem::temp_directory_path() / "kgrec_lm_ckpt_test";
  std::filesystem::remove_all(dir);
  save_lm(dir, lm, 12);
  const TransformerLm back = load_lm(dir);
  CHECK(back.config().d_model == 16);
  const std::vector<int> tokens = {1, 4, 7};
  TransformerLm::Cache c1, c2;
  CHECK((lm.prefill(tokens, c1) - back.prefill(tokens, c2)).cwiseAbs().maxCoeff() < 1e-4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("beam search emits distinct valid ids and matches exhaustive scoring at full width") {
  std::mt19937_64 rng(5);
  const int n = 24;
  const auto spellings = random_spellings(n, 2, 4, 20, rng);
  const DecodingTrie trie(spellings);
  TransformerLm lm(small_config(spelling_vocab(n, 2, 4, 20)));
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<int> input = {1, 2 + trial, 5, 9};
    const Generation g = generate_topk(lm, input, trie, n, n);
    CHECK_FALSE(g.short_result);
    REQUIRE(g.ranked.size() == static_cast<std::size_t>(n));
    std::set<int> entities;
    for (const auto& c : g.ranked) {
      CHECK(trie.walk(c.tokens) >= 0);
      CHECK(c.tokens == spellings[static_cast<std::size_t>(c.entity)]);
      CHECK(c.score == doctest::Approx(constrained_score(lm, input, trie, c.tokens)).epsilon(1e-12));
      entities.insert(c.entity);
    }
    CHECK(entities.size() == static_cast<std::size_t>(n));
    int best = 0;
    double best_score = -1e300;
    for (int e = 0; e < n; ++e) {
      const double s = constrained_score(lm, input, trie, spellings[static_cast<std::size_t>(e)]);
      if (s > best_score || (s == best_score && spellings[static_cast<std::size_t>(e)] < spellings[static_cast<std::size_t>(best)])) {
        best = e;
        best_score = s;
      }
    }
    CHECK(g.ranked[0].entity == best);
  }
}

TEST_CASE("beam search contracts") {
  const DecodingTrie trie({{10, 11}, {10, 12}, {13}});
  TransformerLm lm(small_config(20));
  const std::vector<int> input = {1, 2};
  CHECK_THROWS_AS(generate_topk(lm, input, trie, 5, 4), ConfigError);
  const Generation g = generate_topk(lm, input, trie, 5, 5);
  CHECK(g.short_result);
  CHECK(g.ranked.size() == 3);
  const Generation narrow = generate_topk(lm, input, trie, 1, 1);
  CHECK(narrow.ranked.size() == 1);
  CHECK_THROWS_AS(constrained_score(lm, input, trie, std::vector<int>{10}), ContractError);
}

TEST_CASE("config validation") {
  LmConfig cfg = small_config(20);
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(20);
  CHECK(LmConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}
