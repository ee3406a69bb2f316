#pragma once

#include <span>
#include <utility>
#include <vector>

namespace kgrec {

/// Prefix trie over the token spellings of every entity of one type.
class DecodingTrie {
 public:
  DecodingTrie() = default;
  /// `spellings[i]` is the token sequence of entity i. Throws DataError on
  /// duplicate spellings, empty spellings, or one spelling prefixing another.
  explicit DecodingTrie(const std::vector<std::vector<int>>& spellings);

  static constexpr int kRoot = 0;

  /// (token, child node) pairs sorted by token.
  std::span<const std::pair<int, int>> children(int node) const { return nodes_[node].children; }
  /// Child reached by `token`, or -1.
  int child(int node, int token) const;
  /// Entity index at a leaf, -1 for internal nodes.
  int entity(int node) const { return nodes_[node].entity; }
  bool is_leaf(int node) const { return nodes_[node].entity >= 0; }

  /// Leaf reached by following `tokens` from the root, or -1.
  int walk(std::span<const int> tokens) const;
  std::size_t leaf_count() const { return leaves_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::pair<int, int>> children;
    int entity = -1;
  };
  std::vector<Node> nodes_;
  std::size_t leaves_ = 0;
};

}  // namespace kgrec
