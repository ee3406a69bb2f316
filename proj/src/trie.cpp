#include "kgrec/trie.hpp"

#include "kgrec/error.hpp"

#include <algorithm>
#include <string>

namespace kgrec {

DecodingTrie::DecodingTrie(const std::vector<std::vector<int>>& spellings) {
  nodes_.emplace_back();
  for (std::size_t e = 0; e < spellings.size(); ++e) {
    const auto& toks = spellings[e];
    if (toks.empty()) throw DataError("entity " + std::to_string(e) + " has an empty spelling");
    int node = kRoot;
    for (int tok : toks) {
      if (nodes_[static_cast<std::size_t>(node)].entity >= 0) {
        throw DataError("spelling of entity " + std::to_string(e) + " extends another id");
      }
      int next = child(node, tok);
      if (next < 0) {
        next = static_cast<int>(nodes_.size());
        auto& ch = nodes_[static_cast<std::size_t>(node)].children;
        ch.insert(std::lower_bound(ch.begin(), ch.end(), std::pair<int, int>{tok, -1}),
                  {tok, next});
        nodes_.emplace_back();
      }
      node = next;
    }
    Node& leaf = nodes_[static_cast<std::size_t>(node)];
    if (leaf.entity >= 0) {
      throw DataError("entities " + std::to_string(leaf.entity) + " and " + std::to_string(e) +
                      " share one spelling");
    }
    if (!leaf.children.empty()) {
      throw DataError("spelling of entity " + std::to_string(e) + " prefixes another id");
    }
    leaf.entity = static_cast<int>(e);
    ++leaves_;
  }
}

int DecodingTrie::child(int node, int token) const {
  const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
  auto it = std::lower_bound(ch.begin(), ch.end(), std::pair<int, int>{token, -1});
  return it != ch.end() && it->first == token ? it->second : -1;
}

int DecodingTrie::walk(std::span<const int> tokens) const {
  if (nodes_.empty()) return -1;
  int node = kRoot;
  for (int tok : tokens) {
    node = child(node, tok);
    if (node < 0) return -1;
  }
  return is_leaf(node) ? node : -1;
}

}  // namespace kgrec
