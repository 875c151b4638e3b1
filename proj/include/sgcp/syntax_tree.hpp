#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgcp {

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

struct TreeNode {
  std::string label;
  std::vector<NodeId> children;
  // Present only on terminal nodes; a terminal's label equals its token.
  std::optional<std::string> token;
  NodeId parent = kNoNode;
};

/// Ordered, labeled, rooted tree. Nodes are stored in preorder, so the root
/// is always node 0 and every parent precedes its children.
class ConstituencyTree {
 public:
  ConstituencyTree() = default;

  NodeId root() const { return nodes_.empty() ? kNoNode : 0; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const TreeNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  bool is_leaf(NodeId id) const { return node(id).children.empty(); }
  bool is_terminal(NodeId id) const { return node(id).token.has_value(); }
  bool has_tokens() const;

  /// Terminal tokens in left-to-right order.
  std::vector<std::string> tokens() const;
  /// Leaves in left-to-right order.
  std::vector<NodeId> leaves() const;
  /// Depth of every node, root at depth 1.
  std::vector<int> depths() const;

  // Building. `add_node` appends; callers must add in preorder.
  NodeId add_node(std::string label, NodeId parent, std::optional<std::string> token = std::nullopt);

  friend bool operator==(const ConstituencyTree& a, const ConstituencyTree& b);

 private:
  std::vector<TreeNode> nodes_;
};

/// A tree with every terminal token removed; preterminal tags are leaves.
class SyntaxSkeleton {
 public:
  SyntaxSkeleton() = default;
  /// Throws std::invalid_argument if `tree` carries any token.
  explicit SyntaxSkeleton(ConstituencyTree tree);

  const ConstituencyTree& tree() const { return tree_; }
  friend bool operator==(const SyntaxSkeleton& a, const SyntaxSkeleton& b) { return a.tree_ == b.tree_; }

 private:
  ConstituencyTree tree_;
};

struct PrunedTree {
  SyntaxSkeleton skeleton;
  int height_used = 1;
};

/// Leaf node ids of a pruned tree, left to right.
using LeafQueue = std::vector<NodeId>;

struct TokenSpan {
  int begin = 0;  // 0-based, inclusive
  int end = 0;    // exclusive
};

struct SignallingVector {
  std::vector<int> bits;
  std::vector<TokenSpan> spans;
};

/// Parses one Penn-Treebank-style bracketed tree, e.g.
/// "(ROOT (NP (DT the) (NN cat)))". A bare atom after a label is a terminal;
/// "(DT)" is a tokenless leaf, as emitted for skeletons.
ConstituencyTree parse_bracketed(std::string_view text);

/// Single-line bracketed form with one space between siblings.
std::string serialize(const ConstituencyTree& tree);
inline std::string serialize(const SyntaxSkeleton& s) { return serialize(s.tree()); }

SyntaxSkeleton strip_terminals(const ConstituencyTree& tree);

/// Number of nodes on the longest root-to-leaf path; 0 for an empty tree.
int height(const ConstituencyTree& tree);
inline int height(const SyntaxSkeleton& s) { return height(s.tree()); }

/// Removes every node deeper than `max_height` (root depth 1).
PrunedTree prune(const SyntaxSkeleton& skeleton, int max_height);

LeafQueue leaf_queue(const PrunedTree& pruned);

/// Spans of terminal positions owned by each leaf of the skeleton of `full`
/// pruned at `max_height`, and the matching span-start bits.
SignallingVector leaf_spans(const ConstituencyTree& full, int max_height);

/// Unit-cost ordered tree edit distance (Zhang & Shasha).
int ted(const SyntaxSkeleton& a, const SyntaxSkeleton& b);
int ted(const ConstituencyTree& a, const ConstituencyTree& b);

/// Printable label: punctuation tags get the bracketed names used in
/// diagrams, e.g. "." -> "<DOT>".
std::string display_label(std::string_view label);

/// Indented multi-line rendering used by `inspect-tree`.
std::string pretty_print(const ConstituencyTree& tree);

}  // namespace sgcp
