#include "sgcp/syntax_tree.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

#include "sgcp/error.hpp"

namespace sgcp {

bool ConstituencyTree::has_tokens() const {
  return std::any_of(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.token.has_value(); });
}

std::vector<std::string> ConstituencyTree::tokens() const {
  // Preorder storage visits leaves left to right.
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.token) out.push_back(*n.token);
  return out;
}

std::vector<NodeId> ConstituencyTree::leaves() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].children.empty()) out.push_back(static_cast<NodeId>(i));
  return out;
}

std::vector<int> ConstituencyTree::depths() const {
  std::vector<int> d(nodes_.size(), 1);
  for (std::size_t i = 1; i < nodes_.size(); ++i) d[i] = d[static_cast<std::size_t>(nodes_[i].parent)] + 1;
  return d;
}

NodeId ConstituencyTree::add_node(std::string label, NodeId parent, std::optional<std::string> token) {
  if (nodes_.empty() ? parent != kNoNode : (parent < 0 || static_cast<std::size_t>(parent) >= nodes_.size()))
    throw std::invalid_argument("add_node: invalid parent");
  if (parent != kNoNode && nodes_[static_cast<std::size_t>(parent)].token)
    throw std::invalid_argument("add_node: terminal nodes cannot have children");
  auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(TreeNode{std::move(label), {}, std::move(token), parent});
  if (parent != kNoNode) nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
  return id;
}

bool operator==(const ConstituencyTree& a, const ConstituencyTree& b) {
  if (a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.label != y.label || x.token != y.token || x.parent != y.parent || x.children != y.children) return false;
  }
  return true;
}

SyntaxSkeleton::SyntaxSkeleton(ConstituencyTree tree) : tree_(std::move(tree)) {
  if (tree_.has_tokens()) throw std::invalid_argument("SyntaxSkeleton: tree carries terminal tokens");
}

// ---------------------------------------------------------------------------
// Bracketed I/O

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class BracketParser {
 public:
  explicit BracketParser(std::string_view text) : text_(text) {}

  ConstituencyTree parse() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("empty input", pos_);
    if (text_[pos_] != '(') throw ParseError("expected '('", pos_);
    parse_node(kNoNode);
    skip_space();
    if (pos_ < text_.size()) {
      if (text_[pos_] == '(') throw ParseError("multiple roots", pos_);
      if (text_[pos_] == ')') throw ParseError("unbalanced ')'", pos_);
      throw ParseError("trailing characters", pos_);
    }
    return std::move(tree_);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string_view atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' && text_[pos_] != ')') ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void parse_node(NodeId parent) {
    ++pos_;  // '('
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    std::string_view label = atom();
    if (label.empty()) throw ParseError("empty label", pos_);
    NodeId self = tree_.add_node(std::string(label), parent);
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        return;
      }
      if (c == '(') {
        parse_node(self);
      } else {
        std::string tok(atom());
        tree_.add_node(tok, self, tok);
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  ConstituencyTree tree_;
};

void serialize_into(const ConstituencyTree& t, NodeId id, std::string& out) {
  const auto& n = t.node(id);
  if (n.token) {
    out += *n.token;
    return;
  }
  out += '(';
  out += n.label;
  for (NodeId c : n.children) {
    out += ' ';
    serialize_into(t, c, out);
  }
  out += ')';
}

// Copies the nodes of `src` accepted by `keep` (which must be closed under
// taking parents) into a fresh preorder tree.
template <typename Keep>
ConstituencyTree copy_filtered(const ConstituencyTree& src, Keep keep) {
  ConstituencyTree out;
  if (src.empty() || !keep(src.root())) return out;
  std::vector<NodeId> remap(src.size(), kNoNode);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto id = static_cast<NodeId>(i);
    if (!keep(id)) continue;
    const auto& n = src.node(id);
    NodeId parent = n.parent == kNoNode ? kNoNode : remap[static_cast<std::size_t>(n.parent)];
    remap[i] = out.add_node(n.label, parent, n.token);
  }
  return out;
}

}  // namespace

ConstituencyTree parse_bracketed(std::string_view text) { return BracketParser(text).parse(); }

std::string serialize(const ConstituencyTree& tree) {
  std::string out;
  if (!tree.empty()) serialize_into(tree, tree.root(), out);
  return out;
}

// ---------------------------------------------------------------------------
// Structural transforms

SyntaxSkeleton strip_terminals(const ConstituencyTree& tree) {
  return SyntaxSkeleton(copy_filtered(tree, [&](NodeId id) { return !tree.is_terminal(id); }));
}

int height(const ConstituencyTree& tree) {
  auto d = tree.depths();
  return d.empty() ? 0 : *std::max_element(d.begin(), d.end());
}

PrunedTree prune(const SyntaxSkeleton& skeleton, int max_height) {
  if (max_height < 1) throw std::invalid_argument("prune: height must be >= 1");
  const auto& t = skeleton.tree();
  auto d = t.depths();
  return PrunedTree{SyntaxSkeleton(copy_filtered(t, [&](NodeId id) { return d[static_cast<std::size_t>(id)] <= max_height; })),
                    max_height};
}

LeafQueue leaf_queue(const PrunedTree& pruned) { return pruned.skeleton.tree().leaves(); }

SignallingVector leaf_spans(const ConstituencyTree& full, int max_height) {
  if (max_height < 1) throw std::invalid_argument("leaf_spans: height must be >= 1");
  if (full.empty()) throw std::invalid_argument("leaf_spans: empty tree");
  const std::size_t n = full.size();
  for (NodeId leaf : full.leaves())
    if (!full.is_terminal(leaf)) throw DataError("leaf_spans: tree has a leaf without a terminal token");

  // Terminal range [first, last) under each node, filled bottom-up; preorder
  // storage means iterating in reverse visits children before parents.
  std::vector<int> first(n, 0), last(n, 0);
  int pos = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (full.nodes()[i].token) {
      first[i] = pos;
      last[i] = ++pos;
    }
  for (std::size_t k = n; k-- > 0;) {
    const auto& node = full.nodes()[k];
    if (node.token) continue;
    first[k] = first[static_cast<std::size_t>(node.children.front())];
    last[k] = last[static_cast<std::size_t>(node.children.back())];
  }

  auto depth = full.depths();
  SignallingVector sv;
  sv.bits.assign(static_cast<std::size_t>(pos), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = full.nodes()[i];
    if (node.token || depth[i] > max_height) continue;
    bool has_constituent_child = std::any_of(node.children.begin(), node.children.end(),
                                             [&](NodeId c) { return !full.is_terminal(c); });
    if (depth[i] == max_height || !has_constituent_child) sv.spans.push_back({first[i], last[i]});
  }
  int expect = 0;
  for (const auto& s : sv.spans) {
    if (s.begin != expect) throw DataError("leaf_spans: terminals mixed with constituents do not partition");
    sv.bits[static_cast<std::size_t>(s.begin)] = 1;
    expect = s.end;
  }
  if (expect != pos) throw DataError("leaf_spans: terminals mixed with constituents do not partition");
  return sv;
}

// ---------------------------------------------------------------------------
// Zhang-Shasha tree edit distance

namespace {

struct PostorderTree {
  std::vector<int> label;     // 1-based postorder index -> label id
  std::vector<int> leftmost;  // 1-based postorder index -> leftmost leaf index
  std::vector<int> keyroots;
};

PostorderTree to_postorder(const ConstituencyTree& t, std::unordered_map<std::string, int>& ids) {
  PostorderTree p;
  const std::size_t n = t.size();
  p.label.assign(n + 1, 0);
  p.leftmost.assign(n + 1, 0);
  // Iterative postorder over the preorder-stored tree.
  std::vector<std::pair<NodeId, std::size_t>> stack{{t.root(), 0}};
  std::vector<int> post_index(n, 0);
  int counter = 0;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const auto& node = t.node(id);
    if (next < node.children.size()) {
      NodeId child = node.children[next++];
      stack.push_back({child, 0});
      continue;
    }
    int k = ++counter;
    post_index[static_cast<std::size_t>(id)] = k;
    auto [it, inserted] = ids.emplace(node.label, static_cast<int>(ids.size()));
    p.label[static_cast<std::size_t>(k)] = it->second;
    p.leftmost[static_cast<std::size_t>(k)] =
        node.children.empty() ? k : p.leftmost[static_cast<std::size_t>(post_index[static_cast<std::size_t>(node.children.front())])];
    stack.pop_back();
  }
  // Keyroots: the highest node for each distinct leftmost leaf.
  std::vector<int> seen(n + 1, 0);
  for (int k = static_cast<int>(n); k >= 1; --k) {
    int l = p.leftmost[static_cast<std::size_t>(k)];
    if (!seen[static_cast<std::size_t>(l)]) {
      seen[static_cast<std::size_t>(l)] = 1;
      p.keyroots.push_back(k);
    }
  }
  std::sort(p.keyroots.begin(), p.keyroots.end());
  return p;
}

int zhang_shasha(const PostorderTree& a, const PostorderTree& b) {
  const int n = static_cast<int>(a.label.size()) - 1;
  const int m = static_cast<int>(b.label.size()) - 1;
  const auto w = static_cast<std::size_t>(m + 1);
  std::vector<int> treedist(static_cast<std::size_t>(n + 1) * w, 0);
  std::vector<int> fd(static_cast<std::size_t>(n + 1) * w, 0);
  auto TD = [&](int i, int j) -> int& { return treedist[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)]; };
  auto FD = [&](int i, int j) -> int& { return fd[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)]; };

  for (int i : a.keyroots) {
    for (int j : b.keyroots) {
      const int li = a.leftmost[static_cast<std::size_t>(i)];
      const int lj = b.leftmost[static_cast<std::size_t>(j)];
      FD(li - 1, lj - 1) = 0;
      for (int di = li; di <= i; ++di) FD(di, lj - 1) = FD(di - 1, lj - 1) + 1;
      for (int dj = lj; dj <= j; ++dj) FD(li - 1, dj) = FD(li - 1, dj - 1) + 1;
      for (int di = li; di <= i; ++di) {
        const int ldi = a.leftmost[static_cast<std::size_t>(di)];
        for (int dj = lj; dj <= j; ++dj) {
          const int ldj = b.leftmost[static_cast<std::size_t>(dj)];
          const int del = FD(di - 1, dj) + 1;
          const int ins = FD(di, dj - 1) + 1;
          if (ldi == li && ldj == lj) {
            const int sub = FD(di - 1, dj - 1) + (a.label[static_cast<std::size_t>(di)] != b.label[static_cast<std::size_t>(dj)] ? 1 : 0);
            FD(di, dj) = std::min({del, ins, sub});
            TD(di, dj) = FD(di, dj);
          } else {
            FD(di, dj) = std::min({del, ins, FD(ldi - 1, ldj - 1) + TD(di, dj)});
          }
        }
      }
    }
  }
  return TD(n, m);
}

}  // namespace

int ted(const ConstituencyTree& a, const ConstituencyTree& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ted: empty tree");
  std::unordered_map<std::string, int> ids;
  auto pa = to_postorder(a, ids);
  auto pb = to_postorder(b, ids);
  return zhang_shasha(pa, pb);
}

int ted(const SyntaxSkeleton& a, const SyntaxSkeleton& b) { return ted(a.tree(), b.tree()); }

// ---------------------------------------------------------------------------
// Display

std::string display_label(std::string_view label) {
  if (label == ".") return "<DOT>";
  if (label == ",") return "<COMMA>";
  if (label == ":") return "<COLON>";
  if (label == "``") return "<LQUOTE>";
  if (label == "''") return "<RQUOTE>";
  return std::string(label);
}

std::string pretty_print(const ConstituencyTree& tree) {
  std::string out;
  auto depth = tree.depths();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& n = tree.nodes()[i];
    out.append(static_cast<std::size_t>(2 * (depth[i] - 1)), ' ');
    out += n.token ? *n.token : display_label(n.label);
    out += '\n';
  }
  return out;
}

}  // namespace sgcp
