#pragma once

// Rooted, bifurcating time trees: Newick parsing, node indexing and serialization.
//
// Node indexing follows a single rule that every downstream recursion relies on:
// tips are 0..N-1, internal nodes N..2N-2, the root is 2N-2, and an ancestor always
// has a larger index than its descendants.  Ascending index order is therefore a
// post-order traversal and descending order a pre-order traversal, so tree sweeps
// are plain loops over flat arrays.  Branch k is the edge above node k; there are
// 2N-2 branches and the root has none.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shrinkclock/error.hpp"

namespace shrinkclock {

// Ordered `[&key=value,...]` payload attached to a node.
using Annotations = std::vector<std::pair<std::string, std::string>>;

inline constexpr int k_no_node = -1;

struct Phylogeny {
  int n_tips = 0;
  std::vector<int> parent;                    // k_no_node at the root
  std::vector<std::array<int, 2>> children;   // {k_no_node, k_no_node} at tips
  std::vector<double> branch_length;          // 0 at the root
  std::vector<int> descendant_count;          // branches in the subtree, own branch included
  std::vector<std::string> names;             // tip labels; internal labels kept if present
  std::vector<Annotations> annotations;

  auto num_nodes() const -> int { return 2 * n_tips - 1; }
  auto num_branches() const -> int { return 2 * n_tips - 2; }
  auto root() const -> int { return 2 * n_tips - 2; }
  auto is_tip(int node) const -> bool { return node < n_tips; }

  auto tip_names() const -> std::vector<std::string> {
    return {names.begin(), names.begin() + n_tips};
  }

  auto tip_index(std::string_view name) const -> int {
    for (int i = 0; i < n_tips; ++i) {
      if (names[i] == name) { return i; }
    }
    return k_no_node;
  }

  auto annotation(int node, std::string_view key) const -> const std::string* {
    for (const auto& [k, v] : annotations[node]) {
      if (k == key) { return &v; }
    }
    return nullptr;
  }
};

namespace detail {

struct Raw_tree {
  std::vector<std::vector<int>> children;
  std::vector<std::string> names;
  std::vector<double> lengths;
  std::vector<bool> has_length;
  std::vector<Annotations> annotations;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> length_offsets;
  int root = k_no_node;

  auto add_node(std::size_t offset) -> int {
    children.emplace_back();
    names.emplace_back();
    lengths.push_back(0.0);
    has_length.push_back(false);
    annotations.emplace_back();
    offsets.push_back(offset);
    length_offsets.push_back(offset);
    return static_cast<int>(children.size()) - 1;
  }
};

class Newick_parser {
 public:
  explicit Newick_parser(std::string_view text) : text_{text} {}

  auto parse() -> Raw_tree {
    skip_space();
    // A root branch length, if present, is parsed and then ignored.
    tree_.root = parse_subtree();
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != ';') {
      throw Parse_error{"malformed Newick: expected ';'", pos_};
    }
    ++pos_;
    skip_space();
    if (pos_ != text_.size()) {
      throw Parse_error{"malformed Newick: trailing characters after ';'", pos_};
    }
    return std::move(tree_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  Raw_tree tree_;

  auto at_end() const -> bool { return pos_ >= text_.size(); }

  auto skip_space() -> void {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) { ++pos_; }
  }

  auto parse_subtree() -> int {
    skip_space();
    if (at_end()) { throw Parse_error{"malformed Newick: unexpected end of input", pos_}; }
    auto node = tree_.add_node(pos_);
    if (text_[pos_] == '(') {
      ++pos_;
      while (true) {
        auto child = parse_subtree();
        tree_.children[node].push_back(child);
        skip_space();
        if (at_end()) { throw Parse_error{"malformed Newick: unbalanced parentheses", pos_}; }
        if (text_[pos_] == ',') { ++pos_; continue; }
        if (text_[pos_] == ')') { ++pos_; break; }
        throw Parse_error{std::string{"malformed Newick: unexpected '"} + text_[pos_] + "'", pos_};
      }
    }
    skip_space();
    tree_.names[node] = parse_label();
    parse_comments_into(node);
    skip_space();
    if (!at_end() && text_[pos_] == ':') {
      ++pos_;
      auto length_offset = pos_;
      tree_.lengths[node] = parse_number();
      tree_.has_length[node] = true;
      tree_.length_offsets[node] = length_offset;
      parse_comments_into(node);
    }
    return node;
  }

  auto parse_label() -> std::string {
    if (at_end()) { return {}; }
    if (text_[pos_] == '\'') {
      auto start = pos_++;
      auto label = std::string{};
      while (true) {
        if (at_end()) { throw Parse_error{"malformed Newick: unterminated quoted label", start}; }
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            label.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        label.push_back(text_[pos_++]);
      }
      return label;
    }
    auto start = pos_;
    while (!at_end()) {
      auto c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' ||
          c == '\'' || std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      ++pos_;
    }
    return std::string{text_.substr(start, pos_ - start)};
  }

  auto parse_number() -> double {
    skip_space();
    auto start = pos_;
    while (!at_end()) {
      auto c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E') {
        ++pos_;
      } else {
        break;
      }
    }
    auto token = std::string{text_.substr(start, pos_ - start)};
    if (token.empty()) { throw Parse_error{"malformed Newick: missing branch length after ':'", start}; }
    char* end = nullptr;
    auto value = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(value)) {
      throw Parse_error{"malformed Newick: bad number '" + token + "'", start};
    }
    return value;
  }

  auto parse_comments_into(int node) -> void { parse_comments(tree_.annotations[node]); }

  auto parse_comments(Annotations& out) -> void {
    while (true) {
      skip_space();
      if (at_end() || text_[pos_] != '[') { return; }
      auto start = pos_;
      auto close = text_.find(']', pos_);
      if (close == std::string_view::npos) { throw Parse_error{"malformed Newick: unterminated comment", start}; }
      auto body = text_.substr(pos_ + 1, close - pos_ - 1);
      pos_ = close + 1;
      if (!body.empty() && body.front() == '&') { parse_annotation_body(body.substr(1), start, out); }
    }
  }

  static auto trim(std::string_view s) -> std::string_view {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) { s.remove_prefix(1); }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) { s.remove_suffix(1); }
    return s;
  }

  static auto parse_annotation_body(std::string_view body, std::size_t offset, Annotations& out) -> void {
    auto depth = 0;
    auto in_quote = false;
    auto start = std::size_t{0};
    auto flush = [&](std::size_t end) {
      auto item = trim(body.substr(start, end - start));
      if (item.empty()) { return; }
      auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        out.emplace_back(std::string{item}, std::string{});
      } else {
        out.emplace_back(std::string{trim(item.substr(0, eq))}, std::string{trim(item.substr(eq + 1))});
      }
    };
    for (auto i = std::size_t{0}; i < body.size(); ++i) {
      auto c = body[i];
      if (c == '"') { in_quote = !in_quote; }
      if (in_quote) { continue; }
      if (c == '{') { ++depth; }
      if (c == '}') { --depth; }
      if (c == ',' && depth == 0) {
        flush(i);
        start = i + 1;
      }
    }
    if (depth != 0 || in_quote) { throw Parse_error{"malformed Newick: unbalanced annotation", offset}; }
    flush(body.size());
  }
};

// Assigns indices to a validated raw tree.  Internal nodes are numbered in a
// left-child-first post-order; tips follow `tip_order` when given, else parse order.
inline auto build_indexed(const std::vector<std::array<int, 2>>& kids,
                          int root,
                          const std::vector<std::string>& names,
                          const std::vector<double>& lengths,
                          const std::vector<Annotations>& annotations,
                          std::span<const std::string> tip_order) -> Phylogeny {
  auto n_nodes = static_cast<int>(kids.size());
  auto n_tips = (n_nodes + 1) / 2;

  // Iterative post-order, left child first.
  auto post = std::vector<int>{};
  post.reserve(n_nodes);
  auto stack = std::vector<std::pair<int, bool>>{{root, false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded || kids[node][0] == k_no_node) {
      post.push_back(node);
    } else {
      stack.emplace_back(node, true);
      stack.emplace_back(kids[node][1], false);
      stack.emplace_back(kids[node][0], false);
    }
  }

  auto new_index = std::vector<int>(n_nodes, k_no_node);
  if (tip_order.empty()) {
    auto next_tip = 0;
    for (auto node : post) {
      if (kids[node][0] == k_no_node) { new_index[node] = next_tip++; }
    }
  } else {
    if (static_cast<int>(tip_order.size()) != n_tips) {
      throw Data_error{"tip order has " + std::to_string(tip_order.size()) + " names but tree has " +
                       std::to_string(n_tips) + " tips"};
    }
    auto position = std::unordered_map<std::string, int>{};
    for (int i = 0; i < n_tips; ++i) {
      if (!position.emplace(tip_order[i], i).second) {
        throw Data_error{"duplicate name '" + tip_order[i] + "' in tip order"};
      }
    }
    for (auto node : post) {
      if (kids[node][0] != k_no_node) { continue; }
      auto it = position.find(names[node]);
      if (it == position.end()) { throw Data_error{"tree tip '" + names[node] + "' missing from tip order"}; }
      new_index[node] = it->second;
    }
  }
  auto next_internal = n_tips;
  for (auto node : post) {
    if (kids[node][0] != k_no_node) { new_index[node] = next_internal++; }
  }

  auto tree = Phylogeny{};
  tree.n_tips = n_tips;
  tree.parent.assign(n_nodes, k_no_node);
  tree.children.assign(n_nodes, {k_no_node, k_no_node});
  tree.branch_length.assign(n_nodes, 0.0);
  tree.descendant_count.assign(n_nodes, 0);
  tree.names.assign(n_nodes, {});
  tree.annotations.assign(n_nodes, {});
  for (int old = 0; old < n_nodes; ++old) {
    auto i = new_index[old];
    tree.names[i] = names[old];
    tree.annotations[i] = annotations[old];
    tree.branch_length[i] = old == root ? 0.0 : lengths[old];
    if (kids[old][0] != k_no_node) {
      auto l = new_index[kids[old][0]];
      auto r = new_index[kids[old][1]];
      tree.children[i] = {l, r};
      tree.parent[l] = i;
      tree.parent[r] = i;
    }
  }
  for (int k = 0; k < n_nodes; ++k) {
    if (tree.is_tip(k)) {
      tree.descendant_count[k] = 1;
    } else {
      auto [l, r] = tree.children[k];
      tree.descendant_count[k] = tree.descendant_count[l] + tree.descendant_count[r] + (k == tree.root() ? 0 : 1);
    }
  }
  return tree;
}

}  // namespace detail

// Parses one rooted bifurcating Newick statement.  Tips are indexed in parse order;
// use index_postorder to re-index them to another order (e.g. alignment rows).
inline auto parse_newick(std::string_view text) -> Phylogeny {
  auto raw = detail::Newick_parser{text}.parse();
  auto n_nodes = static_cast<int>(raw.children.size());
  auto kids = std::vector<std::array<int, 2>>(n_nodes, {k_no_node, k_no_node});
  auto seen = std::unordered_map<std::string, int>{};
  auto n_tips = 0;
  for (int i = 0; i < n_nodes; ++i) {
    const auto& c = raw.children[i];
    if (c.size() > 2) { throw Parse_error{"polytomy: node has " + std::to_string(c.size()) + " children", raw.offsets[i]}; }
    if (c.size() == 1) { throw Parse_error{"unary node: node has a single child", raw.offsets[i]}; }
    if (c.size() == 2) { kids[i] = {c[0], c[1]}; }
    if (c.empty()) {
      ++n_tips;
      if (raw.names[i].empty()) { throw Parse_error{"unlabelled tip", raw.offsets[i]}; }
      if (!seen.emplace(raw.names[i], i).second) {
        throw Parse_error{"duplicate tip label '" + raw.names[i] + "'", raw.offsets[i]};
      }
    }
    if (i == raw.root) { continue; }
    if (!raw.has_length[i]) { throw Parse_error{"missing branch length", raw.offsets[i]}; }
    if (raw.lengths[i] < 0.0) { throw Parse_error{"negative branch length", raw.length_offsets[i]}; }
    if (raw.lengths[i] == 0.0) { throw Parse_error{"zero branch length", raw.length_offsets[i]}; }
  }
  if (n_tips < 3) { throw Parse_error{"tree must have at least 3 tips, found " + std::to_string(n_tips), 0}; }
  return detail::build_indexed(kids, raw.root, raw.names, raw.lengths, raw.annotations, {});
}

// Re-indexes a tree so that tips follow `tip_order` (parse order when empty) and
// internal nodes follow a left-first post-order.  Descendant counts are recomputed.
inline auto index_postorder(const Phylogeny& tree, std::span<const std::string> tip_order = {}) -> Phylogeny {
  return detail::build_indexed(tree.children, tree.root(), tree.names, tree.branch_length, tree.annotations,
                               tip_order);
}

// True when `ancestor` lies strictly above `node`.
inline auto is_ancestor(const Phylogeny& tree, int ancestor, int node) -> bool {
  for (auto cur = tree.parent[node]; cur != k_no_node; cur = tree.parent[cur]) {
    if (cur == ancestor) { return true; }
  }
  return false;
}

// Distance from the root to every node.
inline auto root_distances(const Phylogeny& tree) -> std::vector<double> {
  auto d = std::vector<double>(tree.num_nodes(), 0.0);
  for (auto k = tree.root() - 1; k >= 0; --k) { d[k] = d[tree.parent[k]] + tree.branch_length[k]; }
  return d;
}

inline auto is_ultrametric(const Phylogeny& tree, double rel_tol = 1e-8) -> bool {
  auto d = root_distances(tree);
  auto [lo, hi] = std::minmax_element(d.begin(), d.begin() + tree.n_tips);
  return (*hi - *lo) <= rel_tol * *hi;
}

inline auto tree_length(const Phylogeny& tree) -> double {
  auto sum = 0.0;
  for (int k = 0; k < tree.num_branches(); ++k) { sum += tree.branch_length[k]; }
  return sum;
}

// Most recent common ancestor of a set of nodes.
inline auto mrca(const Phylogeny& tree, std::span<const int> nodes) -> int {
  if (nodes.empty()) { throw Data_error{"mrca of an empty set"}; }
  auto result = nodes[0];
  for (auto other : nodes.subspan(1)) {
    while (result != other && !is_ancestor(tree, result, other)) { result = tree.parent[result]; }
  }
  return result;
}

// Branches in the subtree below `node`, including the branch above it.
inline auto clade_branches(const Phylogeny& tree, int node) -> std::vector<int> {
  auto result = std::vector<int>{};
  for (int k = 0; k <= node && k < tree.num_branches(); ++k) {
    if (k == node || is_ancestor(tree, node, k)) { result.push_back(k); }
  }
  return result;
}

namespace detail {

inline auto format_number(double x) -> std::string {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline auto quote_label(const std::string& label) -> std::string {
  auto needs_quote = label.find_first_of("()[]':;, \t\n") != std::string::npos;
  if (!needs_quote) { return label; }
  auto out = std::string{"'"};
  for (auto c : label) {
    if (c == '\'') { out += "''"; } else { out.push_back(c); }
  }
  return out + "'";
}

inline auto format_annotations(const Annotations& a) -> std::string {
  if (a.empty()) { return {}; }
  auto out = std::string{"[&"};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) { out.push_back(','); }
    out += a[i].first;
    if (!a[i].second.empty()) { out += "=" + a[i].second; }
  }
  return out + "]";
}

}  // namespace detail

// Serializes with 17 significant digits.  Node annotations are written when
// `with_annotations` is set; `extra` (one entry per node, or empty) is appended to them.
inline auto to_newick(const Phylogeny& tree, bool with_annotations = true,
                      std::span<const Annotations> extra = {}) -> std::string {
  auto out = std::string{};
  auto emit_node_suffix = [&](int node) {
    out += detail::quote_label(tree.names[node]);
    auto a = with_annotations ? tree.annotations[node] : Annotations{};
    if (!extra.empty()) { a.insert(a.end(), extra[node].begin(), extra[node].end()); }
    out += detail::format_annotations(a);
    if (node != tree.root()) { out += ":" + detail::format_number(tree.branch_length[node]); }
  };
  // Iterative to survive deep ladders.
  auto stack = std::vector<std::pair<int, int>>{{tree.root(), 0}};
  while (!stack.empty()) {
    auto& [node, state] = stack.back();
    if (tree.is_tip(node)) {
      emit_node_suffix(node);
      stack.pop_back();
      continue;
    }
    if (state == 0) {
      out.push_back('(');
      state = 1;
      stack.emplace_back(tree.children[node][0], 0);
    } else if (state == 1) {
      out.push_back(',');
      state = 2;
      stack.emplace_back(tree.children[node][1], 0);
    } else {
      out.push_back(')');
      auto done = node;
      stack.pop_back();
      emit_node_suffix(done);
    }
  }
  return out + ";";
}

}  // namespace shrinkclock
