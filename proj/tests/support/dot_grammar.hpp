#pragma once

// A small recursive-descent parser for the DOT language, written from the
// published grammar and independent of the exporter. It accepts the full
// statement syntax (attribute, node, edge, assignment and subgraph
// statements; quoted, numeral and HTML ids; ports) and collects nodes,
// edges and attributes so tests can inspect what a renderer would see.

#include <cctype>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mctree::testkit {

struct DotGraph {
  bool directed = false;
  bool strict = false;
  std::string name;
  std::map<std::string, std::map<std::string, std::string>> nodes;  // in order of first mention: see node_order
  std::vector<std::string> node_order;
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, std::string> graph_attrs;
};

class DotSyntaxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DotParser {
 public:
  explicit DotParser(std::string text) : s_(std::move(text)) {}

  DotGraph parse() {
    DotGraph g;
    skip();
    if (keyword("strict")) g.strict = true;
    if (keyword("digraph"))
      g.directed = true;
    else if (!keyword("graph"))
      fail("expected 'graph' or 'digraph'");
    if (!peek('{')) g.name = id();
    expect('{');
    stmt_list(g);
    expect('}');
    skip();
    if (pos_ != s_.size()) fail("trailing input");
    return g;
  }

 private:
  using Attrs = std::map<std::string, std::string>;

  [[noreturn]] void fail(const std::string& what) const {
    throw DotSyntaxError(what + " at offset " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (s_.compare(pos_, 2, "//") == 0 || (c == '#' && at_line_start())) {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (s_.compare(pos_, 2, "/*") == 0) {
        const auto end = s_.find("*/", pos_ + 2);
        if (end == std::string::npos) fail("unterminated comment");
        pos_ = end + 2;
      } else {
        break;
      }
    }
  }

  bool at_line_start() const {
    std::size_t p = pos_;
    while (p > 0 && (s_[p - 1] == ' ' || s_[p - 1] == '\t')) --p;
    return p == 0 || s_[p - 1] == '\n';
  }

  bool peek(char c) {
    skip();
    return pos_ < s_.size() && s_[pos_] == c;
  }

  bool accept(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  bool keyword(const char* kw) {
    skip();
    const std::string k = kw;
    if (s_.size() - pos_ < k.size()) return false;
    for (std::size_t i = 0; i < k.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(s_[pos_ + i])) != k[i]) return false;
    if (pos_ + k.size() < s_.size() && ident_char(s_[pos_ + k.size()])) return false;
    pos_ += k.size();
    return true;
  }

  bool at_edge_op() {
    skip();
    return s_.compare(pos_, 2, "->") == 0 || s_.compare(pos_, 2, "--") == 0;
  }

  bool at_id() {
    skip();
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    if (c == '"' || c == '<' || ident_char(c) || static_cast<unsigned char>(c) >= 0x80) return true;
    return (c == '-' || c == '.') && !at_edge_op();
  }

  std::string id() {
    skip();
    if (pos_ >= s_.size()) fail("expected an id");
    const char c = s_[pos_];
    if (c == '"') {
      std::string out;
      ++pos_;
      while (true) {
        if (pos_ >= s_.size()) fail("unterminated string");
        const char d = s_[pos_++];
        if (d == '"') break;
        if (d == '\\' && pos_ < s_.size()) {
          const char e = s_[pos_++];
          if (e == '"') {
            out += '"';
          } else if (e == '\n') {
            // line continuation
          } else {
            out += '\\';
            out += e;
          }
          continue;
        }
        out += d;
      }
      // "a" + "b" concatenation
      if (accept('+')) out += id();
      return out;
    }
    if (c == '<') {
      int depth = 0;
      const std::size_t start = pos_;
      do {
        if (pos_ >= s_.size()) fail("unterminated HTML string");
        if (s_[pos_] == '<') ++depth;
        if (s_[pos_] == '>') --depth;
        ++pos_;
      } while (depth > 0);
      return s_.substr(start, pos_ - start);
    }
    const std::size_t start = pos_;
    if (c == '-' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) {
      if (s_[pos_] == '-') ++pos_;
      bool digits = false, dot = false;
      while (pos_ < s_.size()) {
        const char d = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(d))) {
          digits = true;
        } else if (d == '.' && !dot) {
          dot = true;
        } else {
          break;
        }
        ++pos_;
      }
      if (!digits) fail("malformed numeral");
      if (pos_ < s_.size() && ident_char(s_[pos_])) fail("identifier may not start with a digit");
      return s_.substr(start, pos_ - start);
    }
    while (pos_ < s_.size() && (ident_char(s_[pos_]) || static_cast<unsigned char>(s_[pos_]) >= 0x80)) ++pos_;
    if (pos_ == start) fail("expected an id");
    return s_.substr(start, pos_ - start);
  }

  void attr_list(Attrs& into) {
    while (accept('[')) {
      while (!peek(']')) {
        const auto key = id();
        expect('=');
        into[key] = id();
        if (!accept(',')) accept(';');
      }
      expect(']');
    }
  }

  std::string node_id() {
    auto name = id();
    if (accept(':')) {
      id();
      if (accept(':')) id();
    }
    return name;
  }

  void touch(DotGraph& g, const std::string& n, const Attrs& attrs = {}) {
    if (!g.nodes.count(n)) g.node_order.push_back(n);
    auto& a = g.nodes[n];
    for (const auto& [k, v] : attrs) a[k] = v;
  }

  // Returns the nodes of an edge endpoint (a node or a subgraph).
  std::vector<std::string> endpoint(DotGraph& g) {
    skip();
    if (keyword("subgraph") || peek('{')) {
      if (!peek('{')) id();
      expect('{');
      const auto before = g.node_order.size();
      stmt_list(g);
      expect('}');
      return {g.node_order.begin() + static_cast<long>(before), g.node_order.end()};
    }
    auto n = node_id();
    touch(g, n);
    return {n};
  }

  void stmt(DotGraph& g) {
    if (keyword("graph")) {
      attr_list(g.graph_attrs);
      return;
    }
    if (keyword("node") || keyword("edge")) {
      Attrs ignored;
      attr_list(ignored);
      return;
    }
    // Remember where the statement starts to tell `a = b` from a node.
    const auto start = pos_;
    if (at_id()) {
      auto first = id();
      if (accept('=')) {
        g.graph_attrs[first] = id();
        return;
      }
      pos_ = start;
    }
    auto left = endpoint(g);
    if (!at_edge_op()) {
      Attrs attrs;
      attr_list(attrs);
      if (left.size() == 1) touch(g, left.front(), attrs);
      return;
    }
    while (at_edge_op()) {
      const bool arrow = s_[pos_ + 1] == '>';
      if (arrow != g.directed) fail(arrow ? "'->' in an undirected graph" : "'--' in a directed graph");
      pos_ += 2;
      auto right = endpoint(g);
      for (const auto& a : left)
        for (const auto& b : right) g.edges.emplace_back(a, b);
      left = std::move(right);
    }
    Attrs ignored;
    attr_list(ignored);
  }

  void stmt_list(DotGraph& g) {
    while (!peek('}')) {
      if (pos_ >= s_.size()) fail("unexpected end of input");
      stmt(g);
      accept(';');
    }
  }

  std::string s_;
  std::size_t pos_ = 0;
};

inline DotGraph parse_dot(const std::string& text) { return DotParser(text).parse(); }

}  // namespace mctree::testkit
