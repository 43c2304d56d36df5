#pragma once

// Loop-nest structure and the canonical loop-nest JSON format.
//
// Schema:
//   {"loopnests": [{"function": <string>, "loops": [LOOP...]}]}
//   LOOP = {"id": <string, optional>,
//           "location": {"file": <string>, "line": <int>, "column": <int>},
//           "subloops": [LOOP...]}

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctree/errors.hpp"

namespace mctree {

struct SourceLocation {
  std::string file;
  int line = 1;    // 1-based
  int column = 1;  // 1-based

  friend bool operator==(const SourceLocation&, const SourceLocation&) = default;
};

enum class LoopOrigin { Source, Tiled, Interchanged };

struct Loop {
  std::string id;
  std::optional<SourceLocation> location;  // only for loops from the source file
  std::vector<Loop> children;
  bool parallelized = false;
  LoopOrigin origin = LoopOrigin::Source;

  friend bool operator==(const Loop&, const Loop&) = default;
};

struct LoopNest {
  std::string function;
  std::vector<Loop> roots;

  friend bool operator==(const LoopNest&, const LoopNest&) = default;
};

/// Chain of loop ids, outermost first, where every loop but the last has the
/// next one as its only child.
struct PerfectSubNest {
  std::vector<std::string> loops;

  friend bool operator==(const PerfectSubNest&, const PerfectSubNest&) = default;
};

// ---------------------------------------------------------------------------
// Traversal

template <typename Fn>
void for_each_loop(const std::vector<Loop>& loops, Fn&& fn, int depth = 0) {
  for (const Loop& loop : loops) {
    fn(loop, depth);
    for_each_loop(loop.children, fn, depth + 1);
  }
}

/// Preorder visit of every loop with its depth (roots have depth 0).
template <typename Fn>
void for_each_loop(const LoopNest& nest, Fn&& fn) {
  for_each_loop(nest.roots, std::forward<Fn>(fn), 0);
}

inline std::size_t loop_count(const LoopNest& nest) {
  std::size_t n = 0;
  for_each_loop(nest, [&](const Loop&, int) { ++n; });
  return n;
}

inline std::vector<std::string> loop_ids(const LoopNest& nest) {
  std::vector<std::string> ids;
  for_each_loop(nest, [&](const Loop& l, int) { ids.push_back(l.id); });
  return ids;
}

inline bool ids_unique(const LoopNest& nest) {
  auto ids = loop_ids(nest);
  std::set<std::string> unique(ids.begin(), ids.end());
  return unique.size() == ids.size();
}

namespace detail {

inline const Loop* find_loop_ptr(const std::vector<Loop>& loops, const std::string& id) {
  for (const Loop& l : loops) {
    if (l.id == id) return &l;
    if (const Loop* found = find_loop_ptr(l.children, id)) return found;
  }
  return nullptr;
}

inline Loop* find_loop_ptr(std::vector<Loop>& loops, const std::string& id) {
  return const_cast<Loop*>(find_loop_ptr(std::as_const(loops), id));
}

}  // namespace detail

inline bool contains_loop(const LoopNest& nest, const std::string& id) {
  return detail::find_loop_ptr(nest.roots, id) != nullptr;
}

inline const Loop& find_loop(const LoopNest& nest, const std::string& id) {
  if (const Loop* l = detail::find_loop_ptr(nest.roots, id)) return *l;
  throw LookupError("no loop with id '" + id + "' in function '" + nest.function + "'");
}

/// Source-located loops in preorder.
inline std::vector<const Loop*> source_loops(const LoopNest& nest) {
  std::vector<const Loop*> out;
  for_each_loop(nest, [&](const Loop& l, int) {
    if (l.location) out.push_back(&l);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Perfect sub-nests

/// For every non-parallelized loop (preorder), the chain extending downward
/// through single children, reported once per length, shortest first. A
/// parallelized loop ends a chain since it can no longer be transformed.
inline std::vector<PerfectSubNest> perfect_subnests(const LoopNest& nest) {
  std::vector<PerfectSubNest> out;
  for_each_loop(nest, [&](const Loop& start, int) {
    if (start.parallelized) return;
    std::vector<std::string> chain{start.id};
    const Loop* cur = &start;
    while (cur->children.size() == 1 && !cur->children.front().parallelized) {
      cur = &cur->children.front();
      chain.push_back(cur->id);
    }
    for (std::size_t len = 1; len <= chain.size(); ++len)
      out.push_back({{chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(len)}});
  });
  return out;
}

/// True iff `ids` names a chain of `nest` where each loop but the last has
/// exactly one child, the next id.
inline bool is_perfect_chain(const LoopNest& nest, const std::vector<std::string>& ids) {
  if (ids.empty()) return false;
  const Loop* cur = detail::find_loop_ptr(nest.roots, ids.front());
  if (!cur) return false;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (cur->children.size() != 1 || cur->children.front().id != ids[i]) return false;
    cur = &cur->children.front();
  }
  return true;
}

// ---------------------------------------------------------------------------
// JSON ingestion

namespace detail {

struct RawLoop {
  std::optional<std::string> id;
  SourceLocation location;
  std::vector<RawLoop> subloops;
};

inline std::string describe(const nlohmann::json& j) {
  std::string s = j.dump();
  if (s.size() > 60) s = s.substr(0, 57) + "...";
  return s;
}

inline RawLoop read_raw_loop(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": loop must be an object, got " + describe(j));
  RawLoop raw;
  std::string name = path;
  if (auto it = j.find("id"); it != j.end()) {
    if (!it->is_string() || it->get<std::string>().empty())
      throw ValidationError(path + ": \"id\" must be a nonempty string");
    raw.id = it->get<std::string>();
    name = "loop '" + *raw.id + "'";
  }
  auto loc = j.find("location");
  if (loc == j.end() || !loc->is_object())
    throw ValidationError(name + ": missing \"location\" object");
  auto file = loc->find("file");
  auto line = loc->find("line");
  auto column = loc->find("column");
  if (file == loc->end() || !file->is_string() || file->get<std::string>().empty())
    throw ValidationError(name + ": location.file must be a nonempty string");
  if (line == loc->end() || !line->is_number_integer() || line->get<std::int64_t>() < 1)
    throw ValidationError(name + ": location.line must be an integer >= 1");
  if (column == loc->end() || !column->is_number_integer() || column->get<std::int64_t>() < 1)
    throw ValidationError(name + ": location.column must be an integer >= 1");
  raw.location = {file->get<std::string>(), line->get<int>(), column->get<int>()};

  if (auto sub = j.find("subloops"); sub != j.end()) {
    if (!sub->is_array()) throw ValidationError(name + ": \"subloops\" must be an array");
    for (std::size_t i = 0; i < sub->size(); ++i)
      raw.subloops.push_back(read_raw_loop((*sub)[i], path + ".subloops[" + std::to_string(i) + "]"));
  }
  return raw;
}

inline void sort_by_position(std::vector<RawLoop>& loops) {
  std::stable_sort(loops.begin(), loops.end(), [](const RawLoop& a, const RawLoop& b) {
    return std::tie(a.location.line, a.location.column) < std::tie(b.location.line, b.location.column);
  });
  for (RawLoop& l : loops) sort_by_position(l.subloops);
}

inline void collect_explicit_ids(const std::vector<RawLoop>& loops, std::set<std::string>& out) {
  for (const RawLoop& l : loops) {
    if (l.id) out.insert(*l.id);
    collect_explicit_ids(l.subloops, out);
  }
}

class IdAssigner {
 public:
  explicit IdAssigner(std::set<std::string> reserved) : reserved_(std::move(reserved)) {}

  std::string next() {
    std::string id;
    do {
      id = "loop" + std::to_string(counter_++);
    } while (reserved_.count(id));
    return id;
  }

 private:
  std::set<std::string> reserved_;
  int counter_ = 1;
};

inline Loop build_loop(const RawLoop& raw, IdAssigner& ids) {
  Loop loop;
  loop.id = raw.id ? *raw.id : ids.next();
  loop.location = raw.location;
  loop.origin = LoopOrigin::Source;
  for (const RawLoop& sub : raw.subloops) loop.children.push_back(build_loop(sub, ids));
  return loop;
}

inline void check_nest(const LoopNest& nest) {
  std::set<std::string> seen;
  std::set<std::tuple<std::string, int, int>> positions;
  for_each_loop(nest, [&](const Loop& l, int) {
    if (!seen.insert(l.id).second)
      throw ValidationError("duplicate loop id '" + l.id + "' in function '" + nest.function + "'");
    if (l.location) {
      const auto& loc = *l.location;
      if (!positions.emplace(loc.file, loc.line, loc.column).second)
        throw ValidationError("loop '" + l.id + "' shares its source position " + loc.file + ":" +
                              std::to_string(loc.line) + ":" + std::to_string(loc.column) +
                              " with another loop");
    }
  });
}

inline nlohmann::json loop_to_json(const Loop& loop) {
  nlohmann::json j;
  j["id"] = loop.id;
  if (loop.location)
    j["location"] = {{"file", loop.location->file},
                     {"line", loop.location->line},
                     {"column", loop.location->column}};
  j["subloops"] = nlohmann::json::array();
  for (const Loop& c : loop.children) j["subloops"].push_back(loop_to_json(c));
  return j;
}

}  // namespace detail

/// Builds loop nests from an already-parsed JSON document.
inline std::vector<LoopNest> loopnests_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("loopnests") || !doc["loopnests"].is_array())
    throw ValidationError("top level must be an object with a \"loopnests\" array");

  std::vector<std::pair<std::string, std::vector<detail::RawLoop>>> raw_nests;
  std::set<std::string> explicit_ids;
  const auto& entries = doc["loopnests"];
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const auto& e = entries[n];
    const std::string path = "loopnests[" + std::to_string(n) + "]";
    if (!e.is_object()) throw ValidationError(path + ": entry must be an object");
    auto fn = e.find("function");
    if (fn == e.end() || !fn->is_string()) throw ValidationError(path + ": missing \"function\" string");
    auto loops = e.find("loops");
    if (loops == e.end() || !loops->is_array()) throw ValidationError(path + ": missing \"loops\" array");
    std::vector<detail::RawLoop> roots;
    for (std::size_t i = 0; i < loops->size(); ++i)
      roots.push_back(detail::read_raw_loop((*loops)[i], path + ".loops[" + std::to_string(i) + "]"));
    detail::sort_by_position(roots);
    detail::collect_explicit_ids(roots, explicit_ids);
    raw_nests.emplace_back(fn->get<std::string>(), std::move(roots));
  }

  // Unnamed loops are numbered across the whole document so generated names
  // never clash between functions.
  detail::IdAssigner ids(explicit_ids);
  std::vector<LoopNest> nests;
  for (const auto& [function, roots] : raw_nests) {
    LoopNest nest{function, {}};
    for (const auto& r : roots) nest.roots.push_back(detail::build_loop(r, ids));
    detail::check_nest(nest);
    nests.push_back(std::move(nest));
  }
  return nests;
}

inline std::vector<LoopNest> parse_loopnests(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed loop-nest JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  return loopnests_from_json(doc);
}

inline nlohmann::json loopnests_to_json(const std::vector<LoopNest>& nests) {
  nlohmann::json doc;
  doc["loopnests"] = nlohmann::json::array();
  for (const LoopNest& nest : nests) {
    nlohmann::json entry;
    entry["function"] = nest.function;
    entry["loops"] = nlohmann::json::array();
    for (const Loop& l : nest.roots) entry["loops"].push_back(detail::loop_to_json(l));
    doc["loopnests"].push_back(std::move(entry));
  }
  return doc;
}

inline std::string serialize_loopnests(const std::vector<LoopNest>& nests) {
  return loopnests_to_json(nests).dump(2);
}

}  // namespace mctree
