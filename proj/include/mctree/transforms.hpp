#pragma once

// The three loop transformations, their structural effect on a LoopNest and
// the enumeration of every child configuration of a search-tree node.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mctree/errors.hpp"
#include "mctree/loopmodel.hpp"

namespace mctree {

struct Tile {
  std::vector<std::string> loops;  // perfect sub-nest, outermost first
  std::vector<std::int64_t> sizes;
  std::vector<std::string> floor_ids;
  std::vector<std::string> tile_ids;

  friend bool operator==(const Tile&, const Tile&) = default;
};

struct Interchange {
  std::vector<std::string> loops;        // perfect sub-nest, outermost first
  std::vector<std::string> permutation;  // new nesting order of `loops`

  friend bool operator==(const Interchange&, const Interchange&) = default;
};

struct ParallelizeThread {
  std::string loop;

  friend bool operator==(const ParallelizeThread&, const ParallelizeThread&) = default;
};

using Transformation = std::variant<Tile, Interchange, ParallelizeThread>;

/// One loop nest's transformation sequence together with the structure it
/// produces. `fresh_id_counter` is the next N for a generated `loopN` name.
struct Configuration {
  std::size_t nest_index = 0;
  std::vector<Transformation> transformations;
  LoopNest result;
  std::int64_t fresh_id_counter = 1;

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

/// A configuration of the whole program: one Configuration per loop nest.
struct ProgramConfig {
  std::vector<Configuration> nests;

  std::size_t transformation_count() const {
    std::size_t n = 0;
    for (const auto& c : nests) n += c.transformations.size();
    return n;
  }

  friend bool operator==(const ProgramConfig&, const ProgramConfig&) = default;
};

// ---------------------------------------------------------------------------
// apply

namespace detail {

/// The sibling list holding loop `id` and its index there.
inline std::pair<std::vector<Loop>*, std::size_t> locate(std::vector<Loop>& loops, const std::string& id) {
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (loops[i].id == id) return {&loops, i};
    auto found = locate(loops[i].children, id);
    if (found.first) return found;
  }
  return {nullptr, 0};
}

inline void require_transformable_chain(const LoopNest& nest, const std::vector<std::string>& ids,
                                        const char* what) {
  if (ids.empty()) throw ApplicabilityError(std::string(what) + ": no loops given");
  for (const auto& id : ids) {
    if (!contains_loop(nest, id))
      throw ApplicabilityError(std::string(what) + ": unknown loop '" + id + "'");
    if (find_loop(nest, id).parallelized)
      throw ApplicabilityError(std::string(what) + ": loop '" + id + "' is parallelized");
  }
  if (!is_perfect_chain(nest, ids))
    throw ApplicabilityError(std::string(what) + ": loops do not form a perfect loop nest");
}

/// Rebuilds the chain starting at `ids.front()` from `replacement` (outermost
/// first). The innermost original loop's children move below the last
/// replacement loop.
inline LoopNest replace_chain(const LoopNest& nest, const std::vector<std::string>& ids,
                              std::vector<Loop> replacement) {
  LoopNest out = nest;
  auto [siblings, index] = locate(out.roots, ids.front());
  Loop* innermost = &(*siblings)[index];
  for (std::size_t i = 1; i < ids.size(); ++i) innermost = &innermost->children.front();
  std::vector<Loop> body = std::move(innermost->children);

  replacement.back().children = std::move(body);
  for (std::size_t i = replacement.size() - 1; i > 0; --i)
    replacement[i - 1].children = {std::move(replacement[i])};
  (*siblings)[index] = std::move(replacement.front());
  return out;
}

inline LoopNest apply_tile(const LoopNest& nest, const Tile& t) {
  require_transformable_chain(nest, t.loops, "tile");
  const std::size_t n = t.loops.size();
  if (t.sizes.size() != n || t.floor_ids.size() != n || t.tile_ids.size() != n)
    throw ApplicabilityError("tile: loops, sizes, floor_ids and tile_ids must have equal length");
  for (auto s : t.sizes)
    if (s < 2) throw ApplicabilityError("tile: sizes must be >= 2, got " + std::to_string(s));

  std::set<std::string> fresh;
  for (const auto* ids : {&t.floor_ids, &t.tile_ids})
    for (const auto& id : *ids) {
      if (id.empty()) throw ApplicabilityError("tile: empty generated loop id");
      if (contains_loop(nest, id) || !fresh.insert(id).second)
        throw ApplicabilityError("tile: generated loop id '" + id + "' is not fresh");
    }

  std::vector<Loop> chain;
  for (const auto* ids : {&t.floor_ids, &t.tile_ids})
    for (const auto& id : *ids) chain.push_back(Loop{id, std::nullopt, {}, false, LoopOrigin::Tiled});
  return replace_chain(nest, t.loops, std::move(chain));
}

inline LoopNest apply_interchange(const LoopNest& nest, const Interchange& t) {
  require_transformable_chain(nest, t.loops, "interchange");
  if (t.permutation.size() != t.loops.size())
    throw ApplicabilityError("interchange: permutation length differs from loop count");
  auto a = t.loops, b = t.permutation;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw ApplicabilityError("interchange: permutation is not a reordering of the loops");
  if (t.loops == t.permutation) throw ApplicabilityError("interchange: identity permutation");

  std::vector<Loop> chain;
  for (std::size_t pos = 0; pos < t.permutation.size(); ++pos) {
    const Loop& original = find_loop(nest, t.permutation[pos]);
    Loop moved{original.id, original.location, {}, original.parallelized, original.origin};
    if (t.permutation[pos] != t.loops[pos]) {
      moved.location.reset();
      moved.origin = LoopOrigin::Interchanged;
    }
    chain.push_back(std::move(moved));
  }
  return replace_chain(nest, t.loops, std::move(chain));
}

inline LoopNest apply_parallelize(const LoopNest& nest, const ParallelizeThread& t) {
  if (!contains_loop(nest, t.loop))
    throw ApplicabilityError("parallelize_thread: unknown loop '" + t.loop + "'");
  LoopNest out = nest;
  auto [siblings, index] = locate(out.roots, t.loop);
  Loop& loop = (*siblings)[index];
  if (loop.parallelized)
    throw ApplicabilityError("parallelize_thread: loop '" + t.loop + "' is already parallelized");
  loop.parallelized = true;
  return out;
}

}  // namespace detail

/// Structural effect of `t` on `nest`. Throws ApplicabilityError when `t`
/// does not fit the nest's structure; semantic legality is left to the
/// compiler.
inline LoopNest apply(const LoopNest& nest, const Transformation& t) {
  return std::visit(
      [&](const auto& x) -> LoopNest {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tile>)
          return detail::apply_tile(nest, x);
        else if constexpr (std::is_same_v<T, Interchange>)
          return detail::apply_interchange(nest, x);
        else
          return detail::apply_parallelize(nest, x);
      },
      t);
}

// ---------------------------------------------------------------------------
// Configurations

/// 1 + the largest N among ids spelled `loopN`, so generated names never
/// collide with names from the loop-nest file.
inline std::int64_t initial_fresh_counter(const std::vector<LoopNest>& nests) {
  std::int64_t max_n = 0;
  for (const auto& nest : nests)
    for_each_loop(nest, [&](const Loop& l, int) {
      if (l.id.size() > 4 && l.id.compare(0, 4, "loop") == 0 &&
          std::all_of(l.id.begin() + 4, l.id.end(), [](unsigned char c) { return std::isdigit(c); }) &&
          l.id.size() < 4 + 18)
        max_n = std::max<std::int64_t>(max_n, std::stoll(l.id.substr(4)));
    });
  return max_n + 1;
}

inline ProgramConfig make_baseline(const std::vector<LoopNest>& nests) {
  ProgramConfig pc;
  const auto counter = initial_fresh_counter(nests);
  for (std::size_t i = 0; i < nests.size(); ++i) pc.nests.push_back({i, {}, nests[i], counter});
  return pc;
}

/// Appends `t`, advancing the fresh-id counter past any `loopN` it introduced.
inline Configuration extend(const Configuration& config, const Transformation& t) {
  Configuration child = config;
  child.result = apply(config.result, t);
  child.transformations.push_back(t);
  if (const auto* tile = std::get_if<Tile>(&t)) {
    std::vector<LoopNest> introduced{LoopNest{}};
    for (const auto* ids : {&tile->floor_ids, &tile->tile_ids})
      for (const auto& id : *ids) {
        Loop marker;
        marker.id = id;
        introduced.front().roots.push_back(std::move(marker));
      }
    child.fresh_id_counter = std::max(child.fresh_id_counter, initial_fresh_counter(introduced));
  }
  return child;
}

/// Rebuilds a configuration by applying `transformations` in order.
inline Configuration replay(const LoopNest& baseline, std::size_t nest_index,
                            const std::vector<Transformation>& transformations,
                            std::int64_t fresh_id_counter) {
  Configuration c{nest_index, {}, baseline, fresh_id_counter};
  for (const auto& t : transformations) c = extend(c, t);
  return c;
}

// ---------------------------------------------------------------------------
// Child derivation

namespace detail {

class FreshIds {
 public:
  FreshIds(const LoopNest& nest, std::int64_t counter) : nest_(nest), counter_(counter) {}

  std::string next() {
    std::string id;
    do {
      id = "loop" + std::to_string(counter_++);
    } while (contains_loop(nest_, id));
    return id;
  }

  std::int64_t counter() const { return counter_; }

 private:
  const LoopNest& nest_;
  std::int64_t counter_;
};

/// Odometer over tile_sizes^k in lexicographic order.
inline std::vector<std::vector<std::int64_t>> size_vectors(const std::vector<std::int64_t>& sizes,
                                                           std::size_t k) {
  std::vector<std::vector<std::int64_t>> out;
  if (sizes.empty()) return out;
  std::vector<std::size_t> idx(k, 0);
  while (true) {
    std::vector<std::int64_t> v(k);
    for (std::size_t d = 0; d < k; ++d) v[d] = sizes[idx[d]];
    out.push_back(std::move(v));
    std::size_t d = k;
    while (d > 0 && ++idx[d - 1] == sizes.size()) idx[--d] = 0;
    if (d == 0) break;
  }
  return out;
}

}  // namespace detail

/// Every child of `config`: tilings first, then interchanges, then
/// parallelizations. Sub-nests come in `perfect_subnests` order, size
/// vectors and permutations lexicographically.
///
/// A whole-nest ordering is produced exactly once: a permutation of a
/// sub-nest is emitted only if it moves both the sub-nest's first and last
/// loop; orderings that keep an end loop in place belong to a shorter
/// sub-nest.
inline std::vector<Configuration> derive_children(const Configuration& config,
                                                  const std::vector<std::int64_t>& tile_sizes,
                                                  bool enable_parallel) {
  std::vector<std::int64_t> sizes = tile_sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  for (auto s : sizes)
    if (s < 2) throw Error("tile sizes must be >= 2, got " + std::to_string(s));

  const LoopNest& nest = config.result;
  const auto subnests = perfect_subnests(nest);
  std::vector<Configuration> children;

  for (const auto& sub : subnests) {
    for (const auto& vec : detail::size_vectors(sizes, sub.loops.size())) {
      detail::FreshIds fresh(nest, config.fresh_id_counter);
      Tile t{sub.loops, vec, {}, {}};
      for (std::size_t d = 0; d < sub.loops.size(); ++d) {
        t.floor_ids.push_back(fresh.next());
        t.tile_ids.push_back(fresh.next());
      }
      Configuration child = extend(config, t);
      child.fresh_id_counter = std::max(child.fresh_id_counter, fresh.counter());
      children.push_back(std::move(child));
    }
  }

  for (const auto& sub : subnests) {
    const std::size_t m = sub.loops.size();
    if (m < 2) continue;
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    while (std::next_permutation(perm.begin(), perm.end())) {
      if (perm.front() == 0 || perm.back() == m - 1) continue;
      Interchange t{sub.loops, {}};
      for (auto p : perm) t.permutation.push_back(sub.loops[p]);
      children.push_back(extend(config, t));
    }
  }

  if (enable_parallel) {
    for_each_loop(nest, [&](const Loop& l, int) {
      if (!l.parallelized) children.push_back(extend(config, ParallelizeThread{l.id}));
    });
  }
  return children;
}

/// A derived program configuration together with the nest it changed.
struct ProgramChild {
  std::size_t nest = 0;
  ProgramConfig config;
};

/// Children of a program configuration: each changes exactly one nest, in
/// nest order.
inline std::vector<ProgramChild> derive_children(const ProgramConfig& config,
                                                 const std::vector<std::int64_t>& tile_sizes,
                                                 bool enable_parallel) {
  std::vector<ProgramChild> out;
  for (std::size_t n = 0; n < config.nests.size(); ++n) {
    for (auto& c : derive_children(config.nests[n], tile_sizes, enable_parallel)) {
      ProgramChild child{n, config};
      child.config.nests[n] = std::move(c);
      out.push_back(std::move(child));
    }
  }
  return out;
}

struct ChildCounts {
  std::uint64_t tilings = 0;
  std::uint64_t interchanges = 0;
  std::uint64_t parallelizations = 0;

  std::uint64_t total() const { return tilings + interchanges + parallelizations; }
  friend bool operator==(const ChildCounts&, const ChildCounts&) = default;
};

/// Closed-form child counts for an untransformed perfect nest of `depth` loops.
inline ChildCounts count_children(int depth, int num_tile_sizes, bool enable_parallel) {
  ChildCounts c;
  std::uint64_t power = 1;
  for (int k = 1; k <= depth; ++k) {
    power *= static_cast<std::uint64_t>(num_tile_sizes);
    c.tilings += static_cast<std::uint64_t>(depth - k + 1) * power;
  }
  std::uint64_t factorial = 1;
  for (int k = 2; k <= depth; ++k) factorial *= static_cast<std::uint64_t>(k);
  c.interchanges = depth >= 1 ? factorial - 1 : 0;
  c.parallelizations = enable_parallel && depth > 0 ? static_cast<std::uint64_t>(depth) : 0;
  return c;
}

/// Classifies a list of children by transformation kind.
inline ChildCounts tally(const std::vector<Configuration>& children) {
  ChildCounts c;
  for (const auto& child : children) {
    const auto& t = child.transformations.back();
    if (std::holds_alternative<Tile>(t))
      ++c.tilings;
    else if (std::holds_alternative<Interchange>(t))
      ++c.interchanges;
    else
      ++c.parallelizations;
  }
  return c;
}

}  // namespace mctree
