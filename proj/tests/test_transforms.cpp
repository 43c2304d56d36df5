#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "mctree/rewrite.hpp"
#include "mctree/transforms.hpp"
#include "support/nests.hpp"

using namespace mctree;
using testkit::chain_order;
using testkit::gemm_nest;
using testkit::perfect_nest;

namespace {

Configuration config_for(const LoopNest& nest) { return make_baseline({nest}).nests.front(); }

std::vector<std::string> compact_pragmas(const std::vector<Configuration>& children) {
  std::vector<std::string> out;
  for (const auto& c : children) out.push_back(render_pragma_compact(c.transformations.back()));
  return out;
}

template <typename T>
std::vector<Configuration> only(const std::vector<Configuration>& children) {
  std::vector<Configuration> out;
  for (const auto& c : children)
    if (std::holds_alternative<T>(c.transformations.back())) out.push_back(c);
  return out;
}

std::vector<std::string> ids(int d) {
  std::vector<std::string> out;
  for (int k = 0; k < d; ++k) out.push_back("x" + std::to_string(k));
  return out;
}

}  // namespace

TEST(Apply, TileThenInterchangeGivesBlisOrder) {
  auto tiled = apply(gemm_nest(), Tile{{"i", "j", "k"}, {448, 2048, 256}, {"i1", "j1", "k1"}, {"i2", "j2", "k2"}});
  EXPECT_EQ(chain_order(tiled), (std::vector<std::string>{"i1", "j1", "k1", "i2", "j2", "k2"}));
  EXPECT_EQ(loop_count(tiled), 6u);
  EXPECT_FALSE(contains_loop(tiled, "i"));

  auto swapped =
      apply(tiled, Interchange{{"i1", "j1", "k1", "i2", "j2"}, {"j1", "k1", "i1", "j2", "i2"}});
  EXPECT_EQ(chain_order(swapped), (std::vector<std::string>{"j1", "k1", "i1", "j2", "i2", "k2"}));
  EXPECT_EQ(find_loop(swapped, "k2").origin, LoopOrigin::Tiled);
}

TEST(Apply, PartialTileKeepsInnerLoops) {
  auto tiled = apply(gemm_nest(), Tile{{"i", "j"}, {4, 4}, {"a", "b"}, {"c", "d"}});
  EXPECT_EQ(chain_order(tiled), (std::vector<std::string>{"a", "b", "c", "d", "k"}));
  EXPECT_EQ(find_loop(tiled, "k").location->line, 3);
}

TEST(Apply, InterchangeMarksMovedLoops) {
  auto swapped = apply(gemm_nest(), Interchange{{"i", "j", "k"}, {"k", "j", "i"}});
  EXPECT_EQ(chain_order(swapped), (std::vector<std::string>{"k", "j", "i"}));
  EXPECT_EQ(find_loop(swapped, "k").origin, LoopOrigin::Interchanged);
  EXPECT_EQ(find_loop(swapped, "j").origin, LoopOrigin::Source);
}

TEST(Apply, ParallelizeSetsOnlyTheFlag) {
  auto par = apply(gemm_nest(), ParallelizeThread{"j"});
  EXPECT_TRUE(find_loop(par, "j").parallelized);
  EXPECT_FALSE(find_loop(par, "i").parallelized);
  EXPECT_EQ(chain_order(par), chain_order(gemm_nest()));
}

TEST(Apply, ApplicabilityErrors) {
  const auto nest = gemm_nest();
  EXPECT_THROW(apply(nest, Tile{{"i", "k"}, {4, 4}, {"a", "b"}, {"c", "d"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Tile{{"i"}, {1}, {"a"}, {"c"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Tile{{"i"}, {4}, {"j"}, {"c"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Tile{{"i"}, {4}, {"a"}, {"a"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Tile{{"q"}, {4}, {"a"}, {"b"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Interchange{{"i", "j"}, {"i", "j"}}), ApplicabilityError);
  EXPECT_THROW(apply(nest, Interchange{{"i", "j"}, {"j", "k"}}), ApplicabilityError);
  auto par = apply(nest, ParallelizeThread{"i"});
  EXPECT_THROW(apply(par, ParallelizeThread{"i"}), ApplicabilityError);
  EXPECT_THROW(apply(par, Tile{{"i", "j"}, {4, 4}, {"a", "b"}, {"c", "d"}}), ApplicabilityError);
  EXPECT_THROW(apply(par, Interchange{{"i", "j"}, {"j", "i"}}), ApplicabilityError);
}

TEST(Apply, NonPerfectChainIsRejected) {
  LoopNest nest = perfect_nest({"i", "j"});
  Loop extra;
  extra.id = "z";
  nest.roots[0].children.push_back(extra);
  EXPECT_THROW(apply(nest, Interchange{{"i", "j"}, {"j", "i"}}), ApplicabilityError);
  EXPECT_NO_THROW(apply(nest, Tile{{"j"}, {4}, {"a"}, {"b"}}));
}

TEST(DeriveChildren, ThreeDeepWithFiveSizes) {
  auto children = derive_children(config_for(gemm_nest()), {4, 16, 64, 256, 1024}, true);
  const auto c = tally(children);
  EXPECT_EQ(c.tilings, 190u);
  EXPECT_EQ(c.interchanges, 5u);
  EXPECT_EQ(c.parallelizations, 3u);
  EXPECT_EQ(c, count_children(3, 5, true));
}

TEST(DeriveChildren, TwoDeepWithTwoSizes) {
  auto children = derive_children(config_for(perfect_nest({"i", "j"})), {2, 4}, true);
  const auto tiles = compact_pragmas(only<Tile>(children));
  ASSERT_EQ(tiles.size(), 8u);
  const std::vector<std::string> expected_first{
      "#pragma clang loop(i) tile sizes(2)",     "#pragma clang loop(i) tile sizes(4)",
      "#pragma clang loop(i,j) tile sizes(2,2)", "#pragma clang loop(i,j) tile sizes(2,4)",
      "#pragma clang loop(i,j) tile sizes(4,2)", "#pragma clang loop(i,j) tile sizes(4,4)"};
  EXPECT_EQ(std::vector<std::string>(tiles.begin(), tiles.begin() + 6), expected_first);
  EXPECT_EQ(tiles[6], "#pragma clang loop(j) tile sizes(2)");
  EXPECT_EQ(tiles[7], "#pragma clang loop(j) tile sizes(4)");
  EXPECT_EQ(compact_pragmas(only<Interchange>(children)),
            std::vector<std::string>{"#pragma clang loop(i,j) interchange permutation(j,i)"});
  EXPECT_EQ(only<ParallelizeThread>(children).size(), 2u);
}

TEST(DeriveChildren, ThreeDeepInterchanges) {
  auto children = derive_children(config_for(gemm_nest()), {4}, false);
  EXPECT_EQ(compact_pragmas(only<Interchange>(children)),
            (std::vector<std::string>{"#pragma clang loop(i,j) interchange permutation(j,i)",
                                      "#pragma clang loop(i,j,k) interchange permutation(j,k,i)",
                                      "#pragma clang loop(i,j,k) interchange permutation(k,i,j)",
                                      "#pragma clang loop(i,j,k) interchange permutation(k,j,i)",
                                      "#pragma clang loop(j,k) interchange permutation(k,j)"}));
}

TEST(DeriveChildren, ChildOrderIsTilesInterchangesParallel) {
  auto children = derive_children(config_for(gemm_nest()), {4, 16}, true);
  int phase = 0;
  for (const auto& c : children) {
    const int kind = static_cast<int>(c.transformations.back().index());
    EXPECT_GE(kind, phase);
    phase = kind;
  }
}

// Brute force: the interchanges must reach every non-identity ordering of
// the whole nest exactly once.
TEST(DeriveChildren, InterchangesCoverEveryOrderingOnce) {
  for (int d = 1; d <= 5; ++d) {
    const auto nest_ids = ids(d);
    auto children = only<Interchange>(derive_children(config_for(perfect_nest(nest_ids)), {4}, false));
    std::set<std::vector<std::string>> orders;
    for (const auto& c : children) orders.insert(chain_order(c.result));
    EXPECT_EQ(orders.size(), children.size()) << "duplicate ordering at depth " << d;

    std::set<std::vector<std::string>> all;
    auto perm = nest_ids;
    std::sort(perm.begin(), perm.end());
    do {
      if (perm != nest_ids) all.insert(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(orders, all) << "depth " << d;
  }
}

TEST(DeriveChildren, FourDeepSingleSize) {
  auto children = derive_children(config_for(perfect_nest(ids(4))), {16}, true);
  const auto c = tally(children);
  EXPECT_EQ(c.tilings, 10u);
  EXPECT_EQ(c.interchanges, 23u);
  EXPECT_EQ(c.parallelizations, 4u);
}

TEST(CountChildren, ClosedFormMatchesEnumeration) {
  const std::vector<std::int64_t> pool{2, 4, 8, 16, 32};
  for (int d = 1; d <= 4; ++d) {
    for (int t = 1; t <= 5; ++t) {
      std::vector<std::int64_t> sizes(pool.begin(), pool.begin() + t);
      for (bool par : {false, true}) {
        auto children = derive_children(config_for(perfect_nest(ids(d))), sizes, par);
        EXPECT_EQ(tally(children), count_children(d, t, par)) << d << " " << t << " " << par;
      }
    }
  }
  EXPECT_EQ(count_children(4, 2, true), (ChildCounts{52, 23, 4}));
}

TEST(DeriveChildren, SizesAreSortedAndDeduplicated) {
  const auto base = config_for(perfect_nest({"i"}));
  EXPECT_EQ(derive_children(base, {16, 4, 16}, false), derive_children(base, {4, 16}, false));
  EXPECT_THROW(derive_children(base, {1, 4}, false), Error);
}

TEST(DeriveChildren, NoParallelizeDropsExactlyParallelChildren) {
  const auto base = config_for(gemm_nest());
  auto with = derive_children(base, {4, 16}, true);
  auto without = derive_children(base, {4, 16}, false);
  auto stripped = with;
  stripped.erase(std::remove_if(stripped.begin(), stripped.end(),
                                [](const Configuration& c) {
                                  return std::holds_alternative<ParallelizeThread>(c.transformations.back());
                                }),
                 stripped.end());
  EXPECT_EQ(stripped, without);
}

TEST(DeriveChildren, IsDeterministic) {
  const auto base = config_for(gemm_nest());
  EXPECT_EQ(derive_children(base, {4, 16, 64}, true), derive_children(base, {4, 16, 64}, true));
}

TEST(DeriveChildren, FreshIdsContinueFromTheCounter) {
  auto nests = parse_loopnests(R"({"loopnests": [{"function": "f", "loops": [
      {"location": {"file": "a.c", "line": 1, "column": 1}, "subloops": [
          {"location": {"file": "a.c", "line": 2, "column": 3}}]}]}]})");
  auto base = make_baseline(nests).nests.front();
  EXPECT_EQ(base.fresh_id_counter, 3);
  auto children = derive_children(base, {4}, false);
  const auto& t = std::get<Tile>(children[1].transformations.back());  // loop1,loop2 sizes(4,4)
  EXPECT_EQ(t.loops, (std::vector<std::string>{"loop1", "loop2"}));
  EXPECT_EQ(t.floor_ids, (std::vector<std::string>{"loop3", "loop5"}));
  EXPECT_EQ(t.tile_ids, (std::vector<std::string>{"loop4", "loop6"}));
  EXPECT_EQ(children[1].fresh_id_counter, 7);
}

TEST(DeriveChildren, TiledLoopsAreTiledAgain) {
  auto tiled = derive_children(config_for(perfect_nest({"i"})), {4}, false).front();
  auto grandchildren = derive_children(tiled, {4}, false);
  // Sub-nests of the 2-chain (f, t): {f}, {f,t}, {t} with one size each.
  EXPECT_EQ(tally(grandchildren).tilings, 3u);
  for (const auto& g : grandchildren) EXPECT_TRUE(ids_unique(g.result));
}

TEST(Replay, RebuildsTheSameConfiguration) {
  const auto nest = gemm_nest();
  auto c = config_for(nest);
  for (int step = 0; step < 3; ++step) c = derive_children(c, {4, 16}, true)[static_cast<std::size_t>(step * 7 + 1)];
  auto rebuilt = replay(nest, 0, c.transformations, initial_fresh_counter({nest}));
  EXPECT_EQ(rebuilt, c);
}

TEST(ProgramChildren, EachChildChangesOneNest) {
  auto nests = std::vector<LoopNest>{perfect_nest({"a", "b"}), perfect_nest({"c"}, "kernel.c", 10)};
  auto base = make_baseline(nests);
  auto children = derive_children(base, {4}, true);
  const auto first = derive_children(base.nests[0], {4}, true).size();
  const auto second = derive_children(base.nests[1], {4}, true).size();
  ASSERT_EQ(children.size(), first + second);
  for (std::size_t i = 0; i < children.size(); ++i) {
    const auto n = children[i].nest;
    EXPECT_EQ(n, i < first ? 0u : 1u);
    EXPECT_EQ(children[i].config.transformation_count(), 1u);
    EXPECT_EQ(children[i].config.nests[1 - n], base.nests[1 - n]);
  }
}
