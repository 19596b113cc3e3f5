#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spectree/construct.hpp"
#include "spectree/mask_opt.hpp"
#include "test_support.hpp"

namespace spectree {
namespace {

using testing::Gen;

TreeShape chain_shape(std::size_t n) {
  TreeShape s;
  for (std::size_t i = 0; i < n; ++i) s.parent.push_back(static_cast<NodeId>(i) - 1);
  return s;
}

TreeShape star_shape(std::size_t n) {
  TreeShape s{{-1}};
  for (std::size_t i = 1; i < n; ++i) s.parent.push_back(0);
  return s;
}

// Independent mask oracle: walk parents explicitly for every (row, col).
bool attends(const TreeShape& s, std::size_t row, std::size_t node) {
  for (NodeId cur = static_cast<NodeId>(row); cur != -1; cur = s.parent[static_cast<std::size_t>(cur)]) {
    if (cur == static_cast<NodeId>(node)) return true;
  }
  return false;
}

// Independent block count: scan each tile cell by cell.
std::size_t scan_blocks(const TreeMask& m, std::size_t block) {
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 < m.rows(); r0 += block) {
    for (std::size_t c0 = 0; c0 < m.cols(); c0 += block) {
      bool any = false;
      for (std::size_t r = r0; r < std::min(r0 + block, m.rows()) && !any; ++r) {
        for (std::size_t c = c0; c < std::min(c0 + block, m.cols()) && !any; ++c) any = m.get(r, c);
      }
      count += any ? 1 : 0;
    }
  }
  return count;
}

TEST(TreeMask, ChainIsLowerTriangular) {
  const auto m = mask_from_tree(chain_shape(4), 0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m.get(r, c), c <= r);
  }
}

TEST(TreeMask, StarSeesRootAndSelf) {
  const auto m = mask_from_tree(star_shape(4), 2);
  EXPECT_EQ(m.cols(), 6u);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_TRUE(m.get(r, 0));
    EXPECT_TRUE(m.get(r, 1));
    EXPECT_TRUE(m.get(r, 2));
    for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(m.get(r, 2 + j), j == r);
  }
}

TEST(TreeMask, MatchesTheAncestorWalk) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_tree(40, seed);
    const auto m = mask_from_tree(s, 3);
    for (std::size_t r = 0; r < 40; ++r) {
      for (std::size_t c = 0; c < 3; ++c) ASSERT_TRUE(m.get(r, c));
      for (std::size_t j = 0; j < 40; ++j) ASSERT_EQ(m.get(r, 3 + j), attends(s, r, j));
    }
  }
}

TEST(TreeMask, FromTokenTreeUsesParentLinks) {
  TokenTree tree;
  tree.set_position(kRootId, Categorical({0.5, 0.5}));
  const NodeId a = tree.add_node(kRootId, 0, 1.0);
  tree.add_node(kRootId, 1, 0.5);
  tree.set_position(a, Categorical({0.5, 0.5}));
  tree.add_node(a, 1, 0.5);
  EXPECT_EQ(shape_of(tree).parent, (std::vector<NodeId>{-1, -1, 0}));
  EXPECT_EQ(mask_from_tree(tree, 1), mask_from_tree(shape_of(tree), 1));
}

TEST(BlockCount, ChainAndStarExamples) {
  EXPECT_EQ(count_nonzero_blocks(mask_from_tree(chain_shape(64), 0), 32), 3u);
  EXPECT_EQ(count_nonzero_blocks(mask_from_tree(star_shape(64), 0), 32), 3u);
  EXPECT_EQ(count_nonzero_blocks(mask_from_tree(chain_shape(5), 0), 1), 15u);
  EXPECT_THROW(count_nonzero_blocks(mask_from_tree(chain_shape(5), 0), 0), std::invalid_argument);
}

TEST(BlockCount, RaggedEdgesCount) {
  // 3 nodes, block 2: tiles (0,0), (1,0) and (1,1) are non-empty.
  EXPECT_EQ(count_nonzero_blocks(mask_from_tree(chain_shape(3), 0), 2), 3u);
}

TEST(BlockCountProperty, FastCountMatchesTheMaterializedMask) {
  Gen gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_tree(gen.range(1, 200), gen.next_seed());
    const std::size_t prefix = gen.range(0, 40);
    const std::size_t block = gen.range(1, 33);
    for (const auto& perm : {Permutation::identity(s.size()), dfs_order(s), hpd_order(s)}) {
      const auto m = apply_permutation(s, perm, prefix);
      const std::size_t want = scan_blocks(m, block);
      ASSERT_EQ(count_nonzero_blocks(m, block), want);
      ASSERT_EQ(count_tree_blocks(s, perm, prefix, block), want);
    }
  }
}

TEST(Orders, DfsAndHpdExamples) {
  // 0 -> {1, 2}, 2 -> {3}; node 2 carries the larger subtree.
  const TreeShape s{{-1, 0, 0, 2}};
  EXPECT_EQ(dfs_order(s).order, (std::vector<NodeId>{0, 1, 2, 3}));
  EXPECT_EQ(hpd_order(s).order, (std::vector<NodeId>{0, 2, 3, 1}));
  // A forest: top-level nodes are visited in index order for dfs.
  const TreeShape forest{{-1, -1, 0}};
  EXPECT_EQ(dfs_order(forest).order, (std::vector<NodeId>{0, 2, 1}));
  EXPECT_EQ(hpd_order(forest).order, (std::vector<NodeId>{0, 2, 1}));
}

TEST(Orders, AreTopologicalBijections) {
  Gen gen(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_tree(gen.range(1, 300), gen.next_seed());
    for (const auto& p : {dfs_order(s), hpd_order(s)}) {
      EXPECT_TRUE(p.is_bijection());
      EXPECT_TRUE(is_topological(s, p));
    }
  }
}

TEST(Permutation, InverseAndValidation) {
  const Permutation p{{2, 0, 1}};
  EXPECT_EQ(p.inverse(), (std::vector<NodeId>{1, 2, 0}));
  EXPECT_FALSE((Permutation{{0, 0, 1}}).is_bijection());
  EXPECT_THROW(apply_permutation(chain_shape(3), Permutation{{1, 0, 2}}, 0), std::invalid_argument);
  EXPECT_THROW(apply_permutation(mask_from_tree(chain_shape(3), 0), Permutation{{1, 0, 2}}), std::invalid_argument);
}

TEST(PermutationProperty, RelabellingPreservesTheAttendRelation) {
  Gen gen(7);
  for (int trial = 0; trial < 60; ++trial) {
    const auto s = random_tree(gen.range(1, 80), gen.next_seed());
    const std::size_t prefix = gen.range(0, 5);
    const auto original = mask_from_tree(s, prefix);
    const auto perm = trial % 2 == 0 ? dfs_order(s) : hpd_order(s);
    const auto moved = apply_permutation(s, perm, prefix);
    EXPECT_EQ(moved, apply_permutation(original, perm));
    EXPECT_EQ(moved.popcount(), original.popcount());
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        const auto pi = static_cast<std::size_t>(perm.order[i]);
        const auto pj = static_cast<std::size_t>(perm.order[j]);
        ASSERT_EQ(moved.get(i, prefix + j), original.get(pi, prefix + pj));
      }
    }
  }
}

TEST(BruteForceOrder, IsALowerBoundAndReachedOnSmallExamples) {
  EXPECT_EQ(optimal_block_count_bruteforce(chain_shape(4), 0, 2), 3u);
  Gen gen(8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = random_tree(gen.range(1, 9), gen.next_seed());
    const std::size_t block = gen.range(1, 4);
    const std::size_t prefix = gen.range(0, 3);
    const std::size_t best = optimal_block_count_bruteforce(s, prefix, block);
    EXPECT_LE(best, count_tree_blocks(s, dfs_order(s), prefix, block));
    EXPECT_LE(best, count_tree_blocks(s, hpd_order(s), prefix, block));
    EXPECT_LE(best, count_tree_blocks(s, Permutation::identity(s.size()), prefix, block));
  }
  EXPECT_THROW(optimal_block_count_bruteforce(chain_shape(11), 0, 2), std::invalid_argument);
}

TEST(RandomTree, UniformAttachment) {
  const auto s = random_tree(1, 0);
  EXPECT_EQ(s.parent, (std::vector<NodeId>{-1}));
  EXPECT_EQ(random_tree(50, 3).parent, random_tree(50, 3).parent);
  EXPECT_NO_THROW(random_tree(500, 4).validate());
  EXPECT_THROW(random_tree(0, 0), std::invalid_argument);
}

TEST(RandomTree, MeanDepthIsLogarithmic) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto depths = random_tree(1024, seed).depths();
    double mean = 0.0;
    for (int d : depths) mean += d;
    mean /= static_cast<double>(depths.size());
    EXPECT_GE(mean, 5.0);
    EXPECT_LE(mean, 25.0);
  }
}

TEST(TreeShape, SizesAndDepths) {
  const TreeShape s{{-1, 0, 0, 2}};
  EXPECT_EQ(s.subtree_sizes(), (std::vector<std::size_t>{4, 1, 2, 1}));
  EXPECT_EQ(s.depths(), (std::vector<int>{1, 2, 2, 3}));
  EXPECT_THROW((TreeShape{{-1, 2, 0}}).validate(), std::invalid_argument);
}

TEST(MaskGrid, WritesRowsOfBits) {
  std::ostringstream os;
  write_mask_grid(os, mask_from_tree(star_shape(3), 1));
  EXPECT_EQ(os.str(), "1100\n1110\n1101\n");
}

TEST(BlockedAttention, MatchesDenseAndSkipsEmptyTiles) {
  Gen gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_tree(gen.range(1, 120), gen.next_seed());
    const std::size_t prefix = gen.range(0, 20);
    const std::size_t block = gen.range(1, 40);
    const auto mask = apply_permutation(s, hpd_order(s), prefix);
    const auto q = random_matrix(mask.rows(), 8, gen.next_seed());
    const auto k = random_matrix(mask.cols(), 8, gen.next_seed());
    const auto v = random_matrix(mask.cols(), 5, gen.next_seed());
    BlockedAttentionStats stats;
    const auto dense = dense_masked_attention(q, k, v, mask);
    const auto blocked = blocked_masked_attention_reference(q, k, v, mask, block, &stats);
    ASSERT_EQ(blocked.data.size(), dense.data.size());
    for (std::size_t i = 0; i < dense.data.size(); ++i) ASSERT_NEAR(blocked.data[i], dense.data[i], 1e-12);
    EXPECT_EQ(stats.tiles_computed, count_nonzero_blocks(mask, block));
    const auto up = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    EXPECT_EQ(stats.tiles_total, up(mask.rows(), block) * up(mask.cols(), block));
  }
}

TEST(BlockedAttention, ShapeErrors) {
  const auto mask = mask_from_tree(chain_shape(4), 0);
  const auto q = random_matrix(4, 2, 0);
  const auto k = random_matrix(4, 2, 1);
  EXPECT_THROW(dense_masked_attention(random_matrix(3, 2, 0), k, k, mask), std::invalid_argument);
  EXPECT_THROW(dense_masked_attention(q, random_matrix(4, 3, 0), k, mask), std::invalid_argument);
  EXPECT_THROW(blocked_masked_attention_reference(q, k, k, mask, 0), std::invalid_argument);
}

}  // namespace
}  // namespace spectree
