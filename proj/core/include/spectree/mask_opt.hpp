#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spectree/token_tree.hpp"

namespace spectree {

/// Parent array of a rooted forest in creation order: parent[i] < i, or -1 for
/// a top-level node. Children are visited in index order.
struct TreeShape {
  std::vector<NodeId> parent;

  std::size_t size() const noexcept { return parent.size(); }
  std::vector<std::vector<NodeId>> children() const;
  std::vector<std::size_t> subtree_sizes() const;
  std::vector<int> depths() const;  // top-level nodes have depth 1

  /// Throws std::invalid_argument unless every parent precedes its child.
  void validate() const;
};

TreeShape shape_of(const TokenTree& tree);

/// order[k] is the original node placed at index k.
struct Permutation {
  std::vector<NodeId> order;

  static Permutation identity(std::size_t n);
  bool is_bijection() const;
  /// inverse()[node] is the new index of `node`.
  std::vector<NodeId> inverse() const;
};

bool is_topological(const TreeShape& shape, const Permutation& perm);

/// Row i may attend to column j. Columns [0, prefix_len) are the prompt; column
/// prefix_len + j is tree node j.
class TreeMask {
 public:
  TreeMask(std::size_t n, std::size_t prefix_len);

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return prefix_len_ + n_; }
  std::size_t tree_size() const noexcept { return n_; }
  std::size_t prefix_len() const noexcept { return prefix_len_; }

  bool get(std::size_t row, std::size_t col) const noexcept { return bits_[row * cols() + col] != 0; }
  void set(std::size_t row, std::size_t col, bool on) noexcept { bits_[row * cols() + col] = on ? 1 : 0; }
  std::size_t popcount() const noexcept;

  friend bool operator==(const TreeMask&, const TreeMask&) = default;

 private:
  std::size_t n_;
  std::size_t prefix_len_;
  std::vector<std::uint8_t> bits_;
};

/// Each node attends to the whole prefix, its ancestors and itself.
TreeMask mask_from_tree(const TreeShape& shape, std::size_t prefix_len);
TreeMask mask_from_tree(const TokenTree& tree, std::size_t prefix_len);

/// Number of grid-aligned block x block tiles (ragged edge tiles included)
/// holding at least one set bit. Throws when block == 0.
std::size_t count_nonzero_blocks(const TreeMask& mask, std::size_t block);

/// Same count computed from the ancestor lists without materializing the
/// mask; O(sum of depths).
std::size_t count_tree_blocks(const TreeShape& shape, const Permutation& perm, std::size_t prefix_len,
                              std::size_t block);

/// Depth-first preorder, children in sampling (index) order.
Permutation dfs_order(const TreeShape& shape);

/// Preorder visiting children by descending subtree size, ties by index
/// (heavy-path-first traversal).
Permutation hpd_order(const TreeShape& shape);

/// Mask of the tree relabelled by `perm`. Throws std::invalid_argument for a
/// non-topological permutation.
TreeMask apply_permutation(const TreeShape& shape, const Permutation& perm, std::size_t prefix_len);

/// Relabels an existing mask: rows and tree columns move together. Throws when
/// the result is not causal (some node would precede one of its ancestors).
TreeMask apply_permutation(const TreeMask& mask, const Permutation& perm);

/// Minimum block count over every topological order; only for n <= 10.
std::size_t optimal_block_count_bruteforce(const TreeShape& shape, std::size_t prefix_len, std::size_t block);

/// Uniform random attachment: node i's parent is uniform on {0, ..., i - 1}.
TreeShape random_tree(std::size_t n, std::uint64_t seed);

/// Writes the mask as rows of '0'/'1' characters.
void write_mask_grid(std::ostream& os, const TreeMask& mask);

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// softmax(Q K^T with masked entries at -inf, row-wise) V, computed densely.
Matrix dense_masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const TreeMask& mask);

struct BlockedAttentionStats {
  std::size_t tiles_total = 0;
  std::size_t tiles_computed = 0;
};

/// Tile-by-tile attention with an online softmax, skipping every all-zero
/// block x block tile. Throws when a row has no visible key.
Matrix blocked_masked_attention_reference(const Matrix& q, const Matrix& k, const Matrix& v, const TreeMask& mask,
                                          std::size_t block, BlockedAttentionStats* stats = nullptr);

}  // namespace spectree
