#include "spectree/mask_opt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "spectree/random.hpp"

namespace spectree {

std::vector<std::vector<NodeId>> TreeShape::children() const {
  std::vector<std::vector<NodeId>> kids(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] >= 0) kids[static_cast<std::size_t>(parent[i])].push_back(static_cast<NodeId>(i));
  }
  return kids;
}

std::vector<std::size_t> TreeShape::subtree_sizes() const {
  std::vector<std::size_t> sizes(parent.size(), 1);
  for (std::size_t i = parent.size(); i-- > 0;) {
    if (parent[i] >= 0) sizes[static_cast<std::size_t>(parent[i])] += sizes[i];
  }
  return sizes;
}

std::vector<int> TreeShape::depths() const {
  std::vector<int> d(parent.size(), 1);
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] >= 0) d[i] = d[static_cast<std::size_t>(parent[i])] + 1;
  }
  return d;
}

void TreeShape::validate() const {
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] < -1 || parent[i] >= static_cast<NodeId>(i)) {
      throw std::invalid_argument("TreeShape: parent must precede child");
    }
  }
}

TreeShape shape_of(const TokenTree& tree) {
  TreeShape shape;
  shape.parent.reserve(tree.size());
  for (const TreeNode& n : tree.nodes()) shape.parent.push_back(n.parent);
  return shape;
}

Permutation Permutation::identity(std::size_t n) {
  Permutation p;
  p.order.resize(n);
  std::iota(p.order.begin(), p.order.end(), 0);
  return p;
}

bool Permutation::is_bijection() const {
  std::vector<bool> seen(order.size(), false);
  for (NodeId v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= order.size() || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

std::vector<NodeId> Permutation::inverse() const {
  std::vector<NodeId> inv(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inv[static_cast<std::size_t>(order[k])] = static_cast<NodeId>(k);
  return inv;
}

bool is_topological(const TreeShape& shape, const Permutation& perm) {
  if (perm.order.size() != shape.size() || !perm.is_bijection()) return false;
  const auto pos = perm.inverse();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const NodeId p = shape.parent[i];
    if (p >= 0 && pos[static_cast<std::size_t>(p)] >= pos[i]) return false;
  }
  return true;
}

TreeMask::TreeMask(std::size_t n, std::size_t prefix_len)
    : n_(n), prefix_len_(prefix_len), bits_(n * (prefix_len + n), 0) {}

std::size_t TreeMask::popcount() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

TreeMask mask_from_tree(const TreeShape& shape, std::size_t prefix_len) {
  return apply_permutation(shape, Permutation::identity(shape.size()), prefix_len);
}

TreeMask mask_from_tree(const TokenTree& tree, std::size_t prefix_len) {
  return mask_from_tree(shape_of(tree), prefix_len);
}

TreeMask apply_permutation(const TreeShape& shape, const Permutation& perm, std::size_t prefix_len) {
  shape.validate();
  if (!is_topological(shape, perm)) throw std::invalid_argument("apply_permutation: permutation is not topological");
  const auto pos = perm.inverse();
  TreeMask mask(shape.size(), prefix_len);
  for (std::size_t row = 0; row < shape.size(); ++row) {
    for (std::size_t c = 0; c < prefix_len; ++c) mask.set(row, c, true);
    for (NodeId cur = perm.order[row]; cur >= 0; cur = shape.parent[static_cast<std::size_t>(cur)]) {
      mask.set(row, prefix_len + static_cast<std::size_t>(pos[static_cast<std::size_t>(cur)]), true);
    }
  }
  return mask;
}

TreeMask apply_permutation(const TreeMask& mask, const Permutation& perm) {
  const std::size_t n = mask.tree_size();
  const std::size_t prefix = mask.prefix_len();
  if (perm.order.size() != n || !perm.is_bijection()) {
    throw std::invalid_argument("apply_permutation: not a permutation of the tree nodes");
  }
  TreeMask out(n, prefix);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = static_cast<std::size_t>(perm.order[r]);
    for (std::size_t c = 0; c < prefix; ++c) out.set(r, c, mask.get(src, c));
    for (std::size_t c = 0; c < n; ++c) {
      if (!mask.get(src, prefix + static_cast<std::size_t>(perm.order[c]))) continue;
      if (c > r) throw std::invalid_argument("apply_permutation: permutation is not topological");
      out.set(r, prefix + c, true);
    }
  }
  return out;
}

std::size_t count_nonzero_blocks(const TreeMask& mask, std::size_t block) {
  if (block == 0) throw std::invalid_argument("count_nonzero_blocks: block must be >= 1");
  const std::size_t row_tiles = (mask.rows() + block - 1) / block;
  const std::size_t col_tiles = (mask.cols() + block - 1) / block;
  std::size_t count = 0;
  for (std::size_t tr = 0; tr < row_tiles; ++tr) {
    for (std::size_t tc = 0; tc < col_tiles; ++tc) {
      bool hit = false;
      for (std::size_t r = tr * block; r < std::min(mask.rows(), (tr + 1) * block) && !hit; ++r) {
        for (std::size_t c = tc * block; c < std::min(mask.cols(), (tc + 1) * block); ++c) {
          if (mask.get(r, c)) {
            hit = true;
            break;
          }
        }
      }
      if (hit) ++count;
    }
  }
  return count;
}

std::size_t count_tree_blocks(const TreeShape& shape, const Permutation& perm, std::size_t prefix_len,
                              std::size_t block) {
  if (block == 0) throw std::invalid_argument("count_tree_blocks: block must be >= 1");
  if (!is_topological(shape, perm)) throw std::invalid_argument("count_tree_blocks: permutation is not topological");
  const std::size_t n = shape.size();
  const std::size_t col_tiles = (prefix_len + n + block - 1) / block;
  const auto pos = perm.inverse();
  std::vector<std::size_t> stamp(col_tiles, std::numeric_limits<std::size_t>::max());
  std::size_t count = 0;
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t tile_row = row / block;
    const auto mark = [&](std::size_t col) {
      const std::size_t tc = col / block;
      if (stamp[tc] != tile_row) {
        stamp[tc] = tile_row;
        ++count;
      }
    };
    // Prefix columns are dense: every prefix tile is hit by every row.
    for (std::size_t c = 0; c < prefix_len; c += block) mark(c);
    if (prefix_len > 0) mark(prefix_len - 1);
    for (NodeId cur = perm.order[row]; cur >= 0; cur = shape.parent[static_cast<std::size_t>(cur)]) {
      mark(prefix_len + static_cast<std::size_t>(pos[static_cast<std::size_t>(cur)]));
    }
  }
  return count;
}

namespace {

Permutation preorder(const TreeShape& shape, bool heavy_first) {
  shape.validate();
  auto kids = shape.children();
  std::vector<NodeId> roots;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape.parent[i] < 0) roots.push_back(static_cast<NodeId>(i));
  }
  if (heavy_first) {
    const auto sizes = shape.subtree_sizes();
    const auto by_size = [&sizes](NodeId a, NodeId b) {
      return sizes[static_cast<std::size_t>(a)] > sizes[static_cast<std::size_t>(b)];
    };
    std::stable_sort(roots.begin(), roots.end(), by_size);
    for (auto& k : kids) std::stable_sort(k.begin(), k.end(), by_size);
  }
  Permutation perm;
  perm.order.reserve(shape.size());
  std::vector<NodeId> stack(roots.rbegin(), roots.rend());
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    perm.order.push_back(v);
    const auto& k = kids[static_cast<std::size_t>(v)];
    stack.insert(stack.end(), k.rbegin(), k.rend());
  }
  return perm;
}

}  // namespace

Permutation dfs_order(const TreeShape& shape) { return preorder(shape, false); }

Permutation hpd_order(const TreeShape& shape) { return preorder(shape, true); }

std::size_t optimal_block_count_bruteforce(const TreeShape& shape, std::size_t prefix_len, std::size_t block) {
  if (shape.size() > 10) throw std::invalid_argument("optimal_block_count_bruteforce: n must be <= 10");
  shape.validate();
  const std::size_t n = shape.size();
  const auto kids = shape.children();
  std::vector<int> pending(n, 0);  // unplaced parents (0 or 1)
  for (std::size_t i = 0; i < n; ++i) pending[i] = shape.parent[i] >= 0 ? 1 : 0;
  Permutation perm;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::vector<bool> placed(n, false);

  std::function<void()> rec = [&] {
    if (perm.order.size() == n) {
      best = std::min(best, count_tree_blocks(shape, perm, prefix_len, block));
      return;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (placed[v] || pending[v] != 0) continue;
      placed[v] = true;
      perm.order.push_back(static_cast<NodeId>(v));
      for (NodeId c : kids[v]) --pending[static_cast<std::size_t>(c)];
      rec();
      for (NodeId c : kids[v]) ++pending[static_cast<std::size_t>(c)];
      perm.order.pop_back();
      placed[v] = false;
    }
  };
  rec();
  return n == 0 ? 0 : best;
}

TreeShape random_tree(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random_tree: n must be >= 1");
  TreeShape shape;
  shape.parent.resize(n);
  shape.parent[0] = -1;
  CounterEngine engine(hash_combine(seed, 0x74726565ULL));
  for (std::size_t i = 1; i < n; ++i) {
    shape.parent[i] = static_cast<NodeId>(static_cast<double>(i) * to_unit_interval(engine()));
  }
  return shape;
}

void write_mask_grid(std::ostream& os, const TreeMask& mask) {
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) os << (mask.get(r, c) ? '1' : '0');
    os << '\n';
  }
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  CounterEngine engine(hash_combine(seed, 0x6d6174ULL));
  for (double& x : m.data) x = 2.0 * to_unit_interval(engine()) - 1.0;
  return m;
}

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k, const Matrix& v, const TreeMask& mask) {
  if (q.rows != mask.rows()) throw std::invalid_argument("attention: Q rows must match mask rows");
  if (k.rows != mask.cols() || v.rows != mask.cols()) {
    throw std::invalid_argument("attention: K and V rows must match mask columns");
  }
  if (q.cols != k.cols) throw std::invalid_argument("attention: Q and K head dims differ");
}

double dot_row(const Matrix& a, std::size_t ra, const Matrix& b, std::size_t rb) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.cols; ++i) s += a(ra, i) * b(rb, i);
  return s;
}

}  // namespace

Matrix dense_masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const TreeMask& mask) {
  check_attention_shapes(q, k, v, mask);
  Matrix out(q.rows, v.cols);
  std::vector<double> scores(mask.cols());
  for (std::size_t r = 0; r < q.rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      scores[c] = mask.get(r, c) ? dot_row(q, r, k, c) : -std::numeric_limits<double>::infinity();
      peak = std::max(peak, scores[c]);
    }
    if (!std::isfinite(peak)) throw std::invalid_argument("attention: row has no visible key");
    double total = 0.0;
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      scores[c] = mask.get(r, c) ? std::exp(scores[c] - peak) : 0.0;
      total += scores[c];
    }
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      if (scores[c] == 0.0) continue;
      const double w = scores[c] / total;
      for (std::size_t j = 0; j < v.cols; ++j) out(r, j) += w * v(c, j);
    }
  }
  return out;
}

Matrix blocked_masked_attention_reference(const Matrix& q, const Matrix& k, const Matrix& v, const TreeMask& mask,
                                          std::size_t block, BlockedAttentionStats* stats) {
  check_attention_shapes(q, k, v, mask);
  if (block == 0) throw std::invalid_argument("attention: block must be >= 1");
  const std::size_t rows = mask.rows();
  const std::size_t cols = mask.cols();
  Matrix out(rows, v.cols);
  BlockedAttentionStats local;

  for (std::size_t r0 = 0; r0 < rows; r0 += block) {
    const std::size_t r1 = std::min(rows, r0 + block);
    const std::size_t tile_rows = r1 - r0;
    std::vector<double> running_max(tile_rows, -std::numeric_limits<double>::infinity());
    std::vector<double> running_sum(tile_rows, 0.0);
    Matrix acc(tile_rows, v.cols);

    for (std::size_t c0 = 0; c0 < cols; c0 += block) {
      const std::size_t c1 = std::min(cols, c0 + block);
      ++local.tiles_total;
      bool any = false;
      for (std::size_t r = r0; r < r1 && !any; ++r) {
        for (std::size_t c = c0; c < c1; ++c) {
          if (mask.get(r, c)) {
            any = true;
            break;
          }
        }
      }
      if (!any) continue;
      ++local.tiles_computed;

      for (std::size_t r = r0; r < r1; ++r) {
        const std::size_t lr = r - r0;
        double tile_max = -std::numeric_limits<double>::infinity();
        std::vector<double> s(c1 - c0, -std::numeric_limits<double>::infinity());
        for (std::size_t c = c0; c < c1; ++c) {
          if (!mask.get(r, c)) continue;
          s[c - c0] = dot_row(q, r, k, c);
          tile_max = std::max(tile_max, s[c - c0]);
        }
        if (!std::isfinite(tile_max)) continue;
        const double new_max = std::max(running_max[lr], tile_max);
        const double rescale = std::isfinite(running_max[lr]) ? std::exp(running_max[lr] - new_max) : 0.0;
        running_sum[lr] *= rescale;
        for (std::size_t j = 0; j < v.cols; ++j) acc(lr, j) *= rescale;
        for (std::size_t c = c0; c < c1; ++c) {
          if (!std::isfinite(s[c - c0])) continue;
          const double p = std::exp(s[c - c0] - new_max);
          running_sum[lr] += p;
          for (std::size_t j = 0; j < v.cols; ++j) acc(lr, j) += p * v(c, j);
        }
        running_max[lr] = new_max;
      }
    }

    for (std::size_t lr = 0; lr < tile_rows; ++lr) {
      if (running_sum[lr] <= 0.0) throw std::invalid_argument("attention: row has no visible key");
      for (std::size_t j = 0; j < v.cols; ++j) out(r0 + lr, j) = acc(lr, j) / running_sum[lr];
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace spectree
