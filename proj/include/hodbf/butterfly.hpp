// Butterfly factorization  B ~ B^L W^L ... W^1 V^0  of an m x n block.
//
// Rows and columns carry L-level binary partitions. At level l (0..L) the
// factorization stores one interpolation block per pair (tau, nu), tau a
// row node at depth l and nu a column node at depth L - l; pairs are indexed
// p = i * 2^(L-l) + j. The block at level l > 0 maps the two level-(l-1)
// blocks (parent(tau), nu_1) and (parent(tau), nu_2) to the rank of
// (tau, nu), so W^l is block diagonal after a fixed interleaving.
#pragma once

#include <cstdint>
#include <vector>

#include "hodbf/clustering.hpp"
#include "hodbf/kernels.hpp"
#include "hodbf/types.hpp"

namespace hodbf {

/// offsets[d] holds 2^d + 1 boundaries of the nodes at depth d.
using Partition = std::vector<std::vector<Index>>;

/// Uniform-depth partition of [0, n) obtained by ceil/floor halving.
Partition halving_partition(Index n, int depth);
/// Sub-partition of `p` rooted at node `pos` of depth `d`, re-based to zero.
Partition sub_partition(const Partition& p, int d, Index pos, int depth);
/// First `depth` levels of `p`.
Partition truncate_partition(const Partition& p, int depth);

inline Index node_count(const Partition& p, int d) {
  return static_cast<Index>(p[static_cast<size_t>(d)].size()) - 1;
}
inline Range node_range(const Partition& p, int d, Index pos) {
  const auto& o = p[static_cast<size_t>(d)];
  return {o[static_cast<size_t>(pos)], o[static_cast<size_t>(pos) + 1]};
}

struct ButterflyStats {
  Index max_rank = 0;
  Index storage_units = 0;   // stored complex entries
  Index flops_estimate = 0;  // complex multiply-adds per applied column
};

class Butterfly {
 public:
  Butterfly() = default;
  /// Zero-rank butterfly on the given partitions.
  Butterfly(Partition rows, Partition cols, int levels);

  int levels() const { return levels_; }
  Index rows() const { return rows_.empty() ? 0 : rows_[0].back(); }
  Index cols() const { return cols_.empty() ? 0 : cols_[0].back(); }
  const Partition& row_partition() const { return rows_; }
  const Partition& col_partition() const { return cols_; }

  Index pairs() const { return Index{1} << levels_; }
  Index pair_index(int level, Index i, Index j) const { return (i << (levels_ - level)) + j; }
  /// Rank of pair p at level l.
  Index rank(int level, Index p) const;
  bool is_zero() const;
  /// Throws when the factor chain is not shape compatible.
  void validate() const;

  /// V^0 blocks, one per column leaf: rank(0,j) x |leaf j|.
  std::vector<CMatrix> outer_v;
  /// inner[l-1] holds W^l (l = 1..L); block p is rank(l,p) x (rank of both inputs).
  std::vector<std::vector<CMatrix>> inner;
  /// B^L blocks, one per row leaf: |leaf i| x rank(L,i).
  std::vector<CMatrix> outer_b;
  /// Skeleton columns (block-local) per level and pair; only filled by entry-based compression.
  std::vector<std::vector<std::vector<Index>>> skeletons;

 private:
  int levels_ = 0;
  Partition rows_;
  Partition cols_;
};

/// Y = alpha * B X (+ Y when accumulate).
void bf_apply_into(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y,
                   Complex alpha = Complex{1.0, 0.0}, bool accumulate = false);
/// Y = alpha * B^T X (+ Y when accumulate).
void bf_apply_transpose_into(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x,
                             Eigen::Ref<CMatrix> y, Complex alpha = Complex{1.0, 0.0},
                             bool accumulate = false);

CMatrix bf_apply(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x);
CMatrix bf_apply_transpose(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x);
/// Dense m x n matrix represented by the butterfly.
CMatrix bf_densify(const Butterfly& bf);

ButterflyStats bf_stats(const Butterfly& bf);

/// Interpolation chain restricted to levels 0..level: returns the per-pair
/// coefficient blocks at `level` for input X (n x k).
std::vector<CMatrix> bf_column_chain(const Butterfly& bf, int level,
                                     const Eigen::Ref<const CMatrix>& x);

/// Quadrant (a, b) of a butterfly with L >= 1 levels, regrouped from the
/// stored factors into a max(L-2, 0)-level butterfly.
Butterfly bf_quadrant(const Butterfly& bf, int a, int b);

struct CompressOptions {
  double tol = 1e-4;
  Index rank_estimate = 16;  // initial r_est
  double oversampling = 4.0; // beta: proxy rows per expected rank
  int max_retries = 3;
  std::uint64_t seed = 0x5eed;
};

/// Butterfly of src(rows, cols) from entry evaluations (column interpolative
/// form). `rows`/`cols` are global index ranges of src with partitions
/// relative to their starts; both partitions need `levels` levels.
Butterfly bf_compress(const EntrySource& src, Range rows, const Partition& row_part, Range cols,
                      const Partition& col_part, int levels, const CompressOptions& opt);

/// Convenience: block Z(o, s) between two cluster-tree nodes.
Butterfly bf_compress(const EntrySource& src, const ClusterTree& tree, Index o, Index s,
                      int levels, const CompressOptions& opt);

}  // namespace hodbf
