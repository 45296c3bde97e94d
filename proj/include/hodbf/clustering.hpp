// Binary cluster tree over a point cloud.
//
// Nodes are stored heap-style: the node at depth l with position j
// (0 <= j < 2^l) has id 2^l - 1 + j. Every node owns a contiguous range of
// the tree ordering; `perm()` maps tree position -> original point index.
#pragma once

#include <utility>
#include <vector>

#include "hodbf/types.hpp"

namespace hodbf {

struct PointCloud {
  std::vector<Point3> positions;
  std::vector<Complex> rel_permittivity;
  Real cell_volume = 1.0;

  Index size() const { return static_cast<Index>(positions.size()); }
  /// Throws Error when the cloud violates its invariants.
  void validate() const;
  /// Copy with points reordered so that entry i is the original point perm[i].
  PointCloud permuted(const std::vector<Index>& perm) const;
};

enum class SplitRule { median, cobblestone };

class ClusterTree {
 public:
  ClusterTree() = default;

  int levels() const { return levels_; }
  Index size() const { return static_cast<Index>(perm_.size()); }
  Index leaf_size() const { return leaf_size_; }
  Index num_nodes() const { return static_cast<Index>(ranges_.size()); }

  static Index node_id(int level, Index pos) { return (Index{1} << level) - 1 + pos; }
  static int node_level(Index id);
  static Index node_pos(Index id) { return id - ((Index{1} << node_level(id)) - 1); }
  static Index parent(Index id) { return (id - 1) / 2; }
  static Index left_child(Index id) { return 2 * id + 1; }
  static Index right_child(Index id) { return 2 * id + 2; }
  static Index sibling(Index id) { return id % 2 == 1 ? id + 1 : id - 1; }

  bool is_leaf(Index id) const { return node_level(id) == levels_; }
  const Range& range(Index id) const { return ranges_.at(static_cast<size_t>(id)); }
  /// Tree position -> original index.
  const std::vector<Index>& perm() const { return perm_; }
  /// Original index -> tree position.
  const std::vector<Index>& iperm() const { return iperm_; }

  /// Offsets of the 2^d descendants at relative depth d of `root`, for
  /// d = 0..depth; offsets are relative to the start of root's range.
  std::vector<std::vector<Index>> partition(Index root, int depth) const;

  /// Sibling pairs (left, right) at the given level, 1 <= level <= levels().
  std::vector<std::pair<Index, Index>> sibling_pairs(int level) const;

  /// Rebuilds a tree from its ordering (ranges follow from ceil/floor halving).
  static ClusterTree from_permutation(std::vector<Index> perm, int levels, Index leaf_size);

 private:
  friend ClusterTree build_cluster_tree(const PointCloud&, Index, SplitRule);

  int levels_ = 0;
  Index leaf_size_ = 1;
  std::vector<Range> ranges_;
  std::vector<Index> perm_;
  std::vector<Index> iperm_;
};

/// Recursive geometric bisection into a complete binary tree; every leaf sits
/// at the same depth and sibling sizes differ by at most one.
ClusterTree build_cluster_tree(const PointCloud& cloud, Index leaf_size,
                               SplitRule rule = SplitRule::median);

/// Sibling pairs at `level` as (tau1, tau2) node ids.
std::vector<std::pair<Index, Index>> node_pair_siblings(const ClusterTree& tree, int level);

}  // namespace hodbf
