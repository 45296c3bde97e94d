#include "hodbf/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hodbf {

void PointCloud::validate() const {
  if (positions.empty()) throw Error("empty geometry");
  if (rel_permittivity.size() != positions.size())
    throw Error("point cloud: positions and permittivities differ in length");
  if (!(cell_volume > 0.0)) throw Error("point cloud: cell volume must be positive");
  for (const auto& e : rel_permittivity) {
    if (!std::isfinite(e.real()) || !std::isfinite(e.imag()))
      throw Error("point cloud: non-finite permittivity");
    if (e.imag() > 0.0) throw Error("point cloud: permittivity imaginary part must be <= 0");
  }
  for (const auto& p : positions)
    if (!p.allFinite()) throw Error("point cloud: non-finite coordinate");
}

PointCloud PointCloud::permuted(const std::vector<Index>& perm) const {
  PointCloud out;
  out.cell_volume = cell_volume;
  out.positions.reserve(perm.size());
  out.rel_permittivity.reserve(perm.size());
  for (Index i : perm) {
    out.positions.push_back(positions[static_cast<size_t>(i)]);
    out.rel_permittivity.push_back(rel_permittivity[static_cast<size_t>(i)]);
  }
  return out;
}

int ClusterTree::node_level(Index id) {
  int l = 0;
  while (((Index{1} << (l + 1)) - 1) <= id) ++l;
  return l;
}

std::vector<std::vector<Index>> ClusterTree::partition(Index root, int depth) const {
  const int root_level = node_level(root);
  if (root_level + depth > levels_) throw Error("cluster tree: partition deeper than tree");
  const Index base = range(root).begin;
  const Index root_pos = node_pos(root);
  std::vector<std::vector<Index>> out(static_cast<size_t>(depth) + 1);
  for (int d = 0; d <= depth; ++d) {
    const Index count = Index{1} << d;
    auto& offs = out[static_cast<size_t>(d)];
    offs.resize(static_cast<size_t>(count) + 1);
    for (Index j = 0; j < count; ++j)
      offs[static_cast<size_t>(j)] = range(node_id(root_level + d, root_pos * count + j)).begin - base;
    offs[static_cast<size_t>(count)] = range(root).end - base;
  }
  return out;
}

std::vector<std::pair<Index, Index>> ClusterTree::sibling_pairs(int level) const {
  if (level < 1 || level > levels_) throw Error("sibling pairs: level out of range");
  std::vector<std::pair<Index, Index>> out;
  const Index count = Index{1} << (level - 1);
  out.reserve(static_cast<size_t>(count));
  for (Index j = 0; j < count; ++j) {
    const Index left = node_id(level, 2 * j);
    out.emplace_back(left, left + 1);
  }
  return out;
}

ClusterTree ClusterTree::from_permutation(std::vector<Index> perm, int levels, Index leaf_size) {
  const Index n = static_cast<Index>(perm.size());
  if (n == 0) throw Error("empty geometry");
  if (levels < 0 || levels > 40 || leaf_size < 1) throw Error("cluster tree: invalid shape");
  ClusterTree tree;
  tree.levels_ = levels;
  tree.leaf_size_ = leaf_size;
  tree.iperm_.assign(static_cast<size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const Index o = perm[static_cast<size_t>(i)];
    if (o < 0 || o >= n || tree.iperm_[static_cast<size_t>(o)] >= 0)
      throw Error("cluster tree: ordering is not a permutation");
    tree.iperm_[static_cast<size_t>(o)] = i;
  }
  tree.perm_ = std::move(perm);
  tree.ranges_.resize(static_cast<size_t>((Index{2} << levels) - 1));
  tree.ranges_[0] = {0, n};
  for (Index id = 0; id < (Index{1} << levels) - 1; ++id) {
    const Range r = tree.ranges_[static_cast<size_t>(id)];
    const Index mid = r.begin + (r.size() + 1) / 2;
    tree.ranges_[static_cast<size_t>(left_child(id))] = {r.begin, mid};
    tree.ranges_[static_cast<size_t>(right_child(id))] = {mid, r.end};
  }
  return tree;
}

namespace {

// Reorders idx[first, last) so that the first `nleft` entries form the left child.
void split_node(const PointCloud& cloud, std::vector<Index>& idx, Index first, Index last,
                SplitRule rule) {
  const auto b = idx.begin() + first;
  const auto e = idx.begin() + last;
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = -lo;
  Point3 centroid = Point3::Zero();
  for (auto it = b; it != e; ++it) {
    const Point3& p = cloud.positions[static_cast<size_t>(*it)];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    centroid += p;
  }
  centroid /= static_cast<double>(last - first);

  std::vector<std::pair<double, Index>> keyed;
  keyed.reserve(static_cast<size_t>(last - first));
  if (rule == SplitRule::median) {
    Eigen::Index axis = 0;
    (hi - lo).maxCoeff(&axis);
    for (auto it = b; it != e; ++it)
      keyed.emplace_back(cloud.positions[static_cast<size_t>(*it)][axis], *it);
  } else {
    // Sweep point: the point farthest from the centroid (lowest index on ties).
    Index sweep = *b;
    double best = -1.0;
    for (auto it = b; it != e; ++it) {
      const double d = (cloud.positions[static_cast<size_t>(*it)] - centroid).squaredNorm();
      if (d > best || (d == best && *it < sweep)) {
        best = d;
        sweep = *it;
      }
    }
    const Point3 origin = cloud.positions[static_cast<size_t>(sweep)];
    for (auto it = b; it != e; ++it)
      keyed.emplace_back((cloud.positions[static_cast<size_t>(*it)] - origin).norm(), *it);
  }
  std::sort(keyed.begin(), keyed.end());  // ties resolved by original index
  for (size_t k = 0; k < keyed.size(); ++k) idx[static_cast<size_t>(first) + k] = keyed[k].second;
}

}  // namespace

ClusterTree build_cluster_tree(const PointCloud& cloud, Index leaf_size, SplitRule rule) {
  if (cloud.positions.empty()) throw Error("empty geometry");
  if (leaf_size < 1) throw Error("cluster tree: leaf size must be >= 1");
  const Index n = cloud.size();

  int levels = 0;
  while ((n + (Index{1} << levels) - 1) / (Index{1} << levels) > leaf_size) ++levels;

  ClusterTree tree;
  tree.levels_ = levels;
  tree.leaf_size_ = leaf_size;
  tree.ranges_.resize(static_cast<size_t>((Index{2} << levels) - 1));
  tree.perm_.resize(static_cast<size_t>(n));
  std::iota(tree.perm_.begin(), tree.perm_.end(), Index{0});
  tree.ranges_[0] = {0, n};

  for (int l = 0; l < levels; ++l) {
    for (Index j = 0; j < (Index{1} << l); ++j) {
      const Index id = ClusterTree::node_id(l, j);
      const Range r = tree.ranges_[static_cast<size_t>(id)];
      if (r.size() > 1) split_node(cloud, tree.perm_, r.begin, r.end, rule);
      const Index mid = r.begin + (r.size() + 1) / 2;
      tree.ranges_[static_cast<size_t>(ClusterTree::left_child(id))] = {r.begin, mid};
      tree.ranges_[static_cast<size_t>(ClusterTree::right_child(id))] = {mid, r.end};
    }
  }
  tree.iperm_.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) tree.iperm_[static_cast<size_t>(tree.perm_[static_cast<size_t>(i)])] = i;
  return tree;
}

std::vector<std::pair<Index, Index>> node_pair_siblings(const ClusterTree& tree, int level) {
  return tree.sibling_pairs(level);
}

}  // namespace hodbf
