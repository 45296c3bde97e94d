#include "hodbf/hodlr.hpp"

#include <chrono>

#include "hodbf/parallel.hpp"

namespace hodbf {

HodLrMatrix hodlr_construct(const KernelSystem& sys, const ClusterTree& tree, double tol) {
  if (sys.size() != tree.size()) throw Error("hodlr_construct: tree does not match the system");
  const KernelEntries src(sys, tree);
  return hodlr_construct(src, tree, tol);
}

HodLrMatrix hodlr_construct(const EntrySource& src, const ClusterTree& tree, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw Error("hodlr_construct: tolerance must lie in (0,1)");
  if (src.rows() != tree.size() || src.cols() != tree.size())
    throw Error("hodlr_construct: source shape does not match the tree");
  const auto t0 = std::chrono::steady_clock::now();
  HodLrMatrix a;
  a.tree = tree;
  a.tol = tol;
  const int LH = tree.levels();
  const Index nleaf = Index{1} << LH;
  a.leaf.resize(static_cast<size_t>(nleaf));
  parallel_for(nleaf, [&](Index j) {
    const Range r = tree.range(ClusterTree::node_id(LH, j));
    src.block(r, r, a.leaf[static_cast<size_t>(j)]);
  });
  a.offdiag.resize(static_cast<size_t>(tree.num_nodes()));
  parallel_for(tree.num_nodes() - 1, [&](Index k) {
    const Index id = k + 1;
    a.offdiag[static_cast<size_t>(id)] =
        aca_compress(src, tree.range(id), tree.range(ClusterTree::sibling(id)), tol);
  });
  for (const auto& d : a.leaf) a.stats.storage_units += d.size();
  for (Index id = 1; id < tree.num_nodes(); ++id) {
    const auto& lr = a.offdiag[static_cast<size_t>(id)];
    a.stats.storage_units += lr.U.size() + lr.V.size();
    a.stats.max_rank = std::max(a.stats.max_rank, lr.rank());
    if (lr.fell_back) ++a.stats.aca_fallbacks;
  }
  a.stats.construct_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

CMatrix hodlr_matvec(const HodLrMatrix& a, const Eigen::Ref<const CMatrix>& x) {
  if (x.rows() != a.size()) throw Error("hodlr_matvec: shape mismatch");
  const auto& tree = a.tree;
  const int LH = tree.levels();
  CMatrix y(x.rows(), x.cols());
  parallel_for(Index{1} << LH, [&](Index j) {
    const Range r = tree.range(ClusterTree::node_id(LH, j));
    y.middleRows(r.begin, r.size()).noalias() = a.leaf[static_cast<size_t>(j)] * x.middleRows(r.begin, r.size());
  });
  for (int d = 1; d <= LH; ++d) {
    parallel_for(Index{1} << d, [&](Index pos) {
      const Index id = ClusterTree::node_id(d, pos);
      const auto& lr = a.offdiag[static_cast<size_t>(id)];
      if (lr.rank() == 0) return;
      const Range r = tree.range(id);
      const Range s = tree.range(ClusterTree::sibling(id));
      const CMatrix t = lr.V * x.middleRows(s.begin, s.size());
      y.middleRows(r.begin, r.size()).noalias() += lr.U * t;
    });
  }
  return y;
}

CMatrix hodlr_densify(const HodLrMatrix& a) {
  return hodlr_matvec(a, CMatrix::Identity(a.size(), a.size()));
}

}  // namespace hodbf
