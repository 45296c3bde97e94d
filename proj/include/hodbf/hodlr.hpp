// HOD-LR baseline: same hierarchy as HOD-BF with plain low-rank off-diagonal
// blocks compressed by adaptive cross approximation.
#pragma once

#include <vector>

#include "hodbf/clustering.hpp"
#include "hodbf/kernels.hpp"
#include "hodbf/lowrank.hpp"

namespace hodbf {

struct HodLrStats {
  double construct_time = 0.0;
  Index storage_units = 0;
  Index max_rank = 0;
  Index aca_fallbacks = 0;  // blocks recomputed by a full ID after ACA stagnation
};

struct HodLrMatrix {
  Index size() const { return tree.size(); }

  ClusterTree tree;
  double tol = 0.0;
  std::vector<CMatrix> leaf;          // per leaf position
  std::vector<LowRankPair> offdiag;   // per node id: Z(tau, sibling(tau)) ~ U V
  HodLrStats stats;
};

HodLrMatrix hodlr_construct(const KernelSystem& sys, const ClusterTree& tree, double tol);
HodLrMatrix hodlr_construct(const EntrySource& src, const ClusterTree& tree, double tol);

/// y = A x in tree ordering.
CMatrix hodlr_matvec(const HodLrMatrix& a, const Eigen::Ref<const CMatrix>& x);
CMatrix hodlr_densify(const HodLrMatrix& a);

}  // namespace hodbf
