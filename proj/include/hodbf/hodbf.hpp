// Hierarchically off-diagonal butterfly (HOD-BF) matrices.
//
// A forward matrix stores a dense block per leaf and one butterfly per
// non-root node tau holding Z(tau, sibling(tau)). Its inverse is kept as the
// lazy product
//
//   D_tau^{-1} = (I + E_tau) diag(D_tau1^{-1}, D_tau2^{-1})
//
// with dense leaf inverses and one butterfly E_tau per non-leaf node.
// Vectors passed to the matrix routines are in tree ordering.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hodbf/butterfly.hpp"
#include "hodbf/clustering.hpp"
#include "hodbf/kernels.hpp"
#include "hodbf/randomized.hpp"

namespace hodbf {

enum class Role { forward, inverse };

struct HodBfStats {
  double construct_time = 0.0;  // seconds
  double invert_time = 0.0;
  Index storage_units = 0;      // stored complex entries
  Index max_rank = 0;
  Index random_forward = 0;     // columns applied during reconstruction
  Index random_transpose = 0;
  /// (block size, product columns) for every D^{-1} B reconstruction.
  std::vector<std::pair<Index, Index>> reconstruction_columns;
};

class HodBfMatrix {
 public:
  HodBfMatrix() = default;

  Index size() const { return tree.size(); }
  /// Butterfly levels of the off-diagonal blocks at tree depth `depth`.
  int block_levels(int depth) const;

  ClusterTree tree;
  Role role = Role::forward;
  double tol = 0.0;       // chi_con (forward) or chi_fact (inverse)
  double tol_con = 0.0;   // construction tolerance of the source matrix
  std::vector<CMatrix> leaf;         // per leaf position: D (forward) or D^{-1} (inverse)
  std::vector<Butterfly> offdiag;    // forward: per node id (root unused)
  std::vector<Butterfly> update;     // inverse: E_tau per node id (leaves unused)
  HodBfStats stats;
};

/// Levels assigned to an off-diagonal block at tree depth `depth`: L_H - depth,
/// reduced so that butterfly leaves keep at least 8 columns.
int hodbf_block_levels(const ClusterTree& tree, int depth);

HodBfMatrix hodbf_construct(const KernelSystem& sys, const ClusterTree& tree, double tol_con,
                            const CompressOptions& base = {});
/// Same from any square entry source already in tree ordering.
HodBfMatrix hodbf_construct(const EntrySource& src, const ClusterTree& tree, double tol_con,
                            const CompressOptions& base = {});

CMatrix hodbf_matvec(const HodBfMatrix& a, const Eigen::Ref<const CMatrix>& x);
CMatrix hodbf_matvec_transpose(const HodBfMatrix& a, const Eigen::Ref<const CMatrix>& x);
/// Dense N x N matrix (tree ordering).
CMatrix hodbf_densify(const HodBfMatrix& a);

struct InvertOptions {
  double tol_fact = 1e-3;
  /// Reconstructions and SMW updates run at inner_scale * tol_fact.
  double inner_scale = 0.25;
  RandomOptions random;  // tol is overridden
};

/// Algorithm: leaves inverted densely, D^{-1} B reconstructed from products,
/// the 2x2 identity-diagonal block inverted by bf_smw. Throws when
/// tol_fact < a.tol (chi_fact >= chi_con).
HodBfMatrix hodbf_invert(const HodBfMatrix& a, const InvertOptions& opt);
inline HodBfMatrix hodbf_invert(const HodBfMatrix& a, double tol_fact) {
  InvertOptions o;
  o.tol_fact = tol_fact;
  return hodbf_invert(a, o);
}

CMatrix apply_inverse(const HodBfMatrix& inv, const Eigen::Ref<const CMatrix>& b);
CMatrix apply_inverse_transpose(const HodBfMatrix& inv, const Eigen::Ref<const CMatrix>& b);

struct SmwOptions {
  double tol = 1e-3;
  Index dense_size = 128;  // blocks up to this size are inverted densely
  RandomOptions random;
};

/// F with (I + E)^{-1} = I + F for a square butterfly E on (sigma, sigma);
/// F has E's levels and partitions.
Butterfly bf_smw(const Butterfly& e, const SmwOptions& opt);

/// Same for I + [E11 E12; E21 E22] given by quadrants, returning an
/// `levels`-level butterfly on `part` (whose depth-1 nodes are the quadrants).
Butterfly bf_smw_blocks(const Butterfly& e11, const Butterfly& e12, const Butterfly& e21,
                        const Butterfly& e22, const Partition& part, int levels,
                        const SmwOptions& opt);

/// Binary container: magic, version, N, L_H, role, tolerances, tree, then
/// per-node factor blobs. Throws on malformed input.
void save_hodbf(const HodBfMatrix& a, std::ostream& out);
HodBfMatrix load_hodbf(std::istream& in);
void save_hodbf(const HodBfMatrix& a, const std::string& path);
HodBfMatrix load_hodbf(const std::string& path);

}  // namespace hodbf
