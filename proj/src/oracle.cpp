#include "hodbf/oracle.hpp"

#include <chrono>

#include "hodbf/parallel.hpp"

namespace hodbf {

DenseSystem dense_assemble(const KernelSystem& sys, Index max_n) {
  const Index n = sys.size();
  if (n > max_n)
    throw Error("dense_assemble: N = " + std::to_string(n) + " exceeds the dense cap " + std::to_string(max_n));
  const auto t0 = std::chrono::steady_clock::now();
  DenseSystem d;
  d.matrix.resize(n, n);
  parallel_for(n, [&](Index j) {
    for (Index i = 0; i < n; ++i) d.matrix(i, j) = entry(sys, i, j);
  });
  d.assembly_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return d;
}

CMatrix dense_solve(const CMatrix& a, const Eigen::Ref<const CMatrix>& b) {
  if (a.rows() != a.cols()) throw Error("dense_solve: matrix is not square");
  if (b.rows() != a.rows()) throw Error("dense_solve: shape mismatch");
  Eigen::PartialPivLU<CMatrix> lu(a);
  const double rc = lu.rcond();
  if (!(rc > 1e3 * Eigen::NumTraits<double>::epsilon()))
    throw Error("dense_solve: matrix is singular to working precision");
  return lu.solve(b);
}

double rel_fro_error(const Eigen::Ref<const CMatrix>& a, const Eigen::Ref<const CMatrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("rel_fro_error: shape mismatch");
  const double nb = b.norm();
  if (nb == 0.0) throw Error("rel_fro_error: zero reference");
  return (a - b).norm() / nb;
}

}  // namespace hodbf
