// Dense reference path used to validate the compressed formats.
#pragma once

#include "hodbf/kernels.hpp"

namespace hodbf {

struct DenseSystem {
  CMatrix matrix;  // original (unpermuted) ordering
  double assembly_time = 0.0;
};

/// Full evaluation of Z; throws when N exceeds `max_n`.
DenseSystem dense_assemble(const KernelSystem& sys, Index max_n = 8192);

/// Partial-pivoting LU solve; throws when the matrix is singular to working precision.
CMatrix dense_solve(const CMatrix& a, const Eigen::Ref<const CMatrix>& b);
inline CMatrix dense_solve(const DenseSystem& d, const Eigen::Ref<const CMatrix>& b) {
  return dense_solve(d.matrix, b);
}

/// ||a - b||_F / ||b||_F; throws on a zero reference.
double rel_fro_error(const Eigen::Ref<const CMatrix>& a, const Eigen::Ref<const CMatrix>& b);

}  // namespace hodbf
