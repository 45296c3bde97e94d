// Interpolative decomposition and adaptive cross approximation.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hodbf/kernels.hpp"
#include "hodbf/types.hpp"

namespace hodbf {

/// Column interpolative decomposition A ~ A(:, skeleton) * interp.
template <typename Scalar>
struct IdFactor {
  std::vector<Index> skeleton;
  Mat<Scalar> interp;  // rank x cols; identity on the skeleton columns
  double tol_used = 0.0;
  double residual = 0.0;  // ||A - A(:,J) V||_F, exact

  Index rank() const { return static_cast<Index>(skeleton.size()); }
};

namespace detail {

template <typename Scalar>
double abs2(const Scalar& x) {
  return std::norm(x);
}
template <>
inline double abs2<double>(const double& x) {
  return x * x;
}

}  // namespace detail

/// Truncated column-pivoted Householder QR; stops as soon as the Frobenius
/// norm of the trailing block drops to max(tol * ||A||_F, abs_tol) (or
/// max_rank is reached). The reconstruction error of the returned ID equals
/// that trailing norm.
template <typename Derived>
IdFactor<typename Derived::Scalar> id_compress(const Eigen::MatrixBase<Derived>& block, double tol,
                                               Index max_rank = -1, double abs_tol = 0.0) {
  using Scalar = typename Derived::Scalar;
  if (!(tol > 0.0 && tol < 1.0)) throw Error("id_compress: tolerance must lie in (0,1)");
  Mat<Scalar> a = block;
  const Index m = a.rows();
  const Index n = a.cols();
  if (!a.allFinite()) throw Error("id_compress: non-finite entries");

  IdFactor<Scalar> out;
  out.tol_used = tol;
  const Index kmax = std::min({m, n, max_rank < 0 ? n : max_rank});

  std::vector<Index> perm(static_cast<size_t>(n));
  for (Index j = 0; j < n; ++j) perm[static_cast<size_t>(j)] = j;
  RVector norms2(n);
  for (Index j = 0; j < n; ++j) norms2(j) = a.col(j).squaredNorm();
  const double total2 = norms2.sum();
  const double stop2 = std::max(tol * tol * total2, abs_tol * abs_tol);

  Index k = 0;
  double trailing2 = total2;
  Vec<Scalar> work(n);
  while (k < kmax && trailing2 > stop2 && trailing2 > 0.0) {
    Index p = k;
    norms2.segment(k, n - k).maxCoeff(&p);
    p += k;
    if (p != k) {
      a.col(k).swap(a.col(p));
      std::swap(norms2(k), norms2(p));
      std::swap(perm[static_cast<size_t>(k)], perm[static_cast<size_t>(p)]);
    }
    Scalar tau;
    double beta;
    auto tail = a.col(k).tail(m - k);
    tail.makeHouseholderInPlace(tau, beta);
    a(k, k) = beta;
    if (k + 1 < n) {
      a.bottomRightCorner(m - k, n - k - 1)
          .applyHouseholderOnTheLeft(a.col(k).tail(m - k - 1), tau, work.data());
    }
    ++k;
    trailing2 = 0.0;
    for (Index j = k; j < n; ++j) {
      norms2(j) = k < m ? a.col(j).tail(m - k).squaredNorm() : 0.0;
      trailing2 += norms2(j);
    }
  }

  out.residual = std::sqrt(std::max(trailing2, 0.0));
  out.skeleton.assign(perm.begin(), perm.begin() + k);
  out.interp = Mat<Scalar>::Zero(k, n);
  if (k == 0) return out;
  Mat<Scalar> t = a.topRightCorner(k, n - k);
  a.topLeftCorner(k, k).template triangularView<Eigen::Upper>().solveInPlace(t);
  for (Index j = 0; j < k; ++j) out.interp(j, perm[static_cast<size_t>(j)]) = Scalar(1);
  for (Index j = k; j < n; ++j) out.interp.col(perm[static_cast<size_t>(j)]) = t.col(j - k);
  return out;
}

/// Row ID: A ~ interp * A(skeleton, :); `interp` is rows x rank.
template <typename Scalar>
struct RowIdFactor {
  std::vector<Index> skeleton;
  Mat<Scalar> interp;
  Index rank() const { return static_cast<Index>(skeleton.size()); }
};

template <typename Derived>
RowIdFactor<typename Derived::Scalar> row_id_compress(const Eigen::MatrixBase<Derived>& block,
                                                      double tol, Index max_rank = -1) {
  auto col = id_compress(block.transpose(), tol, max_rank);
  return {std::move(col.skeleton), col.interp.transpose()};
}

/// Low-rank pair A ~ U * V.
struct LowRankPair {
  CMatrix U;  // rows x rank
  CMatrix V;  // rank x cols
  bool stagnated = false;  // ACA pivot search broke down
  bool fell_back = false;  // recomputed by a full ID
  Index rank() const { return U.cols(); }
};

/// Partially pivoted ACA with Frobenius-estimate stopping, followed by an
/// SVD recompression of the cross factors at the same tolerance.
LowRankPair aca_compress(const EntrySource& src, Range rows, Range cols, double tol);

/// Truncate U*V to the smallest rank meeting tol in relative Frobenius norm.
LowRankPair recompress(const CMatrix& U, const CMatrix& V, double tol);

}  // namespace hodbf
