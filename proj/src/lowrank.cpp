#include "hodbf/lowrank.hpp"

#include <numeric>
#include <random>

namespace hodbf {

LowRankPair recompress(const CMatrix& U, const CMatrix& V, double tol) {
  LowRankPair out;
  const Index k = U.cols();
  if (k == 0) {
    out.U = CMatrix(U.rows(), 0);
    out.V = CMatrix(0, V.cols());
    return out;
  }
  Eigen::HouseholderQR<CMatrix> qu(U);
  Eigen::HouseholderQR<CMatrix> qv(V.transpose());
  const Index ku = std::min(U.rows(), k);
  const Index kv = std::min(V.cols(), k);
  CMatrix ru = qu.matrixQR().topRows(ku).template triangularView<Eigen::Upper>();
  CMatrix rv = qv.matrixQR().topRows(kv).template triangularView<Eigen::Upper>();
  CMatrix core = ru * rv.transpose();
  Eigen::JacobiSVD<CMatrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& s = svd.singularValues();
  const double total2 = s.squaredNorm();
  Index r = s.size();
  double tail2 = 0.0;
  while (r > 0 && tail2 + s(r - 1) * s(r - 1) <= tol * tol * total2) {
    tail2 += s(r - 1) * s(r - 1);
    --r;
  }
  CMatrix qU = qu.householderQ() * CMatrix::Identity(U.rows(), ku);
  CMatrix qV = qv.householderQ() * CMatrix::Identity(V.cols(), kv);
  out.U = qU * (svd.matrixU().leftCols(r) * s.head(r).asDiagonal());
  out.V = (qV * svd.matrixV().leftCols(r).conjugate()).transpose();
  return out;
}

LowRankPair aca_compress(const EntrySource& src, Range rows, Range cols, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw Error("aca_compress: tolerance must lie in (0,1)");
  const Index m = rows.size();
  const Index n = cols.size();
  LowRankPair out;
  if (m == 0 || n == 0) {
    out.U = CMatrix(m, 0);
    out.V = CMatrix(0, n);
    return out;
  }

  std::vector<CVector> us, vs;
  std::vector<bool> row_used(static_cast<size_t>(m), false), col_used(static_cast<size_t>(n), false);
  std::vector<Index> all_cols(static_cast<size_t>(n)), all_rows(static_cast<size_t>(m));
  std::iota(all_cols.begin(), all_cols.end(), cols.begin);
  std::iota(all_rows.begin(), all_rows.end(), rows.begin);

  auto fetch_row = [&](Index i) {
    CMatrix r;
    const Index gi = rows.begin + i;
    src.block(std::span<const Index>(&gi, 1), std::span<const Index>(all_cols), r);
    CVector v = r.row(0).transpose();
    for (size_t l = 0; l < us.size(); ++l) v -= us[l](i) * vs[l];
    return v;
  };
  auto fetch_col = [&](Index j) {
    CMatrix c;
    const Index gj = cols.begin + j;
    src.block(std::span<const Index>(all_rows), std::span<const Index>(&gj, 1), c);
    CVector u = c.col(0);
    for (size_t l = 0; l < us.size(); ++l) u -= vs[l](j) * us[l];
    return u;
  };

  const Index kmax = std::min(m, n);
  double approx2 = 0.0;  // ||S_k||_F^2
  Index next_row = 0;
  int zero_rows = 0;
  double scale = 0.0;  // largest pivot magnitude seen
  int small_steps = 0;
  std::mt19937_64 rng(0xacau ^ static_cast<std::uint64_t>(rows.begin * 31 + cols.begin));
  while (static_cast<Index>(us.size()) < kmax) {
    row_used[static_cast<size_t>(next_row)] = true;
    CVector row = fetch_row(next_row);
    Index jp = -1;
    double best = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (col_used[static_cast<size_t>(j)]) continue;
      if (std::abs(row(j)) > best) {
        best = std::abs(row(j));
        jp = j;
      }
    }
    if (jp < 0 || best <= 1e-14 * std::max(scale, 1e-300)) {
      // Numerically zero row: try the next unused one.
      ++zero_rows;
      Index cand = -1;
      for (Index i = 0; i < m; ++i)
        if (!row_used[static_cast<size_t>((next_row + 1 + i) % m)]) {
          cand = (next_row + 1 + i) % m;
          break;
        }
      if (cand < 0 || zero_rows >= 3) {
        out.stagnated = us.empty();
        break;
      }
      next_row = cand;
      continue;
    }
    zero_rows = 0;
    scale = std::max(scale, best);
    CVector v = row / row(jp);
    col_used[static_cast<size_t>(jp)] = true;
    CVector u = fetch_col(jp);

    const double nu2 = u.squaredNorm();
    const double nv2 = v.squaredNorm();
    double cross = 0.0;
    for (size_t l = 0; l < us.size(); ++l)
      cross += std::real(us[l].dot(u) * vs[l].dot(v));
    approx2 += 2.0 * cross + nu2 * nv2;
    us.push_back(std::move(u));
    vs.push_back(std::move(v));

    // The one-term test alone stops early on touching blocks: require it on
    // consecutive steps, then confirm with the residual of random rows.
    const double s_norm = std::sqrt(std::max(approx2, 0.0));
    small_steps = std::sqrt(nu2 * nv2) <= tol * s_norm ? small_steps + 1 : 0;
    if (small_steps >= 2) {
      std::vector<Index> free_rows;
      for (Index i = 0; i < m; ++i)
        if (!row_used[static_cast<size_t>(i)]) free_rows.push_back(i);
      if (free_rows.empty()) break;
      std::shuffle(free_rows.begin(), free_rows.end(), rng);
      free_rows.resize(std::min<size_t>(free_rows.size(), 8));
      double res2 = 0.0, worst = -1.0;
      Index worst_row = -1;
      for (Index i : free_rows) {
        const double r2 = fetch_row(i).squaredNorm();
        res2 += r2;
        if (r2 > worst) worst = r2, worst_row = i;
      }
      const double est = std::sqrt(res2 * static_cast<double>(m) / static_cast<double>(free_rows.size()));
      if (est <= tol * s_norm) break;
      small_steps = 0;
      next_row = worst_row;
      continue;
    }
    Index ip = -1;
    double bu = -1.0;
    for (Index i = 0; i < m; ++i) {
      if (row_used[static_cast<size_t>(i)]) continue;
      if (std::abs(us.back()(i)) > bu) {
        bu = std::abs(us.back()(i));
        ip = i;
      }
    }
    if (ip < 0) {
      break;
    }
    next_row = ip;
  }
  if (out.stagnated) {
    // No nonzero pivot among the sampled rows: either a zero block or a
    // breakdown, which only the full block can tell apart.
    CMatrix dense;
    src.block(rows, cols, dense);
    if (dense.cwiseAbs().maxCoeff() == 0.0) {
      out.stagnated = false;
      out.U = CMatrix(m, 0);
      out.V = CMatrix(0, n);
      return out;
    }
    auto id = id_compress(dense, tol);
    CMatrix skel(m, id.rank());
    for (Index c = 0; c < id.rank(); ++c) skel.col(c) = dense.col(id.skeleton[static_cast<size_t>(c)]);
    out.U = std::move(skel);
    out.V = std::move(id.interp);
    out.fell_back = true;
    return out;
  }
  const Index k = static_cast<Index>(us.size());
  CMatrix U(m, k), V(k, n);
  for (Index l = 0; l < k; ++l) {
    U.col(l) = us[static_cast<size_t>(l)];
    V.row(l) = vs[static_cast<size_t>(l)].transpose();
  }
  LowRankPair rc = recompress(U, V, tol);
  rc.stagnated = out.stagnated;
  return rc;
}

}  // namespace hodbf
