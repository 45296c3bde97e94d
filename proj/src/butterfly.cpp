#include "hodbf/butterfly.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "hodbf/lowrank.hpp"
#include "hodbf/parallel.hpp"

namespace hodbf {

Partition halving_partition(Index n, int depth) {
  Partition p(static_cast<size_t>(depth) + 1);
  p[0] = {0, n};
  for (int d = 1; d <= depth; ++d) {
    const auto& up = p[static_cast<size_t>(d) - 1];
    auto& cur = p[static_cast<size_t>(d)];
    cur.reserve(up.size() * 2 - 1);
    cur.push_back(0);
    for (size_t k = 0; k + 1 < up.size(); ++k) {
      const Index len = up[k + 1] - up[k];
      cur.push_back(up[k] + (len + 1) / 2);
      cur.push_back(up[k + 1]);
    }
  }
  return p;
}

Partition sub_partition(const Partition& p, int d, Index pos, int depth) {
  if (d + depth >= static_cast<int>(p.size())) throw Error("sub_partition: depth out of range");
  Partition out(static_cast<size_t>(depth) + 1);
  const Index base = p[static_cast<size_t>(d)][static_cast<size_t>(pos)];
  for (int k = 0; k <= depth; ++k) {
    const auto& src = p[static_cast<size_t>(d + k)];
    const Index first = pos << k;
    const Index count = Index{1} << k;
    auto& dst = out[static_cast<size_t>(k)];
    dst.resize(static_cast<size_t>(count) + 1);
    for (Index t = 0; t <= count; ++t)
      dst[static_cast<size_t>(t)] = src[static_cast<size_t>(first + t)] - base;
  }
  return out;
}

Partition truncate_partition(const Partition& p, int depth) {
  if (depth + 1 > static_cast<int>(p.size())) throw Error("truncate_partition: depth out of range");
  return Partition(p.begin(), p.begin() + depth + 1);
}

Butterfly::Butterfly(Partition rows, Partition cols, int levels)
    : levels_(levels), rows_(std::move(rows)), cols_(std::move(cols)) {
  if (levels < 0) throw Error("butterfly: negative level count");
  if (static_cast<int>(rows_.size()) < levels + 1 || static_cast<int>(cols_.size()) < levels + 1)
    throw Error("butterfly: partitions shallower than the level count");
  rows_.resize(static_cast<size_t>(levels) + 1);
  cols_.resize(static_cast<size_t>(levels) + 1);
  const Index P = pairs();
  outer_v.resize(static_cast<size_t>(P));
  outer_b.resize(static_cast<size_t>(P));
  for (Index j = 0; j < P; ++j) {
    outer_v[static_cast<size_t>(j)] = CMatrix(0, node_range(cols_, levels, j).size());
    outer_b[static_cast<size_t>(j)] = CMatrix(node_range(rows_, levels, j).size(), 0);
  }
  inner.assign(static_cast<size_t>(levels), std::vector<CMatrix>(static_cast<size_t>(P)));
}

Index Butterfly::rank(int level, Index p) const {
  if (level == 0) return outer_v[static_cast<size_t>(p)].rows();
  return inner[static_cast<size_t>(level) - 1][static_cast<size_t>(p)].rows();
}

bool Butterfly::is_zero() const {
  for (Index p = 0; p < pairs(); ++p)
    if (rank(levels_, p) != 0) return false;
  return true;
}

void Butterfly::validate() const {
  const Index P = pairs();
  if (static_cast<Index>(outer_v.size()) != P || static_cast<Index>(outer_b.size()) != P ||
      static_cast<int>(inner.size()) != levels_)
    throw Error("butterfly: factor count mismatch");
  for (Index j = 0; j < P; ++j)
    if (outer_v[static_cast<size_t>(j)].cols() != node_range(cols_, levels_, j).size())
      throw Error("butterfly: V0 block shape mismatch");
  for (int l = 1; l <= levels_; ++l) {
    const Index nj = Index{1} << (levels_ - l);
    for (Index i = 0; i < (Index{1} << l); ++i)
      for (Index j = 0; j < nj; ++j) {
        const Index p1 = pair_index(l - 1, i / 2, 2 * j);
        const auto& w = inner[static_cast<size_t>(l) - 1][static_cast<size_t>(pair_index(l, i, j))];
        if (w.cols() != rank(l - 1, p1) + rank(l - 1, p1 + 1))
          throw Error("butterfly: transfer block shape mismatch");
      }
  }
  for (Index i = 0; i < P; ++i) {
    const auto& b = outer_b[static_cast<size_t>(i)];
    if (b.rows() != node_range(rows_, levels_, i).size() || b.cols() != rank(levels_, i))
      throw Error("butterfly: B block shape mismatch");
  }
}

namespace {

void apply_transfer(const CMatrix& w, const CMatrix& a, const CMatrix& b, CMatrix& out) {
  const Index k = std::max(a.cols(), b.cols());
  out.resize(w.rows(), k);
  if (w.rows() == 0) return;
  if (w.cols() == 0) {
    out.setZero();
    return;
  }
  out.noalias() = w.leftCols(a.rows()) * a;
  out.noalias() += w.rightCols(b.rows()) * b;
}

std::vector<CMatrix> chain_to(const Butterfly& bf, int level, const Eigen::Ref<const CMatrix>& x) {
  const int L = bf.levels();
  const Index P = bf.pairs();
  const auto& cp = bf.col_partition();
  std::vector<CMatrix> cur(static_cast<size_t>(P)), next(static_cast<size_t>(P));
  parallel_for(P, [&](Index j) {
    const Range r = node_range(cp, L, j);
    cur[static_cast<size_t>(j)].noalias() = bf.outer_v[static_cast<size_t>(j)] * x.middleRows(r.begin, r.size());
  });
  for (int l = 1; l <= level; ++l) {
    const Index nj = Index{1} << (L - l);
    const auto& W = bf.inner[static_cast<size_t>(l) - 1];
    parallel_for(P, [&](Index p) {
      const Index i = p / nj;
      const Index j = p % nj;
      const Index p1 = bf.pair_index(l - 1, i / 2, 2 * j);
      apply_transfer(W[static_cast<size_t>(p)], cur[static_cast<size_t>(p1)],
                     cur[static_cast<size_t>(p1) + 1], next[static_cast<size_t>(p)]);
    });
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

void bf_apply_into(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y,
                   Complex alpha, bool accumulate) {
  if (x.rows() != bf.cols() || y.rows() != bf.rows() || y.cols() != x.cols())
    throw Error("bf_apply: shape mismatch");
  if (!accumulate) y.setZero();
  const int L = bf.levels();
  auto cur = chain_to(bf, L, x);
  const auto& rp = bf.row_partition();
  for (Index i = 0; i < bf.pairs(); ++i) {
    const Range r = node_range(rp, L, i);
    const auto& b = bf.outer_b[static_cast<size_t>(i)];
    if (b.cols() == 0) continue;
    y.middleRows(r.begin, r.size()).noalias() += alpha * (b * cur[static_cast<size_t>(i)]);
  }
}

void bf_apply_transpose_into(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x,
                             Eigen::Ref<CMatrix> y, Complex alpha, bool accumulate) {
  if (x.rows() != bf.rows() || y.rows() != bf.cols() || y.cols() != x.cols())
    throw Error("bf_apply_transpose: shape mismatch");
  if (!accumulate) y.setZero();
  const int L = bf.levels();
  const Index P = bf.pairs();
  const Index k = x.cols();
  const auto& rp = bf.row_partition();
  const auto& cp = bf.col_partition();
  std::vector<CMatrix> cur(static_cast<size_t>(P)), next(static_cast<size_t>(P));
  parallel_for(P, [&](Index i) {
    const Range r = node_range(rp, L, i);
    cur[static_cast<size_t>(i)].noalias() =
        bf.outer_b[static_cast<size_t>(i)].transpose() * x.middleRows(r.begin, r.size());
  });
  for (int l = L; l >= 1; --l) {
    const Index nj = Index{1} << (L - l);
    const auto& W = bf.inner[static_cast<size_t>(l) - 1];
    // Each level-(l-1) pair receives from the two level-l pairs (2a, j/2), (2a+1, j/2).
    const Index nj_prev = nj * 2;
    parallel_for(P, [&](Index q) {
      const Index a = q / nj_prev;
      const Index jj = q % nj_prev;
      const Index j = jj / 2;
      const bool right = (jj % 2) == 1;
      CMatrix& out = next[static_cast<size_t>(q)];
      out.setZero(bf.rank(l - 1, q), k);
      if (out.rows() == 0) return;
      for (Index c = 0; c < 2; ++c) {
        const Index p = bf.pair_index(l, 2 * a + c, j);
        const CMatrix& w = W[static_cast<size_t>(p)];
        if (w.rows() == 0) continue;
        const Index r1 = bf.rank(l - 1, q - (right ? 1 : 0));
        const Index off = right ? r1 : 0;
        out.noalias() += w.middleCols(off, out.rows()).transpose() * cur[static_cast<size_t>(p)];
      }
    });
    std::swap(cur, next);
  }
  for (Index j = 0; j < P; ++j) {
    const Range r = node_range(cp, L, j);
    const auto& v = bf.outer_v[static_cast<size_t>(j)];
    if (v.rows() == 0) continue;
    y.middleRows(r.begin, r.size()).noalias() += alpha * (v.transpose() * cur[static_cast<size_t>(j)]);
  }
}

CMatrix bf_apply(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x) {
  CMatrix y(bf.rows(), x.cols());
  bf_apply_into(bf, x, y);
  return y;
}

CMatrix bf_apply_transpose(const Butterfly& bf, const Eigen::Ref<const CMatrix>& x) {
  CMatrix y(bf.cols(), x.cols());
  bf_apply_transpose_into(bf, x, y);
  return y;
}

CMatrix bf_densify(const Butterfly& bf) {
  CMatrix out(bf.rows(), bf.cols());
  const Index n = bf.cols();
  constexpr Index chunk = 256;
  for (Index c = 0; c < n; c += chunk) {
    const Index w = std::min(chunk, n - c);
    CMatrix e = CMatrix::Zero(n, w);
    for (Index t = 0; t < w; ++t) e(c + t, t) = 1.0;
    bf_apply_into(bf, e, out.middleCols(c, w));
  }
  return out;
}

ButterflyStats bf_stats(const Butterfly& bf) {
  ButterflyStats s;
  auto add = [&](const CMatrix& m) { s.storage_units += m.size(); };
  for (const auto& v : bf.outer_v) {
    add(v);
    s.max_rank = std::max(s.max_rank, v.rows());
  }
  for (const auto& lvl : bf.inner)
    for (const auto& w : lvl) {
      add(w);
      s.max_rank = std::max(s.max_rank, w.rows());
    }
  for (const auto& b : bf.outer_b) add(b);
  s.flops_estimate = s.storage_units;
  return s;
}

std::vector<CMatrix> bf_column_chain(const Butterfly& bf, int level,
                                     const Eigen::Ref<const CMatrix>& x) {
  if (level < 0 || level > bf.levels()) throw Error("bf_column_chain: level out of range");
  if (x.rows() != bf.cols()) throw Error("bf_column_chain: shape mismatch");
  return chain_to(bf, level, x);
}

Butterfly bf_quadrant(const Butterfly& bf, int a, int b) {
  const int L = bf.levels();
  if (L < 1) throw Error("bf_quadrant: needs at least one level");
  if (a < 0 || a > 1 || b < 0 || b > 1) throw Error("bf_quadrant: quadrant index out of range");
  const int Lq = std::max(L - 2, 0);
  Butterfly q(sub_partition(bf.row_partition(), 1, a, Lq), sub_partition(bf.col_partition(), 1, b, Lq), Lq);
  auto part = [&](const CMatrix& w, int level, Index left_pair) -> CMatrix {
    // Columns of w that act on input `b` (left pair or its right neighbour).
    const Index r1 = bf.rank(level, left_pair);
    const Index r2 = bf.rank(level, left_pair + 1);
    return b == 0 ? CMatrix(w.leftCols(r1)) : CMatrix(w.rightCols(r2));
  };
  if (L == 1) {
    q.outer_v[0] = bf.outer_v[static_cast<size_t>(b)];
    q.outer_b[0] = bf.outer_b[static_cast<size_t>(a)] * part(bf.inner[0][static_cast<size_t>(a)], 0, 0);
    return q;
  }
  const Index P = q.pairs();
  const auto& cp = bf.col_partition();
  for (Index jq = 0; jq < P; ++jq) {
    const Index J = (Index{b} << (L - 2)) + jq;
    const CMatrix& w = bf.inner[0][static_cast<size_t>(bf.pair_index(1, a, J))];
    const CMatrix& v1 = bf.outer_v[static_cast<size_t>(2 * J)];
    const CMatrix& v2 = bf.outer_v[static_cast<size_t>(2 * J + 1)];
    const Index n1 = node_range(cp, L, 2 * J).size();
    const Index n2 = node_range(cp, L, 2 * J + 1).size();
    CMatrix v(w.rows(), n1 + n2);
    if (w.rows() > 0) {
      v.leftCols(n1).noalias() = w.leftCols(v1.rows()) * v1;
      v.rightCols(n2).noalias() = w.rightCols(v2.rows()) * v2;
    }
    q.outer_v[static_cast<size_t>(jq)] = std::move(v);
  }
  for (int lq = 1; lq <= Lq; ++lq) {
    const Index nj = Index{1} << (Lq - lq);
    for (Index i = 0; i < (Index{1} << lq); ++i)
      for (Index j = 0; j < nj; ++j) {
        const Index I = (Index{a} << lq) + i;
        const Index J = (Index{b} << (L - 2 - lq)) + j;
        q.inner[static_cast<size_t>(lq) - 1][static_cast<size_t>(q.pair_index(lq, i, j))] =
            bf.inner[static_cast<size_t>(lq)][static_cast<size_t>(bf.pair_index(lq + 1, I, J))];
      }
  }
  const auto& rp = bf.row_partition();
  for (Index iq = 0; iq < P; ++iq) {
    const Index I = (Index{a} << (L - 2)) + iq;
    const Index left_pair = bf.pair_index(L - 1, I, 0);
    const CMatrix& b1 = bf.outer_b[static_cast<size_t>(2 * I)];
    const CMatrix& b2 = bf.outer_b[static_cast<size_t>(2 * I + 1)];
    const CMatrix w1 = part(bf.inner[static_cast<size_t>(L) - 1][static_cast<size_t>(2 * I)], L - 1, left_pair);
    const CMatrix w2 = part(bf.inner[static_cast<size_t>(L) - 1][static_cast<size_t>(2 * I + 1)], L - 1, left_pair);
    const Index m1 = node_range(rp, L, 2 * I).size();
    const Index m2 = node_range(rp, L, 2 * I + 1).size();
    CMatrix out(m1 + m2, w1.cols());
    out.topRows(m1).noalias() = b1 * w1;
    out.bottomRows(m2).noalias() = b2 * w2;
    q.outer_b[static_cast<size_t>(iq)] = std::move(out);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Entry-based construction

namespace {

struct Box {
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = Point3::Constant(-std::numeric_limits<double>::infinity());
  void add(const Point3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void add(const Box& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  double distance(const Point3& p) const {
    return (lo - p).cwiseMax(p - hi).cwiseMax(0.0).norm();
  }
  double distance(const Box& b) const {
    return (lo - b.hi).cwiseMax(b.lo - hi).cwiseMax(0.0).norm();
  }
};

// Boxes for every node of a partition, indexed [depth][pos].
std::vector<std::vector<Box>> partition_boxes(const std::vector<Point3>& pts, Index offset,
                                              const Partition& p) {
  const int L = static_cast<int>(p.size()) - 1;
  std::vector<std::vector<Box>> boxes(p.size());
  boxes[static_cast<size_t>(L)].resize(static_cast<size_t>(node_count(p, L)));
  for (Index k = 0; k < node_count(p, L); ++k) {
    const Range r = node_range(p, L, k);
    for (Index t = r.begin; t < r.end; ++t)
      boxes[static_cast<size_t>(L)][static_cast<size_t>(k)].add(pts[static_cast<size_t>(offset + t)]);
  }
  for (int d = L - 1; d >= 0; --d) {
    auto& cur = boxes[static_cast<size_t>(d)];
    const auto& down = boxes[static_cast<size_t>(d) + 1];
    cur.resize(static_cast<size_t>(node_count(p, d)));
    for (size_t k = 0; k < cur.size(); ++k) {
      cur[k].add(down[2 * k]);
      cur[k].add(down[2 * k + 1]);
    }
  }
  return boxes;
}

class Builder {
 public:
  Builder(const EntrySource& src, Range rows, const Partition& rp, Range cols, const Partition& cp,
          int L, const CompressOptions& opt)
      : src_(src), rows_(rows), cols_(cols), rp_(rp), cp_(cp), L_(L), opt_(opt) {
    const auto* rpts = src.row_points();
    const auto* cpts = src.col_points();
    if (rpts && cpts) {
      row_pts_ = rpts;
      row_boxes_ = partition_boxes(*rpts, rows.begin, rp_);
      col_boxes_ = partition_boxes(*cpts, cols.begin, cp_);
    }
  }

  Butterfly build(Index r_est, std::uint64_t seed) const {
    Butterfly bf(rp_, cp_, L_);
    const Index P = bf.pairs();
    std::vector<std::vector<Index>> skel(static_cast<size_t>(P)), prev(static_cast<size_t>(P));
    bf.skeletons.assign(static_cast<size_t>(L_) + 1, {});
    for (int l = 0; l <= L_; ++l) {
      const Index nj = Index{1} << (L_ - l);
      parallel_for(P, [&](Index p) {
        const Index i = p / nj;
        const Index j = p % nj;
        std::vector<Index> cand;
        if (l == 0) {
          const Range c = node_range(cp_, L_, j);
          cand.resize(static_cast<size_t>(c.size()));
          std::iota(cand.begin(), cand.end(), c.begin);
        } else {
          const Index p1 = bf.pair_index(l - 1, i / 2, 2 * j);
          cand = prev[static_cast<size_t>(p1)];
          cand.insert(cand.end(), prev[static_cast<size_t>(p1) + 1].begin(),
                      prev[static_cast<size_t>(p1) + 1].end());
        }
        std::vector<Index> sel;
        CMatrix interp;
        if (!cand.empty()) {
          // Grow the proxy sample until it holds beta rows per detected rank.
          const Index rows_avail = node_range(rp_, l, i).size();
          Index est = r_est;
          for (int round = 0;; ++round) {
            const auto sample = proxy_rows(l, i, j, est,
                                           mix_seed(seed, static_cast<std::uint64_t>((l << 24) + p + (round << 20))));
            CMatrix blk;
            fetch(sample, cand, blk);
            auto id = id_compress(blk, opt_.tol);
            const auto n_sample = static_cast<Index>(sample.size());
            const bool enough = n_sample >= rows_avail ||
                                opt_.oversampling * static_cast<double>(id.rank()) <= static_cast<double>(n_sample);
            if (enough) {
              sel.clear();
              for (Index s : id.skeleton) sel.push_back(cand[static_cast<size_t>(s)]);
              interp = std::move(id.interp);
              break;
            }
            est = std::max(2 * est, id.rank());
          }
        } else {
          interp = CMatrix(0, 0);
        }
        if (l == 0)
          bf.outer_v[static_cast<size_t>(p)] = std::move(interp);
        else
          bf.inner[static_cast<size_t>(l) - 1][static_cast<size_t>(p)] = std::move(interp);
        skel[static_cast<size_t>(p)] = std::move(sel);
      });
      bf.skeletons[static_cast<size_t>(l)] = skel;
      std::swap(prev, skel);
    }
    parallel_for(P, [&](Index i) {
      const Range r = node_range(rp_, L_, i);
      std::vector<Index> rr(static_cast<size_t>(r.size()));
      std::iota(rr.begin(), rr.end(), r.begin);
      CMatrix blk;
      fetch(rr, prev[static_cast<size_t>(i)], blk);
      bf.outer_b[static_cast<size_t>(i)] = std::move(blk);
    });
    return bf;
  }

  /// Relative error of the butterfly on a row sample (random rows plus the row leaf nearest
  /// to the column block) against exact entries.
  double check(const Butterfly& bf, std::uint64_t seed) const {
    const Index m = rows_.size();
    const Index n = cols_.size();
    std::mt19937_64 rng(seed);
    std::vector<Index> rr;
    if (m <= 64) {
      rr.resize(static_cast<size_t>(m));
      std::iota(rr.begin(), rr.end(), 0);
    } else {
      std::uniform_int_distribution<Index> pick(0, m - 1);
      for (int t = 0; t < 32; ++t) rr.push_back(pick(rng));
      if (row_pts_) {
        const auto& leaves = row_boxes_.back();
        const Box& cb = col_boxes_[0][0];
        size_t best = 0;
        for (size_t k = 1; k < leaves.size(); ++k)
          if (leaves[k].distance(cb) < leaves[best].distance(cb)) best = k;
        const Range r = node_range(rp_, L_, static_cast<Index>(best));
        for (Index t = r.begin; t < r.end; ++t) rr.push_back(t);
      }
      std::sort(rr.begin(), rr.end());
      rr.erase(std::unique(rr.begin(), rr.end()), rr.end());
    }
    std::vector<Index> cc(static_cast<size_t>(n));
    std::iota(cc.begin(), cc.end(), 0);
    CMatrix exact;
    fetch(rr, cc, exact);
    std::normal_distribution<double> g;
    CMatrix x(n, 4);
    for (Index c = 0; c < x.cols(); ++c)
      for (Index t = 0; t < n; ++t) x(t, c) = Complex(g(rng), g(rng));
    const CMatrix ex = exact * x;
    const CMatrix full = bf_apply(bf, x);
    CMatrix ap(static_cast<Index>(rr.size()), x.cols());
    for (size_t t = 0; t < rr.size(); ++t) ap.row(static_cast<Index>(t)) = full.row(rr[t]);
    const double ref = ex.norm();
    return ref > 0.0 ? (ex - ap).norm() / ref : ap.norm();
  }

 private:
  void fetch(const std::vector<Index>& r, const std::vector<Index>& c, CMatrix& out) const {
    std::vector<Index> gr(r.size()), gc(c.size());
    for (size_t t = 0; t < r.size(); ++t) gr[t] = rows_.begin + r[t];
    for (size_t t = 0; t < c.size(); ++t) gc[t] = cols_.begin + c[t];
    src_.block(std::span<const Index>(gr), std::span<const Index>(gc), out);
    if (!out.allFinite()) throw Error("bf_compress: non-finite entries");
  }

  // Proxy rows of row node (depth l, pos i) for column node (depth L-l, pos j).
  std::vector<Index> proxy_rows(int l, Index i, Index j, Index r_est, std::uint64_t seed) const {
    const Range tr = node_range(rp_, l, i);
    const Index want = static_cast<Index>(opt_.oversampling * static_cast<double>(r_est));
    std::vector<Index> out;
    if (2 * want >= tr.size()) {
      out.resize(static_cast<size_t>(tr.size()));
      std::iota(out.begin(), out.end(), tr.begin);
      return out;
    }
    std::vector<char> taken(static_cast<size_t>(tr.size()), 0);
    if (row_pts_) {
      // Half of the sample: rows closest to the column cluster.
      const Box& cb = col_boxes_[static_cast<size_t>(L_ - l)][static_cast<size_t>(j)];
      const Index first = i << (L_ - l);
      const Index nleaf = Index{1} << (L_ - l);
      const auto& leaves = row_boxes_.back();
      std::vector<std::pair<double, Index>> order(static_cast<size_t>(nleaf));
      for (Index k = 0; k < nleaf; ++k)
        order[static_cast<size_t>(k)] = {leaves[static_cast<size_t>(first + k)].distance(cb), first + k};
      std::sort(order.begin(), order.end());
      const Index near = want / 2;
      std::vector<std::pair<double, Index>> pts;
      for (const auto& [d, leaf] : order) {
        if (static_cast<Index>(pts.size()) >= 2 * near) break;
        const Range r = node_range(rp_, L_, leaf);
        for (Index t = r.begin; t < r.end; ++t)
          pts.emplace_back(cb.distance((*row_pts_)[static_cast<size_t>(rows_.begin + t)]), t);
      }
      const Index take = std::min<Index>(near, static_cast<Index>(pts.size()));
      std::partial_sort(pts.begin(), pts.begin() + take, pts.end());
      for (Index t = 0; t < take; ++t) {
        out.push_back(pts[static_cast<size_t>(t)].second);
        taken[static_cast<size_t>(pts[static_cast<size_t>(t)].second - tr.begin)] = 1;
      }
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> pick(tr.begin, tr.end - 1);
    while (static_cast<Index>(out.size()) < want) {
      const Index t = pick(rng);
      if (taken[static_cast<size_t>(t - tr.begin)]) continue;
      taken[static_cast<size_t>(t - tr.begin)] = 1;
      out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  const EntrySource& src_;
  Range rows_, cols_;
  Partition rp_, cp_;
  int L_;
  CompressOptions opt_;
  const std::vector<Point3>* row_pts_ = nullptr;
  std::vector<std::vector<Box>> row_boxes_, col_boxes_;
};

}  // namespace

Butterfly bf_compress(const EntrySource& src, Range rows, const Partition& row_part, Range cols,
                      const Partition& col_part, int levels, const CompressOptions& opt) {
  if (!(opt.tol > 0.0 && opt.tol < 1.0)) throw Error("bf_compress: tolerance must lie in (0,1)");
  if (levels < 0 || static_cast<int>(row_part.size()) < levels + 1 ||
      static_cast<int>(col_part.size()) < levels + 1)
    throw Error("bf_compress: partitions shallower than the level count");
  if (rows.end > src.rows() || cols.end > src.cols() || row_part[0].back() != rows.size() ||
      col_part[0].back() != cols.size())
    throw Error("bf_compress: block outside the source");
  const Builder builder(src, rows, truncate_partition(row_part, levels), cols,
                        truncate_partition(col_part, levels), levels, opt);
  Index r_est = std::max<Index>(opt.rank_estimate, 1);
  Butterfly best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    const std::uint64_t seed = mix_seed(opt.seed, static_cast<std::uint64_t>(attempt));
    Butterfly bf = builder.build(r_est, seed);
    const double err = builder.check(bf, mix_seed(seed, 0xc0ffee));
    if (err < best_err) {
      best_err = err;
      best = std::move(bf);
    }
    if (best_err <= 10.0 * opt.tol) break;
    r_est *= 2;
  }
  return best;
}

Butterfly bf_compress(const EntrySource& src, const ClusterTree& tree, Index o, Index s,
                      int levels, const CompressOptions& opt) {
  return bf_compress(src, tree.range(o), tree.partition(o, levels), tree.range(s),
                     tree.partition(s, levels), levels, opt);
}

}  // namespace hodbf
