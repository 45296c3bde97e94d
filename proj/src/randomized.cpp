#include "hodbf/randomized.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hodbf/lowrank.hpp"
#include "hodbf/parallel.hpp"

namespace hodbf {

CMatrix LinearOperator::apply(const Eigen::Ref<const CMatrix>& x) const {
  CMatrix y(rows, x.cols());
  apply_into(x, y);
  return y;
}

CMatrix LinearOperator::apply_transpose(const Eigen::Ref<const CMatrix>& x) const {
  CMatrix y(cols, x.cols());
  apply_transpose_into(x, y);
  return y;
}

void LinearOperator::apply_into(const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) const {
  if (x.rows() != cols || y.rows() != rows || y.cols() != x.cols())
    throw Error("operator: shape mismatch");
  counts->forward += x.cols();
  forward(x, y);
}

void LinearOperator::apply_transpose_into(const Eigen::Ref<const CMatrix>& x,
                                          Eigen::Ref<CMatrix> y) const {
  if (x.rows() != rows || y.rows() != cols || y.cols() != x.cols())
    throw Error("operator: shape mismatch");
  counts->transpose += x.cols();
  transpose(x, y);
}

LinearOperator butterfly_operator(const Butterfly& bf) {
  LinearOperator op;
  op.rows = bf.rows();
  op.cols = bf.cols();
  const Butterfly* p = &bf;
  op.forward = [p](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) { bf_apply_into(*p, x, y); };
  op.transpose = [p](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    bf_apply_transpose_into(*p, x, y);
  };
  return op;
}

LinearOperator dense_operator(const CMatrix& a) {
  LinearOperator op;
  op.rows = a.rows();
  op.cols = a.cols();
  const CMatrix* p = &a;
  op.forward = [p](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) { y.noalias() = *p * x; };
  op.transpose = [p](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    y.noalias() = p->transpose() * x;
  };
  return op;
}

LinearOperator zero_operator(Index rows, Index cols) {
  LinearOperator op;
  op.rows = rows;
  op.cols = cols;
  op.forward = [](const Eigen::Ref<const CMatrix>&, Eigen::Ref<CMatrix> y) { y.setZero(); };
  op.transpose = [](const Eigen::Ref<const CMatrix>&, Eigen::Ref<CMatrix> y) { y.setZero(); };
  return op;
}

void fill_gaussian(Eigen::Ref<CMatrix> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  for (Index c = 0; c < out.cols(); ++c)
    for (Index r = 0; r < out.rows(); ++r) out(r, c) = Complex(g(rng), g(rng));
}

double probe_error(const LinearOperator& op, const Butterfly& bf, int num_probes, std::uint64_t seed) {
  if (op.rows != bf.rows() || op.cols != bf.cols()) throw Error("probe_error: shape mismatch");
  CMatrix g(op.cols, num_probes);
  fill_gaussian(g, seed);
  const CMatrix exact = op.apply(g);
  const CMatrix approx = bf_apply(bf, g);
  const double ref = exact.norm();
  const double diff = (exact - approx).norm();
  return ref > 0.0 ? diff / ref : diff;
}

namespace {

constexpr Index kBatchColumns = 128;

// Sketches of one butterfly level. Random blocks are supported on the nodes
// of one side ("support" nodes); each pair keeps the sketch rows of its
// candidate indices, stored as |cand| x k.
struct LevelSketch {
  std::vector<CMatrix> blocks;  // per pair
  std::vector<Index> width;     // per support node
  std::vector<CMatrix> random;  // per support node, |node| x width (kept on request)
  std::vector<IdFactor<Complex>> ids;
};

struct LevelSpec {
  const LinearOperator* op = nullptr;
  bool transpose = false;             // sketch with A^T (support on rows)
  const Partition* support = nullptr;
  int support_depth = 0;
  Index nodes = 0;
  Index other = 0;                    // nodes on the opposite side
  bool support_is_row = true;         // pair p = row * (#cols) + col
  const std::vector<std::vector<Index>>* cand = nullptr;
  std::vector<Index> min_width;       // optional lower bound per node
  bool keep_random = false;
};

class Reconstructor {
 public:
  Reconstructor(const LinearOperator& op, const Partition& rp, const Partition& cp, int L,
                double tol, Index k0, Index p, std::uint64_t seed, double norm_a)
      : op_(op), rp_(rp), cp_(cp), L_(L), tol_(tol), k0_(k0), p_(p), seed_(seed), norm_a_(norm_a) {}

  Butterfly run() {
    const int h = L_ / 2;
    const Index P = Index{1} << L_;
    Butterfly bf(rp_, cp_, L_);

    // Column side: levels 0..h, column IDs of R_tau^T A(tau, nu).
    std::vector<std::vector<Index>> cskel(static_cast<size_t>(P));
    Index guess = k0_;
    std::vector<Index> col_rank_h(static_cast<size_t>(P), 0);
    for (int l = 0; l <= h; ++l) {
      const Index nt = Index{1} << l;
      const Index nv = Index{1} << (L_ - l);
      std::vector<std::vector<Index>> cand(static_cast<size_t>(P));
      for (Index i = 0; i < nt; ++i)
        for (Index j = 0; j < nv; ++j) {
          auto& c = cand[static_cast<size_t>(i * nv + j)];
          if (l == 0) {
            const Range r = node_range(cp_, L_, j);
            for (Index t = r.begin; t < r.end; ++t) c.push_back(t);
          } else {
            const Index p1 = bf.pair_index(l - 1, i / 2, 2 * j);
            c = cskel[static_cast<size_t>(p1)];
            c.insert(c.end(), cskel[static_cast<size_t>(p1) + 1].begin(),
                     cskel[static_cast<size_t>(p1) + 1].end());
          }
        }
      LevelSpec spec;
      spec.op = &op_;
      spec.transpose = true;
      spec.support = &rp_;
      spec.support_depth = l;
      spec.nodes = nt;
      spec.other = nv;
      spec.support_is_row = true;
      spec.cand = &cand;
      spec.min_width.assign(static_cast<size_t>(nt), guess + p_);
      LevelSketch sk = sketch_level(spec, mix_seed(seed_, static_cast<std::uint64_t>(l)));
      Index maxr = 0;
      std::vector<std::vector<Index>> next(static_cast<size_t>(P));
      for (Index q = 0; q < P; ++q) {
        auto& id = sk.ids[static_cast<size_t>(q)];
        const auto& c = cand[static_cast<size_t>(q)];
        auto& sel = next[static_cast<size_t>(q)];
        for (Index s : id.skeleton) sel.push_back(c[static_cast<size_t>(s)]);
        maxr = std::max(maxr, id.rank());
        CMatrix v = std::move(id.interp);
        if (l == 0)
          bf.outer_v[static_cast<size_t>(q)] = std::move(v);
        else
          bf.inner[static_cast<size_t>(l) - 1][static_cast<size_t>(q)] = std::move(v);
        if (l == h) col_rank_h[static_cast<size_t>(q)] = id.rank();
      }
      cskel = std::move(next);
      guess = std::max(maxr, Index{1});
    }

    // Row side: levels L..h, row IDs of A(tau, nu) R_nu.
    std::vector<std::vector<Index>> rskel(static_cast<size_t>(P));
    guess = k0_;
    LevelSketch middle;
    for (int l = L_; l >= h; --l) {
      const Index nt = Index{1} << l;
      const Index nv = Index{1} << (L_ - l);
      std::vector<std::vector<Index>> cand(static_cast<size_t>(P));
      for (Index i = 0; i < nt; ++i)
        for (Index j = 0; j < nv; ++j) {
          auto& c = cand[static_cast<size_t>(i * nv + j)];
          if (l == L_) {
            const Range r = node_range(rp_, L_, i);
            for (Index t = r.begin; t < r.end; ++t) c.push_back(t);
          } else {
            // Children (2i, j/2) and (2i+1, j/2) at level l+1.
            const Index nvc = nv / 2;
            const auto& a = rskel[static_cast<size_t>(2 * i * nvc + j / 2)];
            const auto& b = rskel[static_cast<size_t>((2 * i + 1) * nvc + j / 2)];
            c = a;
            c.insert(c.end(), b.begin(), b.end());
          }
        }
      LevelSpec spec;
      spec.op = &op_;
      spec.transpose = false;
      spec.support = &cp_;
      spec.support_depth = L_ - l;
      spec.nodes = nv;
      spec.other = nt;
      spec.support_is_row = false;
      spec.cand = &cand;
      spec.min_width.assign(static_cast<size_t>(nv), guess + p_);
      if (l == h) {
        for (Index i = 0; i < nt; ++i)
          for (Index j = 0; j < nv; ++j)
            spec.min_width[static_cast<size_t>(j)] =
                std::max(spec.min_width[static_cast<size_t>(j)],
                         col_rank_h[static_cast<size_t>(i * nv + j)] + p_);
        spec.keep_random = true;
      }
      LevelSketch sk = sketch_level(spec, mix_seed(seed_, 0x100 + static_cast<std::uint64_t>(l)));
      Index maxr = 0;
      std::vector<std::vector<Index>> next(static_cast<size_t>(P));
      std::vector<CMatrix> u(static_cast<size_t>(P));
      for (Index q = 0; q < P; ++q) {
        auto& id = sk.ids[static_cast<size_t>(q)];
        const auto& c = cand[static_cast<size_t>(q)];
        for (Index s : id.skeleton) next[static_cast<size_t>(q)].push_back(c[static_cast<size_t>(s)]);
        u[static_cast<size_t>(q)] = id.interp.transpose();
        maxr = std::max(maxr, id.rank());
      }
      if (l == L_) {
        for (Index i = 0; i < P; ++i) bf.outer_b[static_cast<size_t>(i)] = u[static_cast<size_t>(i)];
      } else {
        // W^{l+1} for pair (tc, np): rows of U_(parent tc, children of np) belonging to tc.
        const Index nvc = nv / 2;
        for (Index tc = 0; tc < 2 * nt; ++tc)
          for (Index np = 0; np < nvc; ++np) {
            const Index i = tc / 2;
            const bool second = (tc % 2) == 1;
            const CMatrix& u1 = u[static_cast<size_t>(i * nv + 2 * np)];
            const CMatrix& u2 = u[static_cast<size_t>(i * nv + 2 * np + 1)];
            const Index first1 = static_cast<Index>(rskel[static_cast<size_t>(2 * i * nvc + np)].size());
            const Index rows_out = static_cast<Index>(rskel[static_cast<size_t>(tc * nvc + np)].size());
            // Candidate rows of (i, 2np) and (i, 2np+1) both start with child 2i's skeleton of np.
            const Index off = second ? first1 : 0;
            CMatrix w(rows_out, u1.cols() + u2.cols());
            w.leftCols(u1.cols()) = u1.middleRows(off, rows_out);
            w.rightCols(u2.cols()) = u2.middleRows(off, rows_out);
            bf.inner[static_cast<size_t>(l)][static_cast<size_t>(tc * nvc + np)] = std::move(w);
          }
      }
      rskel = std::move(next);
      guess = std::max(maxr, Index{1});
      if (l == h) middle = std::move(sk);
    }

    // Middle level h: coefficients of the row skeletons in terms of the column chain,
    // M = Y(rskel, :) * pinv(C R).
    const Index nv = Index{1} << (L_ - h);
    Index kmax = 0;
    for (Index j = 0; j < nv; ++j) kmax = std::max(kmax, middle.width[static_cast<size_t>(j)]);
    CMatrix r_all = CMatrix::Zero(op_.cols, kmax);
    for (Index j = 0; j < nv; ++j) {
      const Range r = node_range(cp_, L_ - h, j);
      const CMatrix& rj = middle.random[static_cast<size_t>(j)];
      r_all.block(r.begin, 0, r.size(), rj.cols()) = rj;
    }
    const auto coeff = bf_column_chain(bf, h, r_all);
    parallel_for(P, [&](Index q) {
      const Index j = q % nv;
      const Index k = middle.width[static_cast<size_t>(j)];
      const auto& id = middle.ids[static_cast<size_t>(q)];
      const CMatrix& c = coeff[static_cast<size_t>(q)];
      CMatrix& target = h == 0 ? bf.outer_v[static_cast<size_t>(q)]
                               : bf.inner[static_cast<size_t>(h) - 1][static_cast<size_t>(q)];
      const Index rr = id.rank();
      if (rr == 0 || c.rows() == 0) {
        target = CMatrix(rr, target.cols());
        target.setZero();
        return;
      }
      const CMatrix& block = middle.blocks[static_cast<size_t>(q)];
      CMatrix ys(rr, k);
      for (Index t = 0; t < rr; ++t) ys.row(t) = block.row(id.skeleton[static_cast<size_t>(t)]).head(k);
      const CMatrix ct = c.leftCols(k).transpose();
      const CMatrix mt = ct.colPivHouseholderQr().solve(ys.transpose());
      target = mt.transpose() * target;
    });
    return bf;
  }

 private:
  LevelSketch sketch_level(const LevelSpec& spec, std::uint64_t seed) const {
    const Index P = Index{1} << L_;
    LevelSketch sk;
    sk.blocks.resize(static_cast<size_t>(P));
    sk.ids.resize(static_cast<size_t>(P));
    sk.width.assign(static_cast<size_t>(spec.nodes), 0);
    if (spec.keep_random) sk.random.resize(static_cast<size_t>(spec.nodes));
    auto pair_of = [&](Index node, Index other) {
      return spec.support_is_row ? node * spec.other + other : other * spec.nodes + node;
    };
    const Index in_dim = spec.transpose ? op_.rows : op_.cols;
    const Index out_dim = spec.transpose ? op_.cols : op_.rows;
    // Largest useful width per node.
    std::vector<Index> cap(static_cast<size_t>(spec.nodes));
    for (Index nd = 0; nd < spec.nodes; ++nd) {
      Index maxc = 0;
      for (Index o = 0; o < spec.other; ++o)
        maxc = std::max<Index>(maxc, static_cast<Index>((*spec.cand)[static_cast<size_t>(pair_of(nd, o))].size()));
      const Index sz = node_range(*spec.support, spec.support_depth, nd).size();
      cap[static_cast<size_t>(nd)] = std::min(maxc, sz) + p_;
    }
    std::vector<Index> add(static_cast<size_t>(spec.nodes));
    for (Index nd = 0; nd < spec.nodes; ++nd)
      add[static_cast<size_t>(nd)] = std::min(spec.min_width[static_cast<size_t>(nd)], cap[static_cast<size_t>(nd)]);
    const double pairs_scale = 1.0 / std::sqrt(static_cast<double>(P));
    int round = 0;
    for (;;) {
      std::vector<Index> todo;
      for (Index nd = 0; nd < spec.nodes; ++nd)
        if (add[static_cast<size_t>(nd)] > 0) todo.push_back(nd);
      if (todo.empty()) break;
      // Batched products; each node contributes add[nd] columns.
      size_t t = 0;
      while (t < todo.size()) {
        Index cols = 0;
        size_t e = t;
        while (e < todo.size() && (cols == 0 || cols + add[static_cast<size_t>(todo[e])] <= kBatchColumns))
          cols += add[static_cast<size_t>(todo[e++])];
        CMatrix x = CMatrix::Zero(in_dim, cols);
        Index c0 = 0;
        for (size_t q = t; q < e; ++q) {
          const Index nd = todo[q];
          const Index w = add[static_cast<size_t>(nd)];
          const Range r = node_range(*spec.support, spec.support_depth, nd);
          CMatrix rnd(r.size(), w);
          fill_gaussian(rnd, mix_seed(mix_seed(seed, static_cast<std::uint64_t>(nd)),
                                      static_cast<std::uint64_t>(round)));
          x.block(r.begin, c0, r.size(), w) = rnd;
          if (spec.keep_random) {
            CMatrix& keep = sk.random[static_cast<size_t>(nd)];
            const Index old = keep.cols();
            keep.conservativeResize(r.size(), old + w);
            keep.rightCols(w) = rnd;
          }
          c0 += w;
        }
        CMatrix y(out_dim, cols);
        if (spec.transpose)
          spec.op->apply_transpose_into(x, y);
        else
          spec.op->apply_into(x, y);
        c0 = 0;
        for (size_t q = t; q < e; ++q) {
          const Index nd = todo[q];
          const Index w = add[static_cast<size_t>(nd)];
          for (Index o = 0; o < spec.other; ++o) {
            const Index pr = pair_of(nd, o);
            const auto& c = (*spec.cand)[static_cast<size_t>(pr)];
            CMatrix& blk = sk.blocks[static_cast<size_t>(pr)];
            const Index old = blk.cols();
            blk.conservativeResize(static_cast<Index>(c.size()), old + w);
            for (size_t s = 0; s < c.size(); ++s)
              blk.row(static_cast<Index>(s)).tail(w) = y.row(c[s]).segment(c0, w);
          }
          c0 += w;
        }
        t = e;
      }
      for (Index nd : todo) sk.width[static_cast<size_t>(nd)] += add[static_cast<size_t>(nd)];
      // IDs of the touched pairs; a node grows when a pair's rank nears its width.
      std::vector<Index> grow(static_cast<size_t>(spec.nodes), 0);
      parallel_for(static_cast<Index>(todo.size()), [&](Index ti) {
        const Index nd = todo[static_cast<size_t>(ti)];
        const Index k = sk.width[static_cast<size_t>(nd)];
        const double abs_tol = tol_ * norm_a_ * std::sqrt(static_cast<double>(k)) * pairs_scale * 0.5;
        bool short_width = false;
        for (Index o = 0; o < spec.other; ++o) {
          const Index pr = pair_of(nd, o);
          const CMatrix& blk = sk.blocks[static_cast<size_t>(pr)];
          if (blk.rows() == 0) {
            sk.ids[static_cast<size_t>(pr)] = IdFactor<Complex>{};
            sk.ids[static_cast<size_t>(pr)].interp = CMatrix(0, 0);
            continue;
          }
          auto id = id_compress(blk.transpose(), tol_, -1, abs_tol);
          if (id.rank() + p_ / 2 > k && id.rank() < blk.rows()) short_width = true;
          sk.ids[static_cast<size_t>(pr)] = std::move(id);
        }
        if (short_width && k < cap[static_cast<size_t>(nd)])
          grow[static_cast<size_t>(nd)] = std::min(k, cap[static_cast<size_t>(nd)] - k);
      });
      add = std::move(grow);
      ++round;
    }
    return sk;
  }

  const LinearOperator& op_;
  const Partition& rp_;
  const Partition& cp_;
  int L_;
  double tol_;
  Index k0_;
  Index p_;
  std::uint64_t seed_;
  double norm_a_;
};

}  // namespace

Butterfly bf_random_matvec(const LinearOperator& op, const Partition& rows, const Partition& cols,
                           int levels, const RandomOptions& opt, RandomStats* stats) {
  if (!(opt.tol > 0.0 && opt.tol < 1.0)) throw Error("bf_random_matvec: tolerance must lie in (0,1)");
  if (levels < 0 || static_cast<int>(rows.size()) < levels + 1 || static_cast<int>(cols.size()) < levels + 1)
    throw Error("bf_random_matvec: partitions shallower than the level count");
  if (rows[0].back() != op.rows || cols[0].back() != op.cols)
    throw Error("bf_random_matvec: operator shape does not match the partitions");
  const Partition rp = truncate_partition(rows, levels);
  const Partition cp = truncate_partition(cols, levels);
  const Index f0 = op.counts->forward;
  const Index t0 = op.counts->transpose;
  auto finish = [&](double err, int retries) {
    if (stats) {
      stats->forward_columns = op.counts->forward - f0;
      stats->transpose_columns = op.counts->transpose - t0;
      stats->probe_error = err;
      stats->retries = retries;
    }
  };

  constexpr int kNormProbes = 8;
  CMatrix g(op.cols, kNormProbes);
  fill_gaussian(g, mix_seed(opt.seed, 0xa11));
  const double norm_a = op.apply(g).norm() / std::sqrt(static_cast<double>(kNormProbes));
  if (norm_a == 0.0) {
    finish(0.0, 0);
    return Butterfly(rp, cp, levels);
  }

  double best = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    const double tol = opt.tol / std::sqrt(static_cast<double>(levels) + 1.0) / std::pow(2.0, attempt);
    const Index k0 = opt.initial_rank << attempt;
    Reconstructor rec(op, rp, cp, levels, tol, k0, opt.oversampling,
                      mix_seed(opt.seed, static_cast<std::uint64_t>(attempt) + 1), norm_a);
    Butterfly bf = rec.run();
    const double err = probe_error(op, bf, opt.probes, mix_seed(opt.seed, 0x9b0be + static_cast<std::uint64_t>(attempt)));
    best = std::min(best, err);
    if (err <= 10.0 * opt.tol) {
      finish(err, attempt);
      return bf;
    }
  }
  finish(best, opt.max_retries);
  std::ostringstream msg;
  msg << "reconstruction tolerance unreachable (achieved " << best << ", target " << 10.0 * opt.tol << ")";
  throw ReconstructionError(msg.str(), best);
}

}  // namespace hodbf
