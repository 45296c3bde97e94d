#include "hodbf/hodbf.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hodbf/lowrank.hpp"
#include "hodbf/parallel.hpp"

namespace hodbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Index max_leaf(const ClusterTree& tree) {
  Index m = 0;
  const int L = tree.levels();
  for (Index j = 0; j < (Index{1} << L); ++j)
    m = std::max(m, tree.range(ClusterTree::node_id(L, j)).size());
  return m;
}

void accumulate_stats(HodBfStats& s, const Butterfly& bf) {
  const auto st = bf_stats(bf);
  s.storage_units += st.storage_units;
  s.max_rank = std::max(s.max_rank, st.max_rank);
}

}  // namespace

int hodbf_block_levels(const ClusterTree& tree, int depth) {
  int L = tree.levels() - depth;
  while (L > 0 && (tree.size() >> (depth + L)) < 8) --L;
  return std::max(L, 0);
}

int HodBfMatrix::block_levels(int depth) const { return hodbf_block_levels(tree, depth); }

HodBfMatrix hodbf_construct(const KernelSystem& sys, const ClusterTree& tree, double tol_con,
                            const CompressOptions& base) {
  if (sys.size() != tree.size()) throw Error("hodbf_construct: tree does not match the system");
  const KernelEntries src(sys, tree);
  return hodbf_construct(src, tree, tol_con, base);
}

HodBfMatrix hodbf_construct(const EntrySource& src, const ClusterTree& tree, double tol_con,
                            const CompressOptions& base) {
  if (!(tol_con > 0.0 && tol_con < 1.0)) throw Error("hodbf_construct: tolerance must lie in (0,1)");
  if (src.rows() != tree.size() || src.cols() != tree.size())
    throw Error("hodbf_construct: source shape does not match the tree");
  const auto t0 = Clock::now();
  HodBfMatrix a;
  a.tree = tree;
  a.role = Role::forward;
  a.tol = tol_con;
  a.tol_con = tol_con;
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
    CompressOptions opt = base;
    opt.tol = tol_con;
    opt.seed = mix_seed(base.seed, static_cast<std::uint64_t>(id));
    const int L = hodbf_block_levels(tree, ClusterTree::node_level(id));
    a.offdiag[static_cast<size_t>(id)] = bf_compress(src, tree, id, ClusterTree::sibling(id), L, opt);
  });
  for (const auto& d : a.leaf) a.stats.storage_units += d.size();
  for (Index id = 1; id < tree.num_nodes(); ++id) accumulate_stats(a.stats, a.offdiag[static_cast<size_t>(id)]);
  a.stats.construct_time = seconds_since(t0);
  return a;
}

CMatrix hodbf_matvec(const HodBfMatrix& a, const Eigen::Ref<const CMatrix>& x) {
  if (a.role != Role::forward) throw Error("hodbf_matvec: matrix is an inverse");
  if (x.rows() != a.size()) throw Error("hodbf_matvec: shape mismatch");
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
      const Range r = tree.range(id);
      const Range s = tree.range(ClusterTree::sibling(id));
      bf_apply_into(a.offdiag[static_cast<size_t>(id)], x.middleRows(s.begin, s.size()),
                    y.middleRows(r.begin, r.size()), Complex{1.0, 0.0}, true);
    });
  }
  return y;
}

CMatrix hodbf_matvec_transpose(const HodBfMatrix& a, const Eigen::Ref<const CMatrix>& x) {
  if (a.role != Role::forward) throw Error("hodbf_matvec: matrix is an inverse");
  if (x.rows() != a.size()) throw Error("hodbf_matvec: shape mismatch");
  const auto& tree = a.tree;
  const int LH = tree.levels();
  CMatrix y(x.rows(), x.cols());
  parallel_for(Index{1} << LH, [&](Index j) {
    const Range r = tree.range(ClusterTree::node_id(LH, j));
    y.middleRows(r.begin, r.size()).noalias() =
        a.leaf[static_cast<size_t>(j)].transpose() * x.middleRows(r.begin, r.size());
  });
  for (int d = 1; d <= LH; ++d) {
    parallel_for(Index{1} << d, [&](Index pos) {
      const Index id = ClusterTree::node_id(d, pos);
      const Range r = tree.range(id);
      const Range s = tree.range(ClusterTree::sibling(id));
      bf_apply_transpose_into(a.offdiag[static_cast<size_t>(id)], x.middleRows(r.begin, r.size()),
                              y.middleRows(s.begin, s.size()), Complex{1.0, 0.0}, true);
    });
  }
  return y;
}

CMatrix hodbf_densify(const HodBfMatrix& a) {
  const Index n = a.size();
  CMatrix out(n, n);
  constexpr Index chunk = 256;
  for (Index c = 0; c < n; c += chunk) {
    const Index w = std::min(chunk, n - c);
    CMatrix e = CMatrix::Zero(n, w);
    for (Index t = 0; t < w; ++t) e(c + t, t) = 1.0;
    out.middleCols(c, w) = a.role == Role::forward ? hodbf_matvec(a, e) : apply_inverse(a, e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inverse application

namespace {

// out = D_node^{-1} x, with x and out covering range(node).
void subtree_inverse(const HodBfMatrix& inv, Index node, const Eigen::Ref<const CMatrix>& x,
                     Eigen::Ref<CMatrix> out) {
  const auto& tree = inv.tree;
  const int LH = tree.levels();
  const int d0 = ClusterTree::node_level(node);
  const Index pos0 = ClusterTree::node_pos(node);
  const Index base = tree.range(node).begin;
  const Index span = Index{1} << (LH - d0);
  parallel_for(span, [&](Index t) {
    const Index leaf = pos0 * span + t;
    const Range r = tree.range(ClusterTree::node_id(LH, leaf));
    out.middleRows(r.begin - base, r.size()).noalias() =
        inv.leaf[static_cast<size_t>(leaf)] * x.middleRows(r.begin - base, r.size());
  });
  for (int d = LH - 1; d >= d0; --d) {
    const Index cnt = Index{1} << (d - d0);
    parallel_for(cnt, [&](Index t) {
      const Index id = ClusterTree::node_id(d, (pos0 << (d - d0)) + t);
      const Butterfly& e = inv.update[static_cast<size_t>(id)];
      if (e.rows() == 0) return;
      const Range r = tree.range(id);
      auto seg = out.middleRows(r.begin - base, r.size());
      const CMatrix tmp = bf_apply(e, seg);
      seg += tmp;
    });
  }
}

void subtree_inverse_transpose(const HodBfMatrix& inv, Index node, const Eigen::Ref<const CMatrix>& x,
                               Eigen::Ref<CMatrix> out) {
  const auto& tree = inv.tree;
  const int LH = tree.levels();
  const int d0 = ClusterTree::node_level(node);
  const Index pos0 = ClusterTree::node_pos(node);
  const Index base = tree.range(node).begin;
  CMatrix work = x;
  for (int d = d0; d < LH; ++d) {
    const Index cnt = Index{1} << (d - d0);
    parallel_for(cnt, [&](Index t) {
      const Index id = ClusterTree::node_id(d, (pos0 << (d - d0)) + t);
      const Butterfly& e = inv.update[static_cast<size_t>(id)];
      if (e.rows() == 0) return;
      const Range r = tree.range(id);
      auto seg = work.middleRows(r.begin - base, r.size());
      const CMatrix tmp = bf_apply_transpose(e, seg);
      seg += tmp;
    });
  }
  const Index span = Index{1} << (LH - d0);
  parallel_for(span, [&](Index t) {
    const Index leaf = pos0 * span + t;
    const Range r = tree.range(ClusterTree::node_id(LH, leaf));
    out.middleRows(r.begin - base, r.size()).noalias() =
        inv.leaf[static_cast<size_t>(leaf)].transpose() * work.middleRows(r.begin - base, r.size());
  });
}

}  // namespace

CMatrix apply_inverse(const HodBfMatrix& inv, const Eigen::Ref<const CMatrix>& b) {
  if (inv.role != Role::inverse) throw Error("apply_inverse: matrix is not an inverse");
  if (b.rows() != inv.size()) throw Error("apply_inverse: shape mismatch");
  CMatrix x(b.rows(), b.cols());
  subtree_inverse(inv, 0, b, x);
  return x;
}

CMatrix apply_inverse_transpose(const HodBfMatrix& inv, const Eigen::Ref<const CMatrix>& b) {
  if (inv.role != Role::inverse) throw Error("apply_inverse: matrix is not an inverse");
  if (b.rows() != inv.size()) throw Error("apply_inverse: shape mismatch");
  CMatrix x(b.rows(), b.cols());
  subtree_inverse_transpose(inv, 0, b, x);
  return x;
}

// ---------------------------------------------------------------------------
// Butterfly SMW

namespace {

Butterfly zero_butterfly(const Partition& part, int levels) {
  return Butterfly(truncate_partition(part, levels), truncate_partition(part, levels), levels);
}

// Inverts m in place; throws when it is numerically singular.
CMatrix checked_inverse(const CMatrix& m, const std::string& what) {
  if (m.rows() == 0) return m;
  Eigen::PartialPivLU<CMatrix> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 1e-14) || !std::isfinite(rc)) throw Error(what);
  CMatrix inv = lu.inverse();
  if (!inv.allFinite()) throw Error(what);
  return inv;
}

Butterfly dense_smw(const CMatrix& e, const Partition& part, int levels, const SmwOptions& opt, int depth) {
  const Index n = e.rows();
  CMatrix m = e;
  m.diagonal().array() += 1.0;
  std::ostringstream msg;
  msg << "singular Schur complement at recursion depth " << depth;
  CMatrix f = checked_inverse(m, msg.str());
  f.diagonal().array() -= 1.0;
  if (f.norm() == 0.0) return zero_butterfly(part, levels);
  CompressOptions co;
  co.tol = opt.tol;
  co.seed = mix_seed(opt.random.seed, static_cast<std::uint64_t>(depth));
  const DenseEntries src(f);
  const Partition p = truncate_partition(part, levels);
  return bf_compress(src, {0, n}, p, {0, n}, p, levels, co);
}

Butterfly smw_rec(const Butterfly& e, const SmwOptions& opt, int depth, std::uint64_t seed);

Butterfly smw_core(const Butterfly& e11, const Butterfly& e12, const Butterfly& e21, const Butterfly& e22,
                   const Partition& part, int levels, const SmwOptions& opt, int depth, std::uint64_t seed) {
  const Index n = part[0].back();
  const Index n1 = part[1][1];
  const Index n2 = n - n1;
  if (e11.is_zero() && e12.is_zero() && e21.is_zero() && e22.is_zero()) return zero_butterfly(part, levels);
  if (n <= opt.dense_size) {
    CMatrix e(n, n);
    e.topLeftCorner(n1, n1) = bf_densify(e11);
    e.topRightCorner(n1, n2) = bf_densify(e12);
    e.bottomLeftCorner(n2, n1) = bf_densify(e21);
    e.bottomRightCorner(n2, n2) = bf_densify(e22);
    return dense_smw(e, part, levels, opt, depth);
  }
  const Butterfly f22 = smw_rec(e22, opt, depth + 1, mix_seed(seed, 22));

  RandomOptions ro = opt.random;
  ro.tol = opt.tol;
  const int ls = std::max(levels - 2, 0);
  const Partition p1 = sub_partition(part, 1, 0, ls);

  // P = I + F22.
  auto apply_p = [&f22](const Eigen::Ref<const CMatrix>& x) -> CMatrix {
    CMatrix y = x;
    if (!f22.is_zero()) bf_apply_into(f22, x, y, Complex{1.0, 0.0}, true);
    return y;
  };
  auto apply_pt = [&f22](const Eigen::Ref<const CMatrix>& x) -> CMatrix {
    CMatrix y = x;
    if (!f22.is_zero()) bf_apply_transpose_into(f22, x, y, Complex{1.0, 0.0}, true);
    return y;
  };

  // S - I = E11 - E12 P E21.
  LinearOperator sop;
  sop.rows = n1;
  sop.cols = n1;
  sop.forward = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    bf_apply_into(e11, x, y);
    const CMatrix t = apply_p(bf_apply(e21, x));
    bf_apply_into(e12, t, y, Complex{-1.0, 0.0}, true);
  };
  sop.transpose = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    bf_apply_transpose_into(e11, x, y);
    const CMatrix t = apply_pt(bf_apply_transpose(e12, x));
    bf_apply_transpose_into(e21, t, y, Complex{-1.0, 0.0}, true);
  };
  ro.seed = mix_seed(seed, 11);
  const Butterfly s = bf_random_matvec(sop, p1, p1, ls, ro);
  const Butterfly f11 = smw_rec(s, opt, depth + 1, mix_seed(seed, 12));

  LinearOperator gop;
  gop.rows = n;
  gop.cols = n;
  gop.forward = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    const auto x1 = x.topRows(n1);
    const auto x2 = x.bottomRows(n2);
    const CMatrix t2 = apply_p(x2);
    CMatrix u1 = x1;
    bf_apply_into(e12, t2, u1, Complex{-1.0, 0.0}, true);
    CMatrix v1 = u1;
    if (!f11.is_zero()) bf_apply_into(f11, u1, v1, Complex{1.0, 0.0}, true);
    const CMatrix w2 = t2 - apply_p(bf_apply(e21, v1));
    y.topRows(n1) = v1 - x1;
    y.bottomRows(n2) = w2 - x2;
  };
  gop.transpose = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    const auto x1 = x.topRows(n1);
    const auto x2 = x.bottomRows(n2);
    const CMatrix b2 = apply_pt(x2);
    CMatrix a1 = x1;
    bf_apply_transpose_into(e21, b2, a1, Complex{-1.0, 0.0}, true);
    CMatrix b1 = a1;
    if (!f11.is_zero()) bf_apply_transpose_into(f11, a1, b1, Complex{1.0, 0.0}, true);
    const CMatrix c2 = b2 - apply_pt(bf_apply_transpose(e12, b1));
    y.topRows(n1) = b1 - x1;
    y.bottomRows(n2) = c2 - x2;
  };
  ro.seed = mix_seed(seed, 5);
  const Partition p = truncate_partition(part, levels);
  return bf_random_matvec(gop, p, p, levels, ro);
}

Butterfly smw_rec(const Butterfly& e, const SmwOptions& opt, int depth, std::uint64_t seed) {
  if (e.rows() != e.cols()) throw Error("bf_smw: butterfly is not square");
  const int L = e.levels();
  const Partition& part = e.row_partition();
  if (e.is_zero()) return zero_butterfly(part, L);
  if (e.rows() <= opt.dense_size) return dense_smw(bf_densify(e), part, L, opt, depth);
  if (L == 0) {
    // I - U (I + V U)^{-1} V.
    const CMatrix& u = e.outer_b[0];
    const CMatrix& v = e.outer_v[0];
    CMatrix k = v * u;
    k.diagonal().array() += 1.0;
    std::ostringstream msg;
    msg << "singular Schur complement at recursion depth " << depth;
    const CMatrix kinv = checked_inverse(k, msg.str());
    Butterfly f(part, part, 0);
    f.outer_b[0] = -(u * kinv);
    f.outer_v[0] = v;
    return f;
  }
  if (e.row_partition() != e.col_partition()) throw Error("bf_smw: row and column partitions differ");
  return smw_core(bf_quadrant(e, 0, 0), bf_quadrant(e, 0, 1), bf_quadrant(e, 1, 0), bf_quadrant(e, 1, 1),
                  part, L, opt, depth, seed);
}

}  // namespace

Butterfly bf_smw(const Butterfly& e, const SmwOptions& opt) {
  if (!(opt.tol > 0.0 && opt.tol < 1.0)) throw Error("bf_smw: tolerance must lie in (0,1)");
  return smw_rec(e, opt, 0, opt.random.seed);
}

Butterfly bf_smw_blocks(const Butterfly& e11, const Butterfly& e12, const Butterfly& e21,
                        const Butterfly& e22, const Partition& part, int levels,
                        const SmwOptions& opt) {
  if (!(opt.tol > 0.0 && opt.tol < 1.0)) throw Error("bf_smw: tolerance must lie in (0,1)");
  if (levels < 1 || static_cast<int>(part.size()) < levels + 1)
    throw Error("bf_smw: partition shallower than the level count");
  const Index n1 = part[1][1];
  const Index n2 = part[0].back() - n1;
  if (e11.rows() != n1 || e11.cols() != n1 || e12.rows() != n1 || e12.cols() != n2 ||
      e21.rows() != n2 || e21.cols() != n1 || e22.rows() != n2 || e22.cols() != n2)
    throw Error("bf_smw: quadrant shapes do not match the partition");
  return smw_core(e11, e12, e21, e22, part, levels, opt, 0, opt.random.seed);
}

// ---------------------------------------------------------------------------
// Inversion

HodBfMatrix hodbf_invert(const HodBfMatrix& a, const InvertOptions& opt) {
  if (a.role != Role::forward) throw Error("hodbf_invert: matrix is already an inverse");
  if (!(opt.tol_fact > 0.0 && opt.tol_fact < 1.0)) throw Error("hodbf_invert: tolerance must lie in (0,1)");
  if (opt.tol_fact < a.tol) throw Error("hodbf_invert: chi_fact must be >= chi_con");
  const auto t0 = Clock::now();
  const auto& tree = a.tree;
  const int LH = tree.levels();
  HodBfMatrix inv;
  inv.tree = tree;
  inv.role = Role::inverse;
  inv.tol = opt.tol_fact;
  inv.tol_con = a.tol;
  inv.leaf.resize(a.leaf.size());
  inv.update.resize(static_cast<size_t>(tree.num_nodes()));
  parallel_for(static_cast<Index>(a.leaf.size()), [&](Index j) {
    std::ostringstream msg;
    msg << "singular diagonal block at leaf " << ClusterTree::node_id(LH, j);
    inv.leaf[static_cast<size_t>(j)] = checked_inverse(a.leaf[static_cast<size_t>(j)], msg.str());
  });

  SmwOptions so;
  so.tol = opt.tol_fact * opt.inner_scale;
  so.dense_size = 2 * max_leaf(tree);
  so.random = opt.random;
  RandomOptions ro = opt.random;
  ro.tol = so.tol;

  for (int d = LH - 1; d >= 0; --d) {
    for (Index pos = 0; pos < (Index{1} << d); ++pos) {
      const Index id = ClusterTree::node_id(d, pos);
      const Index c1 = ClusterTree::left_child(id);
      const Index c2 = ClusterTree::right_child(id);
      try {
        // D_ci^{-1} B_ci as an operator.
        auto reduced = [&](Index c) {
          const Butterfly& b = a.offdiag[static_cast<size_t>(c)];
          LinearOperator op;
          op.rows = b.rows();
          op.cols = b.cols();
          op.forward = [&inv, &b, c](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
            const CMatrix t = bf_apply(b, x);
            subtree_inverse(inv, c, t, y);
          };
          op.transpose = [&inv, &b, c](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
            CMatrix t(x.rows(), x.cols());
            subtree_inverse_transpose(inv, c, x, t);
            bf_apply_transpose_into(b, t, y);
          };
          RandomOptions r = ro;
          r.seed = mix_seed(opt.random.seed, static_cast<std::uint64_t>(c));
          RandomStats st;
          Butterfly out = bf_random_matvec(op, b.row_partition(), b.col_partition(), b.levels(), r, &st);
          inv.stats.random_forward += st.forward_columns;
          inv.stats.random_transpose += st.transpose_columns;
          inv.stats.reconstruction_columns.emplace_back(b.rows(), st.forward_columns + st.transpose_columns);
          return out;
        };
        const Butterfly b1 = reduced(c1);
        const Butterfly b2 = reduced(c2);
        const int lb = std::max(b1.levels(), b2.levels());
        const int le = std::max(1, std::min(lb + 2, LH - d));
        const Partition part = tree.partition(id, le);
        const Butterfly z1 = zero_butterfly(sub_partition(part, 1, 0, 0), 0);
        const Butterfly z2 = zero_butterfly(sub_partition(part, 1, 1, 0), 0);
        SmwOptions s = so;
        s.random.seed = mix_seed(opt.random.seed, 0x5000 + static_cast<std::uint64_t>(id));
        inv.update[static_cast<size_t>(id)] = bf_smw_blocks(z1, b1, b2, z2, part, le, s);
      } catch (const ReconstructionError& e) {
        std::ostringstream msg;
        msg << e.what() << " (node " << id << ")";
        throw ReconstructionError(msg.str(), e.achieved());
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << e.what() << " (node " << id << ")";
        throw Error(msg.str());
      }
    }
  }
  for (const auto& d : inv.leaf) inv.stats.storage_units += d.size();
  for (Index id = 0; id < tree.num_nodes(); ++id)
    if (inv.update[static_cast<size_t>(id)].rows() > 0) accumulate_stats(inv.stats, inv.update[static_cast<size_t>(id)]);
  inv.stats.invert_time = seconds_since(t0);
  return inv;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'H', 'O', 'D', 'B', 'F', 'M', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("load_hodbf: truncated input");
  return v;
}

void put_matrix(std::ostream& out, const CMatrix& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(Complex) * m.size()));
}

CMatrix get_matrix(std::istream& in) {
  const auto r = get<std::int64_t>(in);
  const auto c = get<std::int64_t>(in);
  if (r < 0 || c < 0 || (r > 0 && c > (std::int64_t{1} << 40) / r)) throw Error("load_hodbf: bad matrix header");
  CMatrix m(r, c);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(Complex) * m.size()));
  if (!in) throw Error("load_hodbf: truncated input");
  return m;
}

void put_partition(std::ostream& out, const Partition& p) {
  put<std::int32_t>(out, static_cast<std::int32_t>(p.size()));
  for (const auto& level : p) {
    put<std::int64_t>(out, static_cast<std::int64_t>(level.size()));
    for (Index v : level) put<std::int64_t>(out, v);
  }
}

Partition get_partition(std::istream& in) {
  const auto depth = get<std::int32_t>(in);
  if (depth < 0 || depth > 64) throw Error("load_hodbf: bad partition");
  Partition p(static_cast<size_t>(depth));
  for (auto& level : p) {
    const auto n = get<std::int64_t>(in);
    if (n < 0 || n > (std::int64_t{1} << 32)) throw Error("load_hodbf: bad partition");
    level.resize(static_cast<size_t>(n));
    for (auto& v : level) v = get<std::int64_t>(in);
  }
  return p;
}

void put_butterfly(std::ostream& out, const Butterfly& bf) {
  const bool present = bf.rows() > 0 || bf.cols() > 0;
  put<std::uint8_t>(out, present ? 1 : 0);
  if (!present) return;
  put<std::int32_t>(out, bf.levels());
  put_partition(out, bf.row_partition());
  put_partition(out, bf.col_partition());
  for (const auto& m : bf.outer_v) put_matrix(out, m);
  for (const auto& lvl : bf.inner)
    for (const auto& m : lvl) put_matrix(out, m);
  for (const auto& m : bf.outer_b) put_matrix(out, m);
}

Butterfly get_butterfly(std::istream& in) {
  if (get<std::uint8_t>(in) == 0) return Butterfly();
  const auto levels = get<std::int32_t>(in);
  Partition rp = get_partition(in);
  Partition cp = get_partition(in);
  if (levels < 0 || levels > 40) throw Error("load_hodbf: bad level count");
  Butterfly bf(std::move(rp), std::move(cp), levels);
  for (auto& m : bf.outer_v) m = get_matrix(in);
  for (auto& lvl : bf.inner)
    for (auto& m : lvl) m = get_matrix(in);
  for (auto& m : bf.outer_b) m = get_matrix(in);
  bf.validate();
  return bf;
}

}  // namespace

void save_hodbf(const HodBfMatrix& a, std::ostream& out) {
  const auto& tree = a.tree;
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, a.role == Role::forward ? 0u : 1u);
  put<std::int64_t>(out, tree.size());
  put<std::int32_t>(out, tree.levels());
  put<std::int64_t>(out, tree.leaf_size());
  put<double>(out, a.tol);
  put<double>(out, a.tol_con);
  for (Index v : tree.perm()) put<std::int64_t>(out, v);
  for (const auto& m : a.leaf) put_matrix(out, m);
  const auto& blocks = a.role == Role::forward ? a.offdiag : a.update;
  for (Index id = 0; id < tree.num_nodes(); ++id) put_butterfly(out, blocks[static_cast<size_t>(id)]);
  if (!out) throw Error("save_hodbf: write failed");
}

HodBfMatrix load_hodbf(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("load_hodbf: not a HOD-BF container");
  if (get<std::uint32_t>(in) != kVersion) throw Error("load_hodbf: unsupported version");
  const auto role = get<std::uint32_t>(in);
  if (role > 1) throw Error("load_hodbf: bad role");
  const auto n = get<std::int64_t>(in);
  const auto levels = get<std::int32_t>(in);
  const auto leaf_size = get<std::int64_t>(in);
  if (n < 1 || n > (std::int64_t{1} << 32) || levels < 0 || levels > 40) throw Error("load_hodbf: bad header");
  HodBfMatrix a;
  a.role = role == 0 ? Role::forward : Role::inverse;
  a.tol = get<double>(in);
  a.tol_con = get<double>(in);
  std::vector<Index> perm(static_cast<size_t>(n));
  for (auto& v : perm) v = get<std::int64_t>(in);
  a.tree = ClusterTree::from_permutation(std::move(perm), levels, leaf_size);
  a.leaf.resize(static_cast<size_t>(Index{1} << levels));
  for (size_t j = 0; j < a.leaf.size(); ++j) {
    a.leaf[j] = get_matrix(in);
    const Index s = a.tree.range(ClusterTree::node_id(levels, static_cast<Index>(j))).size();
    if (a.leaf[j].rows() != s || a.leaf[j].cols() != s) throw Error("load_hodbf: leaf shape mismatch");
  }
  auto& blocks = a.role == Role::forward ? a.offdiag : a.update;
  blocks.resize(static_cast<size_t>(a.tree.num_nodes()));
  for (auto& b : blocks) b = get_butterfly(in);
  for (const auto& d : a.leaf) a.stats.storage_units += d.size();
  for (const auto& b : blocks)
    if (b.rows() > 0) accumulate_stats(a.stats, b);
  return a;
}

void save_hodbf(const HodBfMatrix& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_hodbf: cannot open " + path);
  save_hodbf(a, out);
}

HodBfMatrix load_hodbf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_hodbf: cannot open " + path);
  return load_hodbf(in);
}

}  // namespace hodbf
