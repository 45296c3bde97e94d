#include "doctest.h"
#include "helpers.hpp"
#include "hodbf/butterfly.hpp"

using namespace hodbf;

namespace {

constexpr double kOsc = 2 * constants::pi * 4;

struct Compressed {
  SyntheticKernel kernel;
  Butterfly bf;
  CMatrix dense;
};

Compressed compress_clouds(Index n, int levels, double tol, double k0 = kOsc, double sep = 3.0) {
  auto k = SyntheticKernel::oscillatory_clouds(n, n, k0, sep, 7);
  const auto p = halving_partition(n, levels);
  CompressOptions o;
  o.tol = tol;
  Butterfly bf = bf_compress(k, {0, n}, p, {0, n}, p, levels, o);
  CMatrix d;
  k.block(Range{0, n}, Range{0, n}, d);
  return {std::move(k), std::move(bf), std::move(d)};
}

}  // namespace

TEST_SUITE("butterfly") {

TEST_CASE("partitions") {
  const auto p = halving_partition(10, 2);
  REQUIRE(p.size() == 3);
  CHECK(p[1] == std::vector<Index>{0, 5, 10});
  CHECK(p[2] == std::vector<Index>{0, 3, 5, 8, 10});
  const auto s = sub_partition(p, 1, 1, 1);
  CHECK(s[0] == std::vector<Index>{0, 5});
  CHECK(s[1] == std::vector<Index>{0, 3, 5});
  CHECK(truncate_partition(p, 1).size() == 2);
  CHECK_THROWS(sub_partition(p, 1, 0, 2));
}

TEST_CASE("L = 0 on a rank-one block") {
  const CMatrix a = testing::random_matrix(40, 1, 1) * testing::random_matrix(1, 30, 2);
  const DenseEntries src(a);
  CompressOptions o;
  o.tol = 1e-8;
  const auto bf = bf_compress(src, {0, 40}, halving_partition(40, 0), {0, 30}, halving_partition(30, 0), 0, o);
  CHECK(bf.levels() == 0);
  CHECK(bf.rank(0, 0) == 1);
  CHECK((bf_densify(bf) - a).norm() <= 1e-12 * a.norm());
  const auto st = bf_stats(bf);
  CHECK(st.storage_units == 1 * (40 + 30));
  CHECK(st.max_rank == 1);
  // Transpose of a rank-one butterfly is the transposed outer product.
  CHECK((bf_apply_transpose(bf, CMatrix::Identity(40, 40)) - a.transpose()).norm() <= 1e-12 * a.norm());
}

TEST_CASE("L = 2 on a separated oscillatory block") {
  const auto c = compress_clouds(256, 2, 1e-4);
  c.bf.validate();
  const CMatrix applied = bf_apply(c.bf, CMatrix::Identity(256, 256));
  CHECK((applied - c.dense).norm() / c.dense.norm() <= 1e-3);
}

TEST_CASE("densify equivalence across levels") {
  for (int L : {0, 1, 2, 3, 4}) {
    const auto c = compress_clouds(512, L, 1e-4);
    CAPTURE(L);
    CHECK((bf_densify(c.bf) - c.dense).norm() <= 10 * 1e-4 * c.dense.norm());
    // Factor chain: V0, W^1..W^L, B^L.
    CHECK(static_cast<int>(c.bf.inner.size()) + 2 == L + 2);
    CHECK(c.bf.outer_v.size() == static_cast<size_t>(1) << L);
    CHECK(c.bf.outer_b.size() == static_cast<size_t>(1) << L);
  }
}

TEST_CASE("apply is linear and consistent with its transpose") {
  const auto c = compress_clouds(256, 3, 1e-6);
  const CMatrix x = testing::random_matrix(256, 3, 5), y = testing::random_matrix(256, 3, 6);
  const Complex a{0.3, -1.2}, b{2.0, 0.5};
  const CMatrix lhs = bf_apply(c.bf, a * x + b * y);
  const CMatrix rhs = a * bf_apply(c.bf, x) + b * bf_apply(c.bf, y);
  CHECK((lhs - rhs).norm() <= 1e-13 * rhs.norm());
  CHECK(bf_apply(c.bf, CMatrix::Zero(256, 2)).norm() == 0.0);
  const CMatrix d = bf_densify(c.bf);
  const CMatrix t = bf_apply_transpose(c.bf, CMatrix::Identity(256, 256)).transpose();
  CHECK((t - d).norm() <= 1e-13 * d.norm());
  CHECK((bf_apply_transpose(c.bf, x) - c.dense.transpose() * x).norm() <= 1e-5 * (c.dense.transpose() * x).norm());
  CHECK_THROWS(bf_apply(c.bf, CMatrix::Zero(255, 1)));
  CHECK_THROWS(bf_apply_transpose(c.bf, CMatrix::Zero(10, 1)));
}

TEST_CASE("accumulating applies") {
  const auto c = compress_clouds(128, 2, 1e-6);
  const CMatrix x = testing::random_matrix(128, 2, 9);
  CMatrix y = testing::random_matrix(128, 2, 10);
  const CMatrix y0 = y;
  bf_apply_into(c.bf, x, y, Complex{2.0, 0.0}, true);
  CHECK((y - y0 - 2.0 * bf_apply(c.bf, x)).norm() <= 1e-12 * y.norm());
}

TEST_CASE("zero-rank butterfly") {
  const auto p = halving_partition(64, 3);
  const Butterfly z(p, p, 3);
  z.validate();
  CHECK(z.is_zero());
  CHECK(bf_stats(z).storage_units == 0);
  CHECK(bf_stats(z).max_rank == 0);
  CHECK(bf_apply(z, testing::random_matrix(64, 2, 1)).norm() == 0.0);
  CHECK(bf_apply_transpose(z, testing::random_matrix(64, 2, 1)).norm() == 0.0);
}

TEST_CASE("storage is the sum of stored blocks") {
  const auto c = compress_clouds(256, 3, 1e-4);
  Index units = 0, rank = 0;
  for (const auto& v : c.bf.outer_v) units += v.size();
  for (const auto& lvl : c.bf.inner)
    for (const auto& w : lvl) {
      units += w.size();
      rank = std::max(rank, w.rows());
    }
  for (const auto& b : c.bf.outer_b) units += b.size();
  const auto st = bf_stats(c.bf);
  CHECK(st.storage_units == units);
  CHECK(st.max_rank >= rank);
  CHECK(st.flops_estimate == units);
}

TEST_CASE("storage growth on a static separated kernel") {
  // Doubling n adds a level and should at most ~double the storage.
  Index prev = 0;
  for (int L : {2, 3, 4}) {
    const Index n = Index{64} << L;
    const auto c = compress_clouds(n, L, 1e-4, 0.0, 3.0);
    const Index s = bf_stats(c.bf).storage_units;
    if (prev > 0) CHECK(static_cast<double>(s) <= 2.5 * static_cast<double>(prev));
    prev = s;
  }
}

TEST_CASE("nested interpolation reproduces each level") {
  const double tol = 1e-5;
  const int L = 3;
  const auto c = compress_clouds(512, L, tol);
  const CMatrix eye = CMatrix::Identity(512, 512);
  const auto& rp = c.bf.row_partition();
  const auto& cp = c.bf.col_partition();
  for (int l = 0; l <= L; ++l) {
    const auto chain = bf_column_chain(c.bf, l, eye);
    double err2 = 0.0, ref2 = 0.0;
    for (Index i = 0; i < (Index{1} << l); ++i)
      for (Index j = 0; j < (Index{1} << (L - l)); ++j) {
        const Index p = c.bf.pair_index(l, i, j);
        const Range r = node_range(rp, l, i);
        const Range s = node_range(cp, L - l, j);
        const auto& skel = c.bf.skeletons[static_cast<size_t>(l)][static_cast<size_t>(p)];
        const CMatrix zrs = c.dense.block(r.begin, s.begin, r.size(), s.size());
        CMatrix zskel(r.size(), static_cast<Index>(skel.size()));
        for (size_t q = 0; q < skel.size(); ++q)
          zskel.col(static_cast<Index>(q)) = c.dense.col(skel[q]).segment(r.begin, r.size());
        const CMatrix approx = zskel * chain[static_cast<size_t>(p)].middleCols(s.begin, s.size());
        err2 += (approx - zrs).squaredNorm();
        ref2 += zrs.squaredNorm();
      }
    CAPTURE(l);
    CHECK(std::sqrt(err2 / ref2) <= 10 * (l + 1) * tol);
  }
}

TEST_CASE("quadrants regroup exactly") {
  for (int L : {1, 2, 3}) {
    const auto c = compress_clouds(256, L, 1e-4);
    const CMatrix d = bf_densify(c.bf);
    const auto& rp = c.bf.row_partition();
    const auto& cp = c.bf.col_partition();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const Butterfly q = bf_quadrant(c.bf, a, b);
        q.validate();
        CHECK(q.levels() == std::max(L - 2, 0));
        const Range r = node_range(rp, 1, a), s = node_range(cp, 1, b);
        const CMatrix ref = d.block(r.begin, s.begin, r.size(), s.size());
        CHECK((bf_densify(q) - ref).norm() <= 1e-12 * ref.norm());
      }
  }
  const auto c0 = compress_clouds(64, 0, 1e-4);
  CHECK_THROWS(bf_quadrant(c0.bf, 0, 0));
}

TEST_CASE("physical kernel blocks of a sphere") {
  const auto sys = testing::sphere_system(0.5);
  const auto tree = build_cluster_tree(sys.cloud, 32);
  const KernelEntries ke(sys, tree);
  CompressOptions o;
  o.tol = 1e-4;
  for (Index id : {Index{1}, Index{2}, Index{3}}) {
    const int depth = ClusterTree::node_level(id);
    const Index sib = ClusterTree::sibling(id);
    const auto bf = bf_compress(ke, tree, id, sib, tree.levels() - depth, o);
    CMatrix z;
    ke.block(tree.range(id), tree.range(sib), z);
    CHECK((bf_densify(bf) - z).norm() <= 10 * o.tol * z.norm());
  }
}

TEST_CASE("non-finite entries are rejected") {
  CMatrix a = testing::random_matrix(32, 32, 3);
  a(4, 7) = Complex{std::numeric_limits<double>::infinity(), 0.0};
  const DenseEntries src(a);
  const auto p = halving_partition(32, 1);
  CHECK_THROWS(bf_compress(src, {0, 32}, p, {0, 32}, p, 1, CompressOptions{}));
}

TEST_CASE("compression is reproducible") {
  const auto a = compress_clouds(256, 2, 1e-4);
  const auto b = compress_clouds(256, 2, 1e-4);
  CHECK((bf_densify(a.bf) - bf_densify(b.bf)).norm() == 0.0);
}

}
