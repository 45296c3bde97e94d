#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "hodbf/clustering.hpp"
#include "hodbf/lowrank.hpp"

using namespace hodbf;

namespace {

// Two 4x4x4 lattices of pitch lambda/10 whose centres are four diameters apart.
CMatrix separated_green_block(double* k0_out = nullptr) {
  const double lam = 1.0;
  const double k0 = 2 * constants::pi / lam;
  const double h = lam / 10;
  const auto a = testing::grid_cloud(4, 4, 4, h);
  const double diam = std::sqrt(3.0) * 3 * h;
  CMatrix z(64, 64);
  for (Index i = 0; i < 64; ++i)
    for (Index j = 0; j < 64; ++j)
      z(i, j) = greens(a.positions[static_cast<size_t>(i)],
                       a.positions[static_cast<size_t>(j)] + Point3(4 * diam, 0, 0), k0);
  if (k0_out) *k0_out = k0;
  return z;
}

}  // namespace

TEST_SUITE("lowrank") {

TEST_CASE("rank-one outer product") {
  const CMatrix u = testing::random_matrix(8, 1, 1), v = testing::random_matrix(1, 8, 2);
  const CMatrix a = u * v;
  const auto id = id_compress(a, 1e-6);
  CHECK(id.rank() == 1);
  CHECK((a - a(Eigen::all, id.skeleton) * id.interp).norm() <= 1e-12 * a.norm());
}

TEST_CASE("identity keeps every column") {
  const CMatrix a = CMatrix::Identity(4, 4);
  const auto id = id_compress(a, 1e-12);
  REQUIRE(id.rank() == 4);
  // interp is a column permutation of the identity.
  for (Index j = 0; j < 4; ++j) {
    CHECK(id.interp.col(j).cwiseAbs().sum() == doctest::Approx(1.0));
    CHECK(id.interp.col(j).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  }
  CHECK((a(Eigen::all, id.skeleton) * id.interp - a).norm() < 1e-15);
}

TEST_CASE("separated Green's block matches the SVD rank") {
  const CMatrix z = separated_green_block();
  for (double tol : {1e-2, 1e-4, 1e-6}) {
    const auto id = id_compress(z, tol);
    const Index svd_rank = testing::frobenius_rank(z, tol);
    CHECK(std::abs(id.rank() - svd_rank) <= 2);
    const double err = (z - z(Eigen::all, id.skeleton) * id.interp).norm() / z.norm();
    CHECK(err <= 10 * tol);
    CHECK(err == doctest::Approx(id.residual / z.norm()).epsilon(1e-6));
  }
}

TEST_CASE("interpolation property and monotonicity") {
  const CMatrix z = separated_green_block();
  const auto loose = id_compress(z, 1e-2);
  const auto tight = id_compress(z, 1e-6);
  CHECK(loose.rank() <= tight.rank());
  for (const auto* id : {&loose, &tight}) {
    std::set<Index> uniq(id->skeleton.begin(), id->skeleton.end());
    CHECK(uniq.size() == id->skeleton.size());
    const CMatrix sub = id->interp(Eigen::all, id->skeleton);
    CHECK((sub - CMatrix::Identity(id->rank(), id->rank())).norm() == 0.0);
  }
}

TEST_CASE("row ID and absolute floor") {
  const CMatrix z = separated_green_block();
  const auto rid = row_id_compress(z, 1e-6);
  CHECK((z - rid.interp * z(rid.skeleton, Eigen::all)).norm() <= 10e-6 * z.norm());
  const auto floored = id_compress(z, 1e-12, -1, 1e-2 * z.norm());
  CHECK(floored.rank() < id_compress(z, 1e-12).rank());
  CHECK(floored.residual <= 1e-2 * z.norm());
}

TEST_CASE("non-finite input is rejected") {
  CMatrix a = CMatrix::Ones(3, 3);
  a(1, 1) = Complex{std::nan(""), 0.0};
  CHECK_THROWS(id_compress(a, 1e-3));
  CHECK_THROWS(id_compress(CMatrix::Ones(2, 2), 0.0));
}

TEST_CASE("adaptive cross approximation") {
  SUBCASE("rank one") {
    const CMatrix a = testing::random_matrix(30, 1, 3) * testing::random_matrix(1, 20, 4);
    const DenseEntries src(a);
    const auto lr = aca_compress(src, {0, 30}, {0, 20}, 1e-8);
    CHECK(lr.rank() == 1);
    CHECK((lr.U * lr.V - a).norm() <= 1e-12 * a.norm());
  }
  SUBCASE("zero block") {
    const CMatrix a = CMatrix::Zero(16, 12);
    const DenseEntries src(a);
    const auto lr = aca_compress(src, {0, 16}, {0, 12}, 1e-6);
    CHECK(lr.rank() == 0);
    CHECK(lr.U.rows() == 16);
    CHECK(lr.V.cols() == 12);
  }
  SUBCASE("separated Green's block") {
    const CMatrix z = separated_green_block();
    const DenseEntries src(z);
    for (double tol : {1e-3, 1e-6}) {
      const auto lr = aca_compress(src, {0, 64}, {0, 64}, tol);
      CHECK((lr.U * lr.V - z).norm() <= 10 * tol * z.norm());
      // ID and ACA agree within their combined tolerance.
      const auto id = id_compress(z, tol);
      const CMatrix a_id = z(Eigen::all, id.skeleton) * id.interp;
      CHECK((a_id - lr.U * lr.V).norm() <= 20 * tol * z.norm());
    }
  }
  SUBCASE("stagnation falls back to an ID") {
    // Nonzero only in one entry far from the first pivot row: ACA sees
    // zero rows and has to fall back.
    CMatrix a = CMatrix::Zero(40, 40);
    a(37, 5) = 1.0;
    a(12, 30) = 0.5;
    const DenseEntries src(a);
    const auto lr = aca_compress(src, {0, 40}, {0, 40}, 1e-8);
    CHECK((lr.U * lr.V - a).norm() <= 1e-8 * a.norm());
  }
}

TEST_CASE("recompression") {
  const CMatrix u = testing::random_matrix(20, 5, 7), v = testing::random_matrix(5, 15, 8);
  CMatrix uu(20, 10), vv(10, 15);
  uu << u, u;
  vv << 0.5 * v, 0.5 * v;
  const auto lr = recompress(uu, vv, 1e-10);
  CHECK(lr.rank() == 5);
  CHECK((lr.U * lr.V - u * v).norm() <= 1e-10 * (u * v).norm());
}

TEST_CASE("cross approximation of touching sibling blocks") {
  // Both halves of a sphere share an interface; early termination shows up
  // here as errors far above the tolerance.
  const auto sys = testing::sphere_system(0.9);
  const auto tree = build_cluster_tree(sys.cloud, 64);
  const KernelEntries src(sys, tree);
  const Range r1 = tree.range(1), r2 = tree.range(2);
  CMatrix z;
  src.block(r1, r2, z);
  for (double tol : {1e-3, 1e-4}) {
    const auto lr = aca_compress(src, r1, r2, tol);
    CAPTURE(tol);
    CHECK((z - lr.U * lr.V).norm() <= 3 * tol * z.norm());
  }
}

}
