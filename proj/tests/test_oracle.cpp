#include "doctest.h"
#include "helpers.hpp"
#include "hodbf/oracle.hpp"

using namespace hodbf;

TEST_SUITE("oracle") {

TEST_CASE("dense assembly matches entry evaluation") {
  const auto sys = KernelSystem::make(PhysicalParams::from_frequency(3e8), testing::grid_cloud(3, 3, 3, 0.1));
  const auto d = dense_assemble(sys);
  REQUIRE(d.matrix.rows() == 27);
  for (Index m = 0; m < 27; ++m)
    for (Index n = 0; n < 27; ++n) CHECK(d.matrix(m, n) == entry(sys, m, n));
  CHECK(d.assembly_time >= 0.0);
  CHECK_THROWS_AS(dense_assemble(sys, 26), Error);
}

TEST_CASE("dense solve") {
  const CMatrix a = CMatrix::Identity(3, 3) * 2.0;
  const CMatrix b = CMatrix::Ones(3, 1);
  CHECK((dense_solve(a, b) - 0.5 * b).norm() <= 1e-15);
  CMatrix s = CMatrix::Ones(3, 3);
  CHECK_THROWS_AS(dense_solve(s, b), Error);
  const CMatrix r = testing::random_matrix(50, 50, 1);
  const CMatrix x = testing::random_matrix(50, 2, 2);
  CHECK(rel_fro_error(dense_solve(r, r * x), x) <= 1e-10);
}

TEST_CASE("relative Frobenius error") {
  CMatrix b = CMatrix::Ones(2, 2);
  CHECK(rel_fro_error(b, b) == 0.0);
  CHECK(rel_fro_error(CMatrix::Zero(2, 2), b) == doctest::Approx(1.0));
  CHECK(rel_fro_error(2.0 * b, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rel_fro_error(b, CMatrix::Zero(2, 2)), Error);
  CHECK_THROWS_AS(rel_fro_error(b, CMatrix::Ones(3, 2)), Error);
}

}
