#include "doctest.h"
#include "helpers.hpp"
#include "hodbf/randomized.hpp"

using namespace hodbf;

namespace {

Butterfly compressed(Index n, int L, double tol, std::uint64_t seed = 7, double sep = 3.0) {
  const auto k = SyntheticKernel::oscillatory_clouds(n, n, 2 * constants::pi * 4, sep, seed);
  const auto p = halving_partition(n, L);
  CompressOptions o;
  o.tol = tol;
  return bf_compress(k, {0, n}, p, {0, n}, p, L, o);
}

std::vector<Index> all_ranks(const Butterfly& bf) {
  std::vector<Index> r;
  for (int l = 0; l <= bf.levels(); ++l)
    for (Index p = 0; p < bf.pairs(); ++p) r.push_back(bf.rank(l, p));
  return r;
}

}  // namespace

TEST_SUITE("bf_randomized") {

TEST_CASE("reconstructing a wrapped butterfly") {
  const double tol = 1e-3;
  for (int L : {0, 1, 2, 3, 4}) {
    const Index n = Index{64} << std::max(L, 1);
    const Butterfly bf = compressed(n, L, 1e-5);
    const auto op = butterfly_operator(bf);
    RandomOptions ro;
    ro.tol = tol;
    RandomStats st;
    const Butterfly rb = bf_random_matvec(op, bf.row_partition(), bf.col_partition(), L, ro, &st);
    CAPTURE(L);
    rb.validate();
    CHECK(rb.levels() == L);
    CHECK(st.probe_error <= 10 * tol);
    CHECK(st.forward_columns + st.transpose_columns == op.apply_count());
    CHECK(probe_error(op, rb, 20, 0x1234) <= 10 * tol);
  }
}

TEST_CASE("zero operator gives a zero butterfly") {
  const auto p = halving_partition(128, 2);
  const auto z = zero_operator(128, 128);
  const Butterfly rb = bf_random_matvec(z, p, p, 2, RandomOptions{});
  CHECK(rb.is_zero());
  CHECK(bf_apply(rb, testing::random_matrix(128, 2, 3)).norm() == 0.0);
}

TEST_CASE("product of two butterflies") {
  const Index n = 256;
  const int L = 2;
  const Butterfly a = compressed(n, L, 1e-6, 7);
  const Butterfly b = compressed(n, L, 1e-6, 8, 4.0);
  LinearOperator op;
  op.rows = n;
  op.cols = n;
  op.forward = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) { y = bf_apply(a, bf_apply(b, x)); };
  op.transpose = [&](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    y = bf_apply_transpose(b, bf_apply_transpose(a, x));
  };
  RandomOptions ro;
  ro.tol = 1e-3;
  const Butterfly rb = bf_random_matvec(op, a.row_partition(), b.col_partition(), L, ro);
  const CMatrix dense = bf_densify(a) * bf_densify(b);
  CHECK((bf_densify(rb) - dense).norm() <= 10 * ro.tol * dense.norm());
}

TEST_CASE("probe error") {
  const Butterfly bf = compressed(256, 2, 1e-4);
  const auto op = butterfly_operator(bf);
  CHECK(probe_error(op, bf, 20) <= 1e-14);
  const CMatrix d = 2.0 * bf_densify(bf);
  const auto twice = dense_operator(d);
  CHECK(probe_error(twice, bf, 20) == doctest::Approx(0.5).epsilon(1e-10));
  RandomOptions ro;
  ro.tol = 1e-3;
  const Butterfly rb = bf_random_matvec(op, bf.row_partition(), bf.col_partition(), 2, ro);
  CHECK(probe_error(op, rb, 20) <= 1e-2);
}

TEST_CASE("operator handles are transpose consistent") {
  const Butterfly bf = compressed(128, 2, 1e-4);
  const CMatrix dense = bf_densify(bf);
  for (const auto& op : {butterfly_operator(bf), dense_operator(dense)}) {
    const CMatrix x = testing::random_matrix(128, 1, 1), y = testing::random_matrix(128, 1, 2);
    const Complex lhs = (op.apply(x).transpose() * y)(0, 0);
    const Complex rhs = (x.transpose() * op.apply_transpose(y))(0, 0);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
    // Linearity, checked stochastically.
    const CMatrix s = op.apply(x + 3.0 * y);
    CHECK((s - op.apply(x) - 3.0 * op.apply(y)).norm() <= 1e-12 * s.norm());
  }
  const auto op = butterfly_operator(bf);
  CHECK_THROWS(op.apply(CMatrix::Zero(3, 1)));
}

TEST_CASE("fixed seed reproduces ranks bit for bit") {
  const Butterfly bf = compressed(512, 3, 1e-5);
  const auto op = butterfly_operator(bf);
  RandomOptions ro;
  ro.tol = 1e-3;
  ro.seed = 42;
  const Butterfly a = bf_random_matvec(op, bf.row_partition(), bf.col_partition(), 3, ro);
  const Butterfly b = bf_random_matvec(op, bf.row_partition(), bf.col_partition(), 3, ro);
  CHECK(all_ranks(a) == all_ranks(b));
  CHECK((bf_densify(a) - bf_densify(b)).norm() == 0.0);
}

TEST_CASE("unreachable tolerance is reported") {
  // Every forward product carries fresh 10% noise, so no butterfly can
  // match the probes to better than about 0.1.
  const Index n = 96;
  const CMatrix a = testing::random_matrix(n, n, 5);
  auto calls = std::make_shared<std::atomic<unsigned>>(0);
  LinearOperator op;
  op.rows = n;
  op.cols = n;
  op.forward = [&a, calls](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) {
    const CMatrix ax = a * x;
    const CMatrix noise = testing::random_matrix(ax.rows(), ax.cols(), 100 + (*calls)++);
    y = ax + 0.1 * ax.norm() / noise.norm() * noise;
  };
  op.transpose = [&a](const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) { y = a.transpose() * x; };
  RandomOptions ro;
  ro.tol = 1e-3;
  ro.max_retries = 1;
  const auto p = halving_partition(n, 2);
  try {
    (void)bf_random_matvec(op, p, p, 2, ro);
    FAIL("expected a reconstruction failure");
  } catch (const ReconstructionError& e) {
    CHECK(std::string(e.what()).find("reconstruction tolerance unreachable") != std::string::npos);
    CHECK(e.achieved() > 10 * ro.tol);
  }
}

TEST_CASE("argument checks") {
  const auto p = halving_partition(64, 2);
  const auto z = zero_operator(64, 64);
  RandomOptions ro;
  ro.tol = 0.0;
  CHECK_THROWS(bf_random_matvec(z, p, p, 2, ro));
  CHECK_THROWS(bf_random_matvec(z, p, p, 3, RandomOptions{}));
  CHECK_THROWS(bf_random_matvec(zero_operator(32, 64), p, p, 2, RandomOptions{}));
}

}
