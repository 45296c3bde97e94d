// Shared fixtures for the unit tests.
#pragma once

#include <random>

#include "hodbf/kernels.hpp"

namespace hodbf::testing {

/// Homogeneous sphere of radius `radius_wl` wavelengths sampled at `ppw`
/// points per wavelength.
inline KernelSystem sphere_system(double radius_wl, Complex eps = {4.0, 0.0}, double freq = 3e8,
                                  double ppw = 10.0) {
  const auto pp = PhysicalParams::from_frequency(freq);
  ShapeSpec s;
  s.shape = Shape::sphere;
  s.radius = radius_wl * pp.wavelength;
  s.eps = eps;
  return KernelSystem::make(pp, shape_generator(s, pp.wavelength / ppw));
}

inline PointCloud grid_cloud(int nx, int ny, int nz, double h, Complex eps = {4.0, 0.0}) {
  PointCloud c;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        c.positions.emplace_back(i * h, j * h, k * h);
        c.rel_permittivity.push_back(eps);
      }
  c.cell_volume = h * h * h;
  return c;
}

inline CMatrix random_matrix(Index m, Index n, unsigned seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d;
  CMatrix a(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) a(i, j) = Complex{d(g), d(g)};
  return a;
}

/// Number of singular values needed so that the discarded tail has
/// Frobenius norm at most tol * ||a||_F.
inline Index frobenius_rank(const CMatrix& a, double tol) {
  Eigen::JacobiSVD<CMatrix> svd(a);
  const RVector& s = svd.singularValues();
  const double total2 = s.squaredNorm();
  Index r = s.size();
  double tail2 = 0.0;
  while (r > 0 && tail2 + s(r - 1) * s(r - 1) <= tol * tol * total2) {
    tail2 += s(r - 1) * s(r - 1);
    --r;
  }
  return r;
}

}  // namespace hodbf::testing
