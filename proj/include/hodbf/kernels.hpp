// System matrices that can be evaluated entry by entry.
//
// The physical kernel is a point-collocation (discrete-dipole style)
// discretization of the volumetric scattering equation for the flux density:
//
//   Z(m,n) = -k0^2 kappa_n Vc g(r_m, r_n),            m != n
//   Z(m,m) = 1/eps_m - k0^2 kappa_m S,
//
// with g the free-space Green's function exp(-j k0 R)/(4 pi R), kappa the
// dielectric contrast (eps - 1)/eps and S the integral of g over the sphere
// of volume Vc centred at the collocation point.
#pragma once

#include <memory>
#include <span>
#include <vector>

#include "hodbf/clustering.hpp"
#include "hodbf/types.hpp"

namespace hodbf {

namespace constants {
inline constexpr Real pi = 3.14159265358979323846;
inline constexpr Real eps0 = 8.8541878128e-12;
inline constexpr Real mu0 = 1.25663706212e-6;
}  // namespace constants

struct PhysicalParams {
  Real frequency = 0.0;
  Real k0 = 0.0;
  Real wavelength = 0.0;
  Real eps0 = constants::eps0;
  Real mu0 = constants::mu0;
  Real eta0 = 0.0;

  static PhysicalParams from_frequency(Real f);
  static PhysicalParams from_wavenumber(Real k0);
};

/// (eps_rel - 1) / eps_rel.
Complex contrast(Complex eps_rel);

/// exp(-j k0 |r - rp|) / (4 pi |r - rp|); throws on coincident points.
Complex greens(const Point3& r, const Point3& rp, Real k0);

/// Integral of the Green's function over a ball of radius a centred on the
/// observation point: (exp(-j k0 a)(1 + j k0 a) - 1) / k0^2  (a^2/2 for k0 = 0).
Complex sphere_self_integral(Real k0, Real a);

enum class KernelKind { physical, synthetic_oscillatory, synthetic_lowrank };

struct KernelSystem {
  PhysicalParams params;
  PointCloud cloud;
  std::vector<Complex> contrast;
  Complex self_term{0.0, 0.0};
  KernelKind kind = KernelKind::physical;

  static KernelSystem make(const PhysicalParams& params, PointCloud cloud);
  Index size() const { return cloud.size(); }
};

/// Z(m,n) in original (unpermuted) 0-based indices.
Complex entry(const KernelSystem& sys, Index m, Index n);

/// Matrix accessed through entry evaluation. Indices are local to the source.
class EntrySource {
 public:
  virtual ~EntrySource() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual void block(std::span<const Index> rows, std::span<const Index> cols,
                     CMatrix& out) const = 0;
  virtual void block(Range rows, Range cols, CMatrix& out) const;
  /// Coordinates attached to rows/columns, when the source has a geometry.
  virtual const std::vector<Point3>* row_points() const { return nullptr; }
  virtual const std::vector<Point3>* col_points() const { return nullptr; }
};

/// Physical kernel in cluster-tree ordering.
class KernelEntries final : public EntrySource {
 public:
  KernelEntries(const KernelSystem& sys, const ClusterTree& tree);
  Index rows() const override { return n_; }
  Index cols() const override { return n_; }
  using EntrySource::block;
  void block(std::span<const Index> rows, std::span<const Index> cols,
             CMatrix& out) const override;
  void block(Range rows, Range cols, CMatrix& out) const override;
  const std::vector<Point3>* row_points() const override { return &pos_; }
  const std::vector<Point3>* col_points() const override { return &pos_; }

 private:
  Complex eval(Index m, Index n) const;

  Index n_ = 0;
  Real k0_ = 0.0;
  std::vector<Point3> pos_;
  std::vector<Complex> col_scale_;  // -k0^2 kappa_n Vc / (4 pi)
  std::vector<Complex> diag_;
};

/// Dense matrix viewed as an entry source.
class DenseEntries final : public EntrySource {
 public:
  explicit DenseEntries(const CMatrix& a) : a_(&a) {}
  Index rows() const override { return a_->rows(); }
  Index cols() const override { return a_->cols(); }
  using EntrySource::block;
  void block(std::span<const Index> rows, std::span<const Index> cols,
             CMatrix& out) const override;

 private:
  const CMatrix* a_;
};

/// Synthetic test kernels.
///  - oscillatory: exp(-j k0 |x_m - y_n|)/(4 pi |x_m - y_n|) between two point
///    sets (when a pair coincides the entry is `diagonal`);
///  - lowrank: sum_q u_q(m) v_q(n) with seeded Gaussian factors.
class SyntheticKernel final : public EntrySource {
 public:
  static SyntheticKernel oscillatory(std::vector<Point3> row_pts, std::vector<Point3> col_pts,
                                     Real k0, Complex diagonal = Complex{1.0, 0.0});
  /// Two unit-cube clouds of n points each with centres `separation` apart.
  static SyntheticKernel oscillatory_clouds(Index m, Index n, Real k0, Real separation,
                                            std::uint64_t seed);
  static SyntheticKernel lowrank(Index m, Index n, Index rank, std::uint64_t seed);

  KernelKind kind() const { return kind_; }
  Index rows() const override { return m_; }
  Index cols() const override { return n_; }
  Complex entry(Index m, Index n) const;
  using EntrySource::block;
  void block(std::span<const Index> rows, std::span<const Index> cols,
             CMatrix& out) const override;
  const std::vector<Point3>* row_points() const override {
    return kind_ == KernelKind::synthetic_oscillatory ? &xs_ : nullptr;
  }
  const std::vector<Point3>* col_points() const override {
    return kind_ == KernelKind::synthetic_oscillatory ? &ys_ : nullptr;
  }
  /// Same kernel with rows/columns reordered: new row i is old row row_perm[i].
  SyntheticKernel permuted(const std::vector<Index>& row_perm,
                           const std::vector<Index>& col_perm) const;

 private:
  KernelKind kind_ = KernelKind::synthetic_oscillatory;
  Index m_ = 0, n_ = 0;
  Real k0_ = 0.0;
  Complex diagonal_{1.0, 0.0};
  std::vector<Point3> xs_, ys_;
  CMatrix u_, v_;
};

/// Stateless accessor: entry (m,n) of a synthetic kernel of the given kind,
/// built with default sizes (64 x 64, rank 3, k0 = 2 pi) from `seed`.
Complex synthetic_entry(KernelKind kind, Index m, Index n, std::uint64_t seed);

/// exp(-j k0 direction . r_m) for every point; vectors must be unit and orthogonal.
CVector plane_wave_rhs(const KernelSystem& sys, const Point3& direction,
                       const Point3& polarization);

enum class Shape { sphere, layered_sphere, shell, ellipsoid };

struct ShapeSpec {
  Shape shape = Shape::sphere;
  Real radius = 0.0;                      // sphere, layered sphere, shell (outer)
  Point3 semi_axes = Point3::Zero();      // ellipsoid
  std::vector<Real> layer_thickness;      // outer-to-inner (layered sphere, shell)
  std::vector<Complex> layer_eps;         // outer-to-inner
  Complex eps{4.0, 0.0};                  // homogeneous shapes
  Point3 center = Point3::Zero();
};

/// Voxel-centre lattice of pitch `spacing` clipped to the shape.
PointCloud shape_generator(const ShapeSpec& spec, Real spacing);

/// Five layers of 0.06 m, eps 2..6 from outer to inner.
ShapeSpec layered_sphere_spec();

}  // namespace hodbf
