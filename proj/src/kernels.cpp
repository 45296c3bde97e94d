#include "hodbf/kernels.hpp"

#include <cmath>
#include <random>

namespace hodbf {

using constants::pi;

PhysicalParams PhysicalParams::from_frequency(Real f) {
  if (!(f > 0.0)) throw Error("frequency must be positive");
  PhysicalParams p;
  p.frequency = f;
  p.k0 = 2.0 * pi * f * std::sqrt(p.mu0 * p.eps0);
  p.wavelength = 2.0 * pi / p.k0;
  p.eta0 = std::sqrt(p.mu0 / p.eps0);
  return p;
}

PhysicalParams PhysicalParams::from_wavenumber(Real k0) {
  if (!(k0 > 0.0)) throw Error("wavenumber must be positive");
  PhysicalParams p;
  p.k0 = k0;
  p.wavelength = 2.0 * pi / k0;
  p.frequency = k0 / (2.0 * pi * std::sqrt(p.mu0 * p.eps0));
  p.eta0 = std::sqrt(p.mu0 / p.eps0);
  return p;
}

Complex contrast(Complex eps_rel) {
  if (eps_rel == Complex{0.0, 0.0}) throw Error("singular contrast");
  return (eps_rel - 1.0) / eps_rel;
}

Complex greens(const Point3& r, const Point3& rp, Real k0) {
  const Real d = (r - rp).norm();
  if (d == 0.0) throw Error("greens: coincident points");
  return std::polar(1.0 / (4.0 * pi * d), -k0 * d);
}

Complex sphere_self_integral(Real k0, Real a) {
  if (k0 == 0.0) return {a * a / 2.0, 0.0};
  const Complex j{0.0, 1.0};
  const Real x = k0 * a;
  if (x < 1e-3) {
    // Series of (exp(-jx)(1 + jx) - 1)/k0^2 to avoid cancellation.
    return Complex{a * a / 2.0 - x * x * a * a / 8.0, -x * a * a / 3.0};
  }
  return (std::exp(-j * x) * (1.0 + j * x) - 1.0) / (k0 * k0);
}

KernelSystem KernelSystem::make(const PhysicalParams& params, PointCloud cloud) {
  cloud.validate();
  if (!(params.k0 > 0.0)) throw Error("kernel system: k0 must be positive");
  KernelSystem sys;
  sys.params = params;
  sys.contrast.reserve(cloud.rel_permittivity.size());
  for (const auto& e : cloud.rel_permittivity) sys.contrast.push_back(hodbf::contrast(e));
  const Real a = std::cbrt(3.0 * cloud.cell_volume / (4.0 * pi));
  sys.self_term = sphere_self_integral(params.k0, a);
  sys.cloud = std::move(cloud);
  return sys;
}

Complex entry(const KernelSystem& sys, Index m, Index n) {
  const Index N = sys.size();
  if (m < 0 || n < 0 || m >= N || n >= N) throw Error("entry: index out of range");
  const Real k0 = sys.params.k0;
  const auto um = static_cast<size_t>(m);
  const auto un = static_cast<size_t>(n);
  if (m == n)
    return 1.0 / sys.cloud.rel_permittivity[um] - k0 * k0 * sys.contrast[um] * sys.self_term;
  return -k0 * k0 * sys.contrast[un] * sys.cloud.cell_volume *
         greens(sys.cloud.positions[um], sys.cloud.positions[un], k0);
}

void EntrySource::block(Range rows, Range cols, CMatrix& out) const {
  std::vector<Index> r(static_cast<size_t>(rows.size())), c(static_cast<size_t>(cols.size()));
  for (Index i = 0; i < rows.size(); ++i) r[static_cast<size_t>(i)] = rows.begin + i;
  for (Index i = 0; i < cols.size(); ++i) c[static_cast<size_t>(i)] = cols.begin + i;
  block(std::span<const Index>(r), std::span<const Index>(c), out);
}

KernelEntries::KernelEntries(const KernelSystem& sys, const ClusterTree& tree)
    : n_(sys.size()), k0_(sys.params.k0) {
  if (tree.size() != n_) throw Error("kernel entries: tree does not match the system size");
  const Real k2 = k0_ * k0_;
  pos_.resize(static_cast<size_t>(n_));
  col_scale_.resize(static_cast<size_t>(n_));
  diag_.resize(static_cast<size_t>(n_));
  for (Index i = 0; i < n_; ++i) {
    const auto o = static_cast<size_t>(tree.perm()[static_cast<size_t>(i)]);
    const auto u = static_cast<size_t>(i);
    pos_[u] = sys.cloud.positions[o];
    col_scale_[u] = -k2 * sys.contrast[o] * sys.cloud.cell_volume / (4.0 * pi);
    diag_[u] = 1.0 / sys.cloud.rel_permittivity[o] - k2 * sys.contrast[o] * sys.self_term;
  }
}

inline Complex KernelEntries::eval(Index m, Index n) const {
  const auto um = static_cast<size_t>(m);
  const auto un = static_cast<size_t>(n);
  if (m == n) return diag_[um];
  const Real d = (pos_[um] - pos_[un]).norm();
  const Real ph = k0_ * d;
  return col_scale_[un] * Complex{std::cos(ph) / d, -std::sin(ph) / d};
}

void KernelEntries::block(std::span<const Index> rows, std::span<const Index> cols,
                          CMatrix& out) const {
  out.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j)
    for (size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = eval(rows[i], cols[j]);
}

void KernelEntries::block(Range rows, Range cols, CMatrix& out) const {
  out.resize(rows.size(), cols.size());
  for (Index j = 0; j < cols.size(); ++j) {
    const Index n = cols.begin + j;
    const Point3 pn = pos_[static_cast<size_t>(n)];
    const Complex s = col_scale_[static_cast<size_t>(n)];
    Complex* col = out.col(j).data();
    for (Index i = 0; i < rows.size(); ++i) {
      const Index m = rows.begin + i;
      if (m == n) {
        col[i] = diag_[static_cast<size_t>(m)];
        continue;
      }
      const Real d = (pos_[static_cast<size_t>(m)] - pn).norm();
      const Real ph = k0_ * d;
      col[i] = s * Complex{std::cos(ph) / d, -std::sin(ph) / d};
    }
  }
}

void DenseEntries::block(std::span<const Index> rows, std::span<const Index> cols,
                         CMatrix& out) const {
  out.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j)
    for (size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = (*a_)(rows[i], cols[j]);
}

SyntheticKernel SyntheticKernel::oscillatory(std::vector<Point3> row_pts,
                                             std::vector<Point3> col_pts, Real k0,
                                             Complex diagonal) {
  SyntheticKernel k;
  k.kind_ = KernelKind::synthetic_oscillatory;
  k.m_ = static_cast<Index>(row_pts.size());
  k.n_ = static_cast<Index>(col_pts.size());
  k.k0_ = k0;
  k.diagonal_ = diagonal;
  k.xs_ = std::move(row_pts);
  k.ys_ = std::move(col_pts);
  return k;
}

SyntheticKernel SyntheticKernel::oscillatory_clouds(Index m, Index n, Real k0, Real separation,
                                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Point3> xs(static_cast<size_t>(m)), ys(static_cast<size_t>(n));
  for (auto& p : xs) p = Point3(u(rng), u(rng), u(rng));
  for (auto& p : ys) p = Point3(u(rng) + separation, u(rng), u(rng));
  return oscillatory(std::move(xs), std::move(ys), k0);
}

SyntheticKernel SyntheticKernel::lowrank(Index m, Index n, Index rank, std::uint64_t seed) {
  SyntheticKernel k;
  k.kind_ = KernelKind::synthetic_lowrank;
  k.m_ = m;
  k.n_ = n;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  k.u_.resize(m, rank);
  k.v_.resize(rank, n);
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < m; ++i) k.u_(i, j) = Complex{g(rng), g(rng)};
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < rank; ++i) k.v_(i, j) = Complex{g(rng), g(rng)};
  return k;
}

Complex SyntheticKernel::entry(Index m, Index n) const {
  if (kind_ == KernelKind::synthetic_lowrank) return (u_.row(m) * v_.col(n))(0, 0);
  const Real d = (xs_[static_cast<size_t>(m)] - ys_[static_cast<size_t>(n)]).norm();
  if (d == 0.0) return diagonal_;
  return std::polar(1.0 / (4.0 * pi * d), -k0_ * d);
}

void SyntheticKernel::block(std::span<const Index> rows, std::span<const Index> cols,
                            CMatrix& out) const {
  out.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  if (kind_ == KernelKind::synthetic_lowrank) {
    CMatrix ur(static_cast<Index>(rows.size()), u_.cols());
    CMatrix vc(v_.rows(), static_cast<Index>(cols.size()));
    for (size_t i = 0; i < rows.size(); ++i) ur.row(static_cast<Index>(i)) = u_.row(rows[i]);
    for (size_t j = 0; j < cols.size(); ++j) vc.col(static_cast<Index>(j)) = v_.col(cols[j]);
    out.noalias() = ur * vc;
    return;
  }
  for (size_t j = 0; j < cols.size(); ++j)
    for (size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = entry(rows[i], cols[j]);
}

SyntheticKernel SyntheticKernel::permuted(const std::vector<Index>& row_perm,
                                          const std::vector<Index>& col_perm) const {
  SyntheticKernel k = *this;
  if (kind_ == KernelKind::synthetic_lowrank) {
    for (size_t i = 0; i < row_perm.size(); ++i) k.u_.row(static_cast<Index>(i)) = u_.row(row_perm[i]);
    for (size_t j = 0; j < col_perm.size(); ++j) k.v_.col(static_cast<Index>(j)) = v_.col(col_perm[j]);
  } else {
    for (size_t i = 0; i < row_perm.size(); ++i) k.xs_[i] = xs_[static_cast<size_t>(row_perm[i])];
    for (size_t j = 0; j < col_perm.size(); ++j) k.ys_[j] = ys_[static_cast<size_t>(col_perm[j])];
  }
  return k;
}

Complex synthetic_entry(KernelKind kind, Index m, Index n, std::uint64_t seed) {
  if (kind == KernelKind::synthetic_lowrank)
    return SyntheticKernel::lowrank(64, 64, 3, seed).entry(m, n);
  return SyntheticKernel::oscillatory_clouds(64, 64, 2.0 * pi, 3.0, seed).entry(m, n);
}

CVector plane_wave_rhs(const KernelSystem& sys, const Point3& direction,
                       const Point3& polarization) {
  constexpr Real tol = 1e-9;
  if (std::abs(direction.norm() - 1.0) > tol || std::abs(polarization.norm() - 1.0) > tol)
    throw Error("plane wave: direction and polarization must be unit vectors");
  if (std::abs(direction.dot(polarization)) > tol)
    throw Error("plane wave: polarization must be orthogonal to the direction");
  CVector v(sys.size());
  for (Index m = 0; m < sys.size(); ++m)
    v(m) = std::polar(1.0, -sys.params.k0 * direction.dot(sys.cloud.positions[static_cast<size_t>(m)]));
  return v;
}

namespace {

// Region of a point for the shape; -1 when outside.
int region_of(const ShapeSpec& s, const Point3& p) {
  const Point3 d = p - s.center;
  switch (s.shape) {
    case Shape::sphere:
      return d.norm() <= s.radius ? 0 : -1;
    case Shape::ellipsoid: {
      const Point3 q = d.cwiseQuotient(s.semi_axes);
      return q.squaredNorm() <= 1.0 ? 0 : -1;
    }
    case Shape::layered_sphere:
    case Shape::shell: {
      const Real r = d.norm();
      if (r > s.radius) return -1;
      Real outer = s.radius;
      for (size_t k = 0; k < s.layer_thickness.size(); ++k) {
        const Real inner = outer - s.layer_thickness[k];
        if (r > inner || (k + 1 == s.layer_thickness.size() && s.shape == Shape::layered_sphere))
          return static_cast<int>(k);
        outer = inner;
      }
      return -1;  // hollow core of a shell
    }
  }
  return -1;
}

}  // namespace

ShapeSpec layered_sphere_spec() {
  ShapeSpec s;
  s.shape = Shape::layered_sphere;
  s.layer_thickness = {0.06, 0.06, 0.06, 0.06, 0.06};
  s.layer_eps = {2.0, 3.0, 4.0, 5.0, 6.0};
  s.radius = 0.3;
  return s;
}

PointCloud shape_generator(const ShapeSpec& spec, Real spacing) {
  if (!(spacing > 0.0)) throw Error("shape: spacing must be positive");
  Real extent = 0.0;
  switch (spec.shape) {
    case Shape::sphere:
      if (!(spec.radius > 0.0)) throw Error("shape: radius must be positive");
      extent = spec.radius;
      break;
    case Shape::ellipsoid:
      if (!(spec.semi_axes.minCoeff() > 0.0)) throw Error("shape: semi-axes must be positive");
      extent = spec.semi_axes.maxCoeff();
      break;
    case Shape::layered_sphere:
    case Shape::shell:
      if (spec.layer_thickness.empty() || spec.layer_thickness.size() != spec.layer_eps.size())
        throw Error("shape: layer thickness and permittivity lists must match");
      for (Real t : spec.layer_thickness)
        if (!(t > 0.0)) throw Error("shape: layer thickness must be positive");
      if (!(spec.radius > 0.0)) throw Error("shape: radius must be positive");
      extent = spec.radius;
      break;
  }
  const auto half = static_cast<long>(std::ceil(extent / spacing));
  PointCloud cloud;
  cloud.cell_volume = spacing * spacing * spacing;
  for (long iz = -half; iz <= half; ++iz)
    for (long iy = -half; iy <= half; ++iy)
      for (long ix = -half; ix <= half; ++ix) {
        const Point3 p = spec.center + spacing * Point3(static_cast<Real>(ix), static_cast<Real>(iy),
                                                        static_cast<Real>(iz));
        const int reg = region_of(spec, p);
        if (reg < 0) continue;
        cloud.positions.push_back(p);
        const bool layered = spec.shape == Shape::layered_sphere || spec.shape == Shape::shell;
        cloud.rel_permittivity.push_back(layered ? spec.layer_eps[static_cast<size_t>(reg)] : spec.eps);
      }
  if (cloud.positions.empty()) throw Error("shape has no interior lattice points");
  return cloud;
}

}  // namespace hodbf
