#include "hodbf/krylov.hpp"

#include <chrono>
#include <cmath>

#include "hodbf/hodbf.hpp"
#include "hodbf/hodlr.hpp"
#include "hodbf/oracle.hpp"
#include "hodbf/parallel.hpp"
#include "hodbf/randomized.hpp"

namespace hodbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

SolveResult tfqmr_solve(const VectorOperator& a, const CVector& b, const SolverConfig& cfg) {
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw Error("tfqmr: tolerance must lie in (0,1)");
  if (cfg.max_iter < 1) throw Error("tfqmr: max_iter must be positive");
  if (!b.allFinite()) throw Error("tfqmr: non-finite right-hand side");
  const auto t0 = Clock::now();
  SolveResult res;
  SolveReport& rep = res.report;

  auto op = [&](const CVector& x) {
    CVector y = a(x);
    ++rep.matvec_count;
    if (cfg.preconditioner) {
      y = cfg.preconditioner(y);
      ++rep.precond_count;
    }
    return y;
  };
  CVector rhs = b;
  if (cfg.preconditioner) {
    rhs = cfg.preconditioner(b);
    ++rep.precond_count;
  }

  const Index n = b.size();
  CVector& x = res.x;
  x = CVector::Zero(n);
  const double bnorm = rhs.norm();
  auto finish = [&](double true_res) {
    rep.final_residual = true_res;
    if (rep.residual_history.empty()) rep.residual_history.push_back(true_res);
    else rep.residual_history.back() = true_res;
    rep.converged = true_res <= cfg.tol;
    rep.wall_time = seconds_since(t0);
    return res;
  };
  if (bnorm == 0.0) {
    rep.residual_history.push_back(0.0);
    return finish(0.0);
  }
  auto true_residual = [&]() { return (rhs - op(x)).norm() / bnorm; };

  CVector r = rhs;
  CVector w = r, y1 = r, y2(n);
  CVector u1 = op(y1), u2(n);
  CVector v = u1;
  CVector d = CVector::Zero(n);
  CVector rt = r;
  if (cfg.seed != 0) fill_gaussian(rt, cfg.seed);
  double tau = r.norm();
  double theta = 0.0;
  Complex eta{0.0, 0.0};
  Complex rho = rt.dot(r);
  rep.residual_history.push_back(1.0);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    rep.iterations = it;
    const Complex sigma = rt.dot(v);
    if (std::abs(sigma) <= 1e-300 || std::abs(rho) <= 1e-300) {
      rep.breakdown = true;
      return finish(true_residual());
    }
    const Complex alpha = rho / sigma;
    y2 = y1 - alpha * v;
    u2 = op(y2);
    double bound = 0.0;
    for (int j = 0; j < 2; ++j) {
      const Index m = 2 * it - 1 + j;
      const CVector& yj = j == 0 ? y1 : y2;
      const CVector& uj = j == 0 ? u1 : u2;
      w -= alpha * uj;
      d = yj + (theta * theta * eta / alpha) * d;
      theta = w.norm() / tau;
      const double c = 1.0 / std::sqrt(1.0 + theta * theta);
      tau *= theta * c;
      eta = c * c * alpha;
      x += eta * d;
      bound = tau * std::sqrt(static_cast<double>(m + 1)) / bnorm;
      if (bound <= cfg.tol) {
        const double tr = true_residual();
        if (tr <= cfg.tol) {
          rep.residual_history.push_back(tr);
          return finish(tr);
        }
      }
    }
    rep.residual_history.push_back(bound);
    const Complex rho_new = rt.dot(w);
    const Complex beta = rho_new / rho;
    rho = rho_new;
    y1 = w + beta * y2;
    u1 = op(y1);
    v = u1 + beta * (u2 + beta * v);
  }
  return finish(true_residual());
}

const char* format_name(Format f) {
  switch (f) {
    case Format::hodbf: return "hodbf";
    case Format::hodlr: return "hodlr";
    case Format::dense: return "dense";
  }
  return "?";
}

Format parse_format(const std::string& s) {
  if (s == "hodbf") return Format::hodbf;
  if (s == "hodlr") return Format::hodlr;
  if (s == "dense") return Format::dense;
  throw Error("unknown format '" + s + "' (expected hodbf, hodlr or dense)");
}

ScatteringResult solve_scattering(const KernelSystem& sys, const ScatteringOptions& opt) {
  if (!(opt.tol_con > 0.0 && opt.tol_con < 1.0)) throw Error("solve_scattering: chi_con must lie in (0,1)");
  if (!(opt.tol_sol > 0.0 && opt.tol_sol < 1.0)) throw Error("solve_scattering: chi_sol must lie in (0,1)");
  if (opt.tol_fact) {
    if (opt.format != Format::hodbf) throw Error("solve_scattering: preconditioning requires the hodbf format");
    if (*opt.tol_fact < opt.tol_con) throw Error("solve_scattering: chi_fact must be at least chi_con");
  }
  ScatteringResult out;
  out.n = sys.size();
  const CVector v = plane_wave_rhs(sys, opt.direction, opt.polarization);

  SolverConfig cfg;
  cfg.tol = opt.tol_sol;
  cfg.max_iter = opt.max_iter;
  cfg.seed = opt.seed;

  if (opt.format == Format::dense) {
    const DenseSystem d = dense_assemble(sys);
    out.construct_time = d.assembly_time;
    out.storage_units = d.matrix.size();
    const auto t0 = Clock::now();
    auto r = tfqmr_solve([&](const CVector& x) { return CVector(d.matrix * x); }, v, cfg);
    out.solve_time = seconds_since(t0);
    out.coefficients = std::move(r.x);
    out.report = std::move(r.report);
    return out;
  }

  const ClusterTree tree = build_cluster_tree(sys.cloud, opt.leaf_size, opt.split);
  CVector vt(out.n);
  for (Index i = 0; i < out.n; ++i) vt(i) = v(tree.perm()[static_cast<size_t>(i)]);

  SolveResult r;
  if (opt.format == Format::hodlr) {
    const HodLrMatrix a = hodlr_construct(sys, tree, opt.tol_con);
    out.construct_time = a.stats.construct_time;
    out.storage_units = a.stats.storage_units;
    out.max_rank = a.stats.max_rank;
    const auto t0 = Clock::now();
    r = tfqmr_solve([&](const CVector& x) { return CVector(hodlr_matvec(a, x)); }, vt, cfg);
    out.solve_time = seconds_since(t0);
  } else {
    CompressOptions copt;
    copt.seed = mix_seed(opt.seed, 0xc0);
    const HodBfMatrix a = hodbf_construct(sys, tree, opt.tol_con, copt);
    out.construct_time = a.stats.construct_time;
    out.storage_units = a.stats.storage_units;
    out.max_rank = a.stats.max_rank;
    HodBfMatrix inv;
    if (opt.tol_fact) {
      InvertOptions iopt;
      iopt.tol_fact = *opt.tol_fact;
      iopt.random.seed = mix_seed(opt.seed, 0x1f);
      inv = hodbf_invert(a, iopt);
      out.invert_time = inv.stats.invert_time;
      cfg.preconditioner = [&](const CVector& x) { return CVector(apply_inverse(inv, x)); };
    }
    const auto t0 = Clock::now();
    r = tfqmr_solve([&](const CVector& x) { return CVector(hodbf_matvec(a, x)); }, vt, cfg);
    out.solve_time = seconds_since(t0);
  }
  out.coefficients.resize(out.n);
  for (Index i = 0; i < out.n; ++i) out.coefficients(tree.perm()[static_cast<size_t>(i)]) = r.x(i);
  out.report = std::move(r.report);
  return out;
}

double relative_rmse(const RVector& x, const RVector& ref) {
  if (x.size() != ref.size()) throw Error("relative_rmse: length mismatch");
  if (ref.size() == 0) throw Error("relative_rmse: empty input");
  const double mx = ref.maxCoeff();
  if (!(mx > 0.0)) throw Error("relative_rmse: reference maximum must be positive");
  return std::sqrt((x - ref).squaredNorm() / static_cast<double>(x.size())) / mx;
}

CVector far_field_pattern(const KernelSystem& sys, const CVector& coefficients,
                          const std::vector<Point3>& directions) {
  if (coefficients.size() != sys.size()) throw Error("far_field_pattern: coefficient length mismatch");
  const Real k0 = sys.params.k0;
  CVector f(static_cast<Index>(directions.size()));
  for (size_t q = 0; q < directions.size(); ++q) {
    const Point3& d = directions[q];
    if (std::abs(d.norm() - 1.0) > 1e-9) throw Error("far_field_pattern: direction is not a unit vector");
    Complex s{0.0, 0.0};
    for (Index n = 0; n < sys.size(); ++n) {
      const auto un = static_cast<size_t>(n);
      const Real ph = k0 * d.dot(sys.cloud.positions[un]);
      s += sys.contrast[un] * coefficients(n) * Complex{std::cos(ph), std::sin(ph)};
    }
    f(static_cast<Index>(q)) = k0 * k0 * sys.cloud.cell_volume * s;
  }
  return f;
}

}  // namespace hodbf
