// TFQMR with optional left preconditioning, and the end-to-end scattering solve.
#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hodbf/clustering.hpp"
#include "hodbf/kernels.hpp"

namespace hodbf {

/// y = A x for a single vector.
using VectorOperator = std::function<CVector(const CVector&)>;

struct SolverConfig {
  double tol = 1e-4;  // relative residual target chi_sol
  int max_iter = 1000;
  VectorOperator preconditioner;  // M ~ A^{-1}; empty for none
  std::uint64_t seed = 0;
};

struct SolveReport {
  int iterations = 0;
  Index matvec_count = 0;   // applications of A
  Index precond_count = 0;  // applications of M
  /// Relative residual of the (preconditioned) system: the initial value, one
  /// quasi-residual bound per iteration, and the true residual as last entry.
  std::vector<double> residual_history;
  double final_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  double wall_time = 0.0;
};

struct SolveResult {
  CVector x;
  SolveReport report;
};

/// Solves M A x = M b (or A x = b without M) from x0 = 0. Convergence is
/// declared only after the true residual ||M(b - A x)|| / ||M b|| is
/// confirmed to be at most cfg.tol.
SolveResult tfqmr_solve(const VectorOperator& a, const CVector& b, const SolverConfig& cfg);

enum class Format { hodbf, hodlr, dense };

struct ScatteringOptions {
  Format format = Format::hodbf;
  double tol_con = 1e-4;
  std::optional<double> tol_fact;  // preconditioner tolerance; hodbf only
  double tol_sol = 1e-4;
  int max_iter = 1000;
  Index leaf_size = 64;
  SplitRule split = SplitRule::median;
  Point3 direction{0.0, 0.0, -1.0};
  Point3 polarization{1.0, 0.0, 0.0};
  std::uint64_t seed = 0;
};

struct ScatteringResult {
  CVector coefficients;  // original point ordering
  SolveReport report;
  Index n = 0;
  Index max_rank = 0;
  Index storage_units = 0;
  double construct_time = 0.0;
  std::optional<double> invert_time;
  double solve_time = 0.0;
};

/// Compresses (or assembles) Z, builds the plane-wave right-hand side,
/// optionally inverts Z for a left preconditioner and runs TFQMR.
ScatteringResult solve_scattering(const KernelSystem& sys, const ScatteringOptions& opt);

/// sqrt(mean((x - ref)^2)) / max(ref).
double relative_rmse(const RVector& x, const RVector& ref);

/// F(d) = sum_n k0^2 kappa_n Vc c_n exp(+j k0 d . r_n) per unit direction d.
CVector far_field_pattern(const KernelSystem& sys, const CVector& coefficients,
                          const std::vector<Point3>& directions);

const char* format_name(Format f);
Format parse_format(const std::string& s);

}  // namespace hodbf
