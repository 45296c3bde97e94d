// Run records, exponent fits and scaling studies behind the command line.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hodbf/krylov.hpp"

namespace hodbf {

/// One row of a study; optional fields are written as empty CSV cells.
struct RunRecord {
  Index n = 0;
  std::string format;
  double chi_con = 0.0;
  std::optional<double> chi_fact;
  double chi_sol = 0.0;
  std::optional<Index> max_rank;
  std::optional<double> construct_time;
  std::optional<double> invert_time;
  std::optional<double> solve_time;
  std::optional<Index> storage_units;
  std::optional<int> iterations;
  std::optional<bool> converged;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or "error: <message>"
};

std::string run_record_header();
std::string to_csv(const RunRecord& r);
RunRecord make_run_record(const ScatteringOptions& opt, const ScatteringResult& res);

/// Least-squares slope of log(value) against log(n). Needs at least three
/// points; throws on non-positive data.
double fit_exponent(const std::vector<std::pair<double, double>>& pairs);

enum class SweepKind { size, frequency };

struct ScaleStudyOptions {
  ShapeSpec shape;                 // base geometry
  double frequency = 3e8;          // Hz; fixed for size sweeps
  double points_per_wavelength = 10.0;
  SweepKind sweep = SweepKind::size;
  /// Size sweep: length scale factors applied to `shape`. Frequency sweep: Hz.
  std::vector<double> values;
  std::vector<Format> formats{Format::hodbf};
  ScatteringOptions solve;  // tolerances, leaf size, seed (format overridden)
  std::string csv_path;     // rows appended as they finish; empty to skip
};

/// Runs every (sweep point, format) pair. Failures are recorded in the
/// row's status and the study continues.
std::vector<RunRecord> run_scale_study(const ScaleStudyOptions& opt, std::ostream* log = nullptr);

/// Copy of `spec` with every length multiplied by `factor`.
ShapeSpec scale_shape(const ShapeSpec& spec, double factor);

/// Point cloud from a file: JSON {"cell_volume": v, "points": [[x,y,z,eps_re,eps_im], ...]}
/// or CSV rows x,y,z,eps_re,eps_im (cell volume then comes from the argument).
PointCloud load_point_cloud(const std::string& path, std::optional<double> cell_volume = std::nullopt);

}  // namespace hodbf
