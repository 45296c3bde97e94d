// Command-line front end: single solves and scaling studies.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hodbf/krylov.hpp"
#include "hodbf/parallel.hpp"
#include "hodbf/study.hpp"

using namespace hodbf;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error("not a number: '" + tok + "'");
    }
  }
  return v;
}

Complex parse_complex(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() == 1) return {v[0], 0.0};
  if (v.size() == 2) return {v[0], v[1]};
  throw Error("expected 're' or 're,im', got '" + s + "'");
}

Point3 parse_point(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() != 3) throw Error("expected three comma-separated values, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

struct GeometryFlags {
  std::string shape = "sphere";
  double radius = 0.3;
  std::string semi_axes;
  std::string layers;      // thicknesses, outer to inner
  std::string layer_eps;   // "re,im;re,im;..."
  std::string eps = "4,0";
  std::string geometry;    // point-cloud file instead of a shape
  double cell_volume = 0.0;
  double ppw = 10.0;
  double spacing = 0.0;

  void add(CLI::App* app) {
    app->add_option("--shape", shape, "sphere | layered_sphere | shell | ellipsoid")->capture_default_str();
    app->add_option("--radius", radius, "Sphere / outer radius in meters")->capture_default_str();
    app->add_option("--semi-axes", semi_axes, "Ellipsoid semi-axes a,b,c in meters");
    app->add_option("--layers", layers, "Layer thicknesses in meters, outer to inner");
    app->add_option("--layer-eps", layer_eps, "Layer permittivities 're,im;re,im;...', outer to inner");
    app->add_option("--eps", eps, "Relative permittivity re,im of homogeneous shapes")->capture_default_str();
    app->add_option("--geometry", geometry, "Point cloud file (.json or .csv: x,y,z,eps_re,eps_im)");
    app->add_option("--cell-volume", cell_volume, "Cell volume in m^3 for CSV geometry");
    app->add_option("--ppw", ppw, "Lattice points per free-space wavelength")->capture_default_str();
    app->add_option("--spacing", spacing, "Lattice pitch in meters (overrides --ppw)");
  }

  ShapeSpec spec() const {
    ShapeSpec s;
    if (shape == "sphere") s.shape = Shape::sphere;
    else if (shape == "layered_sphere") s.shape = Shape::layered_sphere;
    else if (shape == "shell") s.shape = Shape::shell;
    else if (shape == "ellipsoid") s.shape = Shape::ellipsoid;
    else throw Error("unknown shape '" + shape + "'");
    if (s.shape == Shape::layered_sphere && layers.empty() && layer_eps.empty()) {
      s = layered_sphere_spec();
      return s;
    }
    s.radius = radius;
    s.eps = parse_complex(eps);
    if (!semi_axes.empty()) s.semi_axes = parse_point(semi_axes);
    if (!layers.empty()) s.layer_thickness = parse_list(layers);
    if (!layer_eps.empty()) {
      std::stringstream ss(layer_eps);
      std::string tok;
      while (std::getline(ss, tok, ';')) s.layer_eps.push_back(parse_complex(tok));
    }
    return s;
  }

  PointCloud cloud(const PhysicalParams& pp) const {
    if (!geometry.empty())
      return load_point_cloud(geometry, cell_volume > 0.0 ? std::optional<double>(cell_volume) : std::nullopt);
    const double h = spacing > 0.0 ? spacing : pp.wavelength / ppw;
    return shape_generator(spec(), h);
  }
};

struct SolverFlags {
  std::string format = "hodbf";
  double chi_con = 1e-4;
  double chi_fact = 1e-3;
  bool precond = false;
  double chi_sol = 1e-4;
  int max_iter = 1000;
  Index leaf = 64;
  std::string split = "median";
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--format", format, "hodbf | hodlr | dense")->capture_default_str();
    app->add_option("--chi-con", chi_con, "Compression tolerance")->capture_default_str();
    app->add_option("--chi-fact", chi_fact, "Inversion tolerance of the preconditioner")->capture_default_str();
    app->add_flag("--precond", precond, "Left-precondition with the HOD-BF inverse");
    app->add_option("--chi-sol", chi_sol, "TFQMR relative residual target")->capture_default_str();
    app->add_option("--max-iter", max_iter, "TFQMR iteration limit")->capture_default_str();
    app->add_option("--leaf", leaf, "Cluster tree leaf size")->capture_default_str();
    app->add_option("--split", split, "median | cobblestone")->capture_default_str();
    app->add_option("--seed", seed, "Seed for all randomized steps")->capture_default_str();
  }

  ScatteringOptions options() const {
    ScatteringOptions o;
    o.format = parse_format(format);
    o.tol_con = chi_con;
    if (precond) o.tol_fact = chi_fact;
    o.tol_sol = chi_sol;
    o.max_iter = max_iter;
    o.leaf_size = leaf;
    if (split == "median") o.split = SplitRule::median;
    else if (split == "cobblestone") o.split = SplitRule::cobblestone;
    else throw Error("unknown split rule '" + split + "'");
    o.seed = seed;
    return o;
  }
};

nlohmann::json report_json(const ScatteringOptions& o, const ScatteringResult& r, double freq) {
  nlohmann::json j;
  j["N"] = r.n;
  j["format"] = format_name(o.format);
  j["frequency"] = freq;
  j["chi_con"] = o.tol_con;
  j["chi_fact"] = o.tol_fact ? nlohmann::json(*o.tol_fact) : nlohmann::json(nullptr);
  j["chi_sol"] = o.tol_sol;
  j["seed"] = o.seed;
  j["max_rank"] = r.max_rank;
  j["storage_units"] = r.storage_units;
  j["construct_time"] = r.construct_time;
  j["invert_time"] = r.invert_time ? nlohmann::json(*r.invert_time) : nlohmann::json(nullptr);
  j["solve_time"] = r.solve_time;
  const auto& s = r.report;
  j["iterations"] = s.iterations;
  j["matvec_count"] = s.matvec_count;
  j["precond_count"] = s.precond_count;
  j["converged"] = s.converged;
  j["breakdown"] = s.breakdown;
  j["final_residual"] = s.final_residual;
  j["residual_history"] = s.residual_history;
  j["wall_time"] = s.wall_time;
  return j;
}

int cmd_solve(double freq, const GeometryFlags& g, const SolverFlags& sf, const std::string& out_dir,
              int far_field) {
  const auto pp = PhysicalParams::from_frequency(freq);
  auto sys = KernelSystem::make(pp, g.cloud(pp));
  const auto opt = sf.options();
  std::cerr << "N = " << sys.size() << ", format " << format_name(opt.format) << "\n";
  const auto res = solve_scattering(sys, opt);

  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "coefficients.csv");
    f << "index,re,im\n" << std::setprecision(17);
    for (Index i = 0; i < res.coefficients.size(); ++i)
      f << i << ',' << res.coefficients(i).real() << ',' << res.coefficients(i).imag() << '\n';
  }
  const auto rep = report_json(opt, res, freq);
  std::ofstream(fs::path(out_dir) / "report.json") << rep.dump(2) << '\n';
  {
    std::ofstream f(fs::path(out_dir) / "run.csv");
    f << run_record_header() << '\n' << to_csv(make_run_record(opt, res)) << '\n';
  }
  if (far_field > 0) {
    // Pattern in the xz-plane, theta measured from +z.
    std::vector<Point3> dirs;
    std::vector<double> theta;
    for (int q = 0; q < far_field; ++q) {
      const double t = constants::pi * q / std::max(far_field - 1, 1);
      theta.push_back(t * 180.0 / constants::pi);
      dirs.emplace_back(std::sin(t), 0.0, std::cos(t));
    }
    const CVector f = far_field_pattern(sys, res.coefficients, dirs);
    std::ofstream out(fs::path(out_dir) / "far_field.csv");
    out << "theta_deg,re,im,abs\n" << std::setprecision(12);
    for (size_t q = 0; q < dirs.size(); ++q) {
      const Complex v = f(static_cast<Index>(q));
      out << theta[q] << ',' << v.real() << ',' << v.imag() << ',' << std::abs(v) << '\n';
    }
  }
  std::cout << rep.dump(2) << '\n';
  return res.report.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HOD-BF accelerated volume integral equation solver"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (overrides HODBF_NUM_THREADS)");

  auto* solve = app.add_subcommand("solve", "Solve one scattering problem");
  GeometryFlags g;
  SolverFlags sf;
  double freq = 3e8;
  std::string out_dir = "out";
  int far_field = 0;
  g.add(solve);
  sf.add(solve);
  solve->add_option("--freq", freq, "Frequency in Hz")->capture_default_str();
  solve->add_option("--out", out_dir, "Output directory")->capture_default_str();
  solve->add_option("--far-field", far_field, "Number of far-field directions to tabulate (xz-plane)");

  auto* study = app.add_subcommand("scale-study", "Sweep problem size or frequency");
  GeometryFlags sg;
  SolverFlags ssf;
  double sfreq = 3e8;
  std::string sweep = "size";
  std::string values;
  std::string formats = "hodbf";
  std::string csv = "study.csv";
  sg.add(study);
  ssf.add(study);
  study->add_option("--freq", sfreq, "Frequency in Hz (size sweeps)")->capture_default_str();
  study->add_option("--sweep", sweep, "size | frequency")->capture_default_str();
  study->add_option("--values", values, "Scale factors (size) or frequencies in Hz")->required();
  study->add_option("--formats", formats, "Comma-separated formats")->capture_default_str();
  study->add_option("--csv", csv, "Output CSV (appended)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_worker_count(threads);

  try {
    if (*solve) return cmd_solve(freq, g, sf, out_dir, far_field);

    ScaleStudyOptions so;
    if (!sg.geometry.empty()) throw Error("scale-study works on generated shapes only");
    so.shape = sg.spec();
    so.frequency = sfreq;
    so.points_per_wavelength = sg.ppw;
    if (sweep == "size") so.sweep = SweepKind::size;
    else if (sweep == "frequency") so.sweep = SweepKind::frequency;
    else throw Error("unknown sweep '" + sweep + "'");
    so.values = parse_list(values);
    so.formats.clear();
    std::stringstream ss(formats);
    std::string tok;
    while (std::getline(ss, tok, ',')) so.formats.push_back(parse_format(tok));
    so.solve = ssf.options();
    so.csv_path = csv;
    std::cout << run_record_header() << '\n';
    const auto rows = run_scale_study(so, &std::cout);
    for (Format fmt : so.formats) {
      std::vector<std::pair<double, double>> st, ct;
      for (const auto& r : rows) {
        if (r.format != format_name(fmt) || r.status != "ok") continue;
        if (r.storage_units) st.emplace_back(static_cast<double>(r.n), static_cast<double>(*r.storage_units));
        if (r.construct_time && *r.construct_time > 0) ct.emplace_back(static_cast<double>(r.n), *r.construct_time);
      }
      if (st.size() >= 3) std::cerr << format_name(fmt) << " storage exponent " << fit_exponent(st) << "\n";
      if (ct.size() >= 3) std::cerr << format_name(fmt) << " construction-time exponent " << fit_exponent(ct) << "\n";
    }
    for (const auto& r : rows)
      if (r.status != "ok") return 3;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
