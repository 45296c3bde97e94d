#include "hodbf/study.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace hodbf {

namespace {

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

std::string cell(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

}  // namespace

std::string run_record_header() {
  return "N,format,chi_con,chi_fact,chi_sol,max_rank,construct_time,invert_time,solve_time,"
         "storage_units,iterations,converged,seed,status";
}

std::string to_csv(const RunRecord& r) {
  std::ostringstream s;
  s << r.n << ',' << r.format << ',' << cell(r.chi_con) << ',' << cell(r.chi_fact) << ','
    << cell(r.chi_sol) << ',' << cell(r.max_rank) << ',' << cell(r.construct_time) << ','
    << cell(r.invert_time) << ',' << cell(r.solve_time) << ',' << cell(r.storage_units) << ','
    << cell(r.iterations) << ',';
  if (r.converged) s << (*r.converged ? "true" : "false");
  s << ',' << r.seed << ',' << quoted(r.status);
  return s.str();
}

RunRecord make_run_record(const ScatteringOptions& opt, const ScatteringResult& res) {
  RunRecord r;
  r.n = res.n;
  r.format = format_name(opt.format);
  r.chi_con = opt.tol_con;
  r.chi_fact = opt.tol_fact;
  r.chi_sol = opt.tol_sol;
  if (opt.format != Format::dense) r.max_rank = res.max_rank;
  r.construct_time = res.construct_time;
  r.invert_time = res.invert_time;
  r.solve_time = res.solve_time;
  r.storage_units = res.storage_units;
  r.iterations = res.report.iterations;
  r.converged = res.report.converged;
  r.seed = opt.seed;
  return r;
}

double fit_exponent(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw Error("fit_exponent: need at least three points");
  const auto k = static_cast<Index>(pairs.size());
  Eigen::MatrixX2d a(k, 2);
  Eigen::VectorXd y(k);
  for (Index i = 0; i < k; ++i) {
    const auto& [n, v] = pairs[static_cast<size_t>(i)];
    if (!(n > 0.0 && v > 0.0)) throw Error("fit_exponent: values must be positive");
    a(i, 0) = std::log(n);
    a(i, 1) = 1.0;
    y(i) = std::log(v);
  }
  return a.colPivHouseholderQr().solve(y)(0);
}

ShapeSpec scale_shape(const ShapeSpec& spec, double factor) {
  if (!(factor > 0.0)) throw Error("scale factor must be positive");
  ShapeSpec s = spec;
  s.radius *= factor;
  s.semi_axes *= factor;
  s.center *= factor;
  for (auto& t : s.layer_thickness) t *= factor;
  return s;
}

std::vector<RunRecord> run_scale_study(const ScaleStudyOptions& opt, std::ostream* log) {
  if (opt.values.size() < 3) throw Error("scale study: need at least three sweep points");
  if (opt.formats.empty()) throw Error("scale study: no formats given");
  std::ofstream csv;
  if (!opt.csv_path.empty()) {
    bool fresh = true;
    {
      std::ifstream probe(opt.csv_path);
      fresh = !probe || probe.peek() == std::ifstream::traits_type::eof();
    }
    csv.open(opt.csv_path, std::ios::app);
    if (!csv) throw Error("cannot open " + opt.csv_path + " for writing");
    if (fresh) csv << run_record_header() << '\n' << std::flush;
  }

  std::vector<RunRecord> rows;
  for (double value : opt.values) {
    const double f = opt.sweep == SweepKind::frequency ? value : opt.frequency;
    for (Format fmt : opt.formats) {
      ScatteringOptions so = opt.solve;
      so.format = fmt;
      if (fmt != Format::hodbf) so.tol_fact.reset();
      RunRecord rec;
      rec.format = format_name(fmt);
      rec.chi_con = so.tol_con;
      rec.chi_fact = so.tol_fact;
      rec.chi_sol = so.tol_sol;
      rec.seed = so.seed;
      try {
        const ShapeSpec shape = opt.sweep == SweepKind::size ? scale_shape(opt.shape, value) : opt.shape;
        const auto params = PhysicalParams::from_frequency(f);
        auto sys = KernelSystem::make(params, shape_generator(shape, params.wavelength / opt.points_per_wavelength));
        rec.n = sys.size();
        rec = make_run_record(so, solve_scattering(sys, so));
      } catch (const std::exception& e) {
        rec.status = std::string("error: ") + e.what();
      }
      if (log) *log << to_csv(rec) << '\n' << std::flush;
      if (csv.is_open()) csv << to_csv(rec) + '\n' << std::flush;
      rows.push_back(std::move(rec));
    }
  }
  return rows;
}

PointCloud load_point_cloud(const std::string& path, std::optional<double> cell_volume) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open geometry file " + path);
  PointCloud cloud;
  auto add = [&](double x, double y, double z, double er, double ei) {
    cloud.positions.emplace_back(x, y, z);
    cloud.rel_permittivity.emplace_back(er, ei);
  };
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (is_json) {
    nlohmann::json j;
    try {
      in >> j;
      if (j.contains("cell_volume")) cloud.cell_volume = j.at("cell_volume").get<double>();
      else if (cell_volume) cloud.cell_volume = *cell_volume;
      else throw Error("geometry file has no cell_volume");
      for (const auto& p : j.at("points")) {
        if (p.size() != 5) throw Error("each point needs x, y, z, eps_re, eps_im");
        add(p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>(), p[4].get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("malformed geometry JSON: ") + e.what());
    }
    if (cell_volume) cloud.cell_volume = *cell_volume;
  } else {
    if (!cell_volume) throw Error("CSV geometry needs an explicit cell volume");
    cloud.cell_volume = *cell_volume;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double v[5];
      if (!(ls >> v[0] >> v[1] >> v[2] >> v[3] >> v[4])) {
        if (lineno == 1) continue;  // header
        throw Error("malformed geometry CSV at line " + std::to_string(lineno));
      }
      add(v[0], v[1], v[2], v[3], v[4]);
    }
  }
  if (cloud.size() == 0) throw Error("empty geometry");
  cloud.validate();
  return cloud;
}

}  // namespace hodbf
