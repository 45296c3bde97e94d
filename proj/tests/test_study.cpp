#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "hodbf/study.hpp"

using namespace hodbf;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hodbf_test_" + name);
}

ScaleStudyOptions small_study() {
  ScaleStudyOptions o;
  o.shape.shape = Shape::sphere;
  o.shape.radius = 0.1;
  o.values = {1.0, 1.2, 1.4, 1.6, 1.8};
  o.formats = {Format::hodbf, Format::hodlr};
  o.solve.leaf_size = 16;
  return o;
}

}  // namespace

TEST_SUITE("study") {

TEST_CASE("CSV rows") {
  CHECK(run_record_header() ==
        "N,format,chi_con,chi_fact,chi_sol,max_rank,construct_time,invert_time,solve_time,"
        "storage_units,iterations,converged,seed,status");
  RunRecord r;
  r.n = 10;
  r.format = "hodlr";
  r.chi_con = 1e-4;
  r.chi_sol = 1e-4;
  const std::string line = to_csv(r);
  CHECK(std::count(line.begin(), line.end(), ',') == 13);
  CHECK(line.find("hodlr,") != std::string::npos);
  CHECK(line.find(",,") != std::string::npos);
  CHECK(line.substr(line.size() - 3) == ",ok");
}

TEST_CASE("exponent fits") {
  std::vector<std::pair<double, double>> quad, lin, nlog;
  for (double n : {64.0, 128.0, 256.0, 512.0}) {
    quad.emplace_back(n, 7.0 * n * n);
    lin.emplace_back(n, 3.0 * n);
  }
  CHECK(fit_exponent(quad) == doctest::Approx(2.0));
  CHECK(fit_exponent(lin) == doctest::Approx(1.0));
  for (int k = 10; k <= 16; ++k) {
    const double n = std::ldexp(1.0, k);
    nlog.emplace_back(n, std::pow(n, 1.5) * std::log(n));
  }
  const double e = fit_exponent(nlog);
  CHECK(e >= 1.5);
  CHECK(e <= 1.75);
  CHECK_THROWS_AS(fit_exponent({{1.0, 1.0}, {2.0, 2.0}}), Error);
  CHECK_THROWS_AS(fit_exponent({{1.0, 1.0}, {2.0, 0.0}, {3.0, 3.0}}), Error);
}

TEST_CASE("scale study over sizes and formats") {
  auto o = small_study();
  const auto path = temp_file("study.csv");
  std::filesystem::remove(path);
  o.csv_path = path.string();
  const auto rows = run_scale_study(o);
  REQUIRE(rows.size() == 10);
  for (const auto& r : rows) {
    CHECK(r.status == "ok");
    CHECK(r.converged.value_or(false));
  }
  CHECK(rows[8].n > rows[0].n);
  std::ifstream in(path);
  std::string line;
  int count = 0;
  std::getline(in, line);
  CHECK(line == run_record_header());
  while (std::getline(in, line)) ++count;
  CHECK(count == 10);

  // Same seed, same ranks and iteration counts.
  o.csv_path.clear();
  const auto again = run_scale_study(o);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].max_rank == rows[i].max_rank);
    CHECK(again[i].iterations == rows[i].iterations);
  }
  std::filesystem::remove(path);
}

TEST_CASE("failed rows are flagged and the study continues") {
  auto o = small_study();
  o.values = {1.0, -1.0, 1.2};
  o.formats = {Format::hodbf};
  const auto rows = run_scale_study(o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].status == "ok");
  CHECK(rows[1].status.rfind("error: ", 0) == 0);
  CHECK(rows[2].status == "ok");
  o.values = {1.0};
  CHECK_THROWS_AS(run_scale_study(o), Error);
}

TEST_CASE("shape scaling") {
  ShapeSpec s = layered_sphere_spec();
  const auto t = scale_shape(s, 2.0);
  CHECK(t.radius == doctest::Approx(2.0 * s.radius));
  CHECK(t.layer_thickness.front() == doctest::Approx(2.0 * s.layer_thickness.front()));
  CHECK_THROWS_AS(scale_shape(s, 0.0), Error);
}

TEST_CASE("point cloud files") {
  const auto jpath = temp_file("cloud.json");
  {
    std::ofstream out(jpath);
    out << R"({"cell_volume": 1e-3, "points": [[0,0,0,4,0],[0.1,0,0,2,-0.5]]})";
  }
  const auto c = load_point_cloud(jpath.string());
  CHECK(c.size() == 2);
  CHECK(c.cell_volume == doctest::Approx(1e-3));
  CHECK(c.rel_permittivity[1] == Complex{2.0, -0.5});

  const auto cpath = temp_file("cloud.csv");
  {
    std::ofstream out(cpath);
    out << "x,y,z,eps_re,eps_im\n0,0,0,4,0\n0.1,0,0,4,0\n0.2,0,0,4,0\n";
  }
  CHECK_THROWS_AS(load_point_cloud(cpath.string()), Error);
  const auto d = load_point_cloud(cpath.string(), 1e-3);
  CHECK(d.size() == 3);
  CHECK(d.positions[2].x() == doctest::Approx(0.2));

  {
    std::ofstream out(jpath);
    out << R"({"points": [[0,0,0,4]]})";
  }
  CHECK_THROWS_AS(load_point_cloud(jpath.string(), 1e-3), Error);
  CHECK_THROWS_AS(load_point_cloud(temp_file("missing.csv").string(), 1e-3), Error);
  std::filesystem::remove(jpath);
  std::filesystem::remove(cpath);
}

}
