#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "magscat/scattering.hpp"

#include <cmath>
#include <sstream>

using namespace magscat;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

MagneticSystem make(const char* name, double B = 0.0, double phi0 = M_PI / 2 + 0.2) {
  SystemSpec s;
  s.name = name;
  s.B = B;
  s.phi0 = phi0;
  return builtin_system(s);
}

BoundaryVector bv(double u, double w, double r) {
  BoundaryVector v;
  v.u = Vec::Constant(1, u);
  v.w = Vec::Constant(1, w);
  v.r = r;
  return v;
}

const ScatteringDataset& flat_dataset() {
  static const ScatteringDataset ds = sample_dataset(make("euclidean_disk"), GridSpec{64, 32});
  return ds;
}

}  // namespace

TEST_CASE("orthogonal decomposition at the boundary") {
  auto sys = make("euclidean_disk");
  BoundaryVector a = lambda_map(sys, {v2(1, 0), v2(-1, 0)});
  CHECK(std::abs(a.w[0]) < 1e-15);
  CHECK(a.r == doctest::Approx(1.0));
  a = lambda_map(sys, {v2(1, 0), v2(0, 1)});
  CHECK(a.w[0] == doctest::Approx(1.0));
  CHECK(std::abs(a.r) < 1e-15);
  a = lambda_map(sys, {v2(1, 0), v2(-1, 1) / std::sqrt(2.0)});
  CHECK(a.w[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(a.r == doctest::Approx(std::sqrt(0.5)));
  CHECK_THROWS_WITH_AS(lambda_map(sys, {v2(0.5, 0), v2(1, 0)}), doctest::Contains("NotOnBoundary"),
                       Error);

  auto cap = make("spherical_cap");
  const BoundaryVector v = bv(0.7, 0.3, std::sqrt(1 - 0.09));
  const PhaseState s = lambda_inverse(cap, v);
  CHECK(speed(cap, s) == doctest::Approx(1.0).epsilon(1e-12));
  const BoundaryVector back = lambda_map(cap, s);
  CHECK(std::abs(back.u[0] - 0.7) < 1e-10);
  CHECK(std::abs(back.w[0] - 0.3) < 1e-10);
  CHECK(std::abs(back.r - v.r) < 1e-10);
}

TEST_CASE("single scattering records") {
  auto flat = make("euclidean_disk");
  ScatteringRecord r = scatter_one(flat, bv(0, 0, 1));
  CHECK(r.exit.u[0] == doctest::Approx(M_PI).epsilon(1e-11));
  CHECK(std::abs(r.exit.w[0]) < 1e-10);
  CHECK(r.exit.r == doctest::Approx(-1.0).epsilon(1e-11));
  CHECK(r.time == doctest::Approx(2.0).epsilon(1e-11));

  // Larmor circle centred (1, -1): exits at (0, -1) = u 3 pi / 2, straight down.
  auto mag = make("euclidean_disk", 1.0);
  r = scatter_one(mag, bv(0, 0, 1));
  CHECK(r.exit.u[0] == doctest::Approx(1.5 * M_PI).epsilon(1e-10));
  CHECK(std::abs(r.exit.w[0]) < 1e-9);
  CHECK(r.exit.r == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(r.time == doctest::Approx(0.5 * M_PI).epsilon(1e-10));

  auto hemi = make("spherical_cap", 0.0, M_PI / 2);
  r = scatter_one(hemi, bv(0.4, 0, 1));
  CHECK(r.exit.u[0] == doctest::Approx(0.4 + M_PI).epsilon(1e-9));
  CHECK(r.time == doctest::Approx(M_PI).epsilon(1e-9));
  CHECK(r.exit.r == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("flat disk dataset against the chord oracle") {
  const ScatteringDataset& ds = flat_dataset();
  REQUIRE(ds.records.size() == 2048);
  int tangent = 0;
  for (std::size_t k = 0; k < ds.records.size(); ++k) {
    const ScatteringRecord& r = ds.records[k];
    const int j = static_cast<int>(k % 32);
    CHECK(std::abs(r.entry.w.squaredNorm() + r.entry.r * r.entry.r - 1.0) < 1e-12);
    if (j == 0 || j == 31) {
      ++tangent;
      CHECK(r.status == RecordStatus::Tangent);
      CHECK_FALSE(r.transversal);
      continue;
    }
    REQUIRE(r.status == RecordStatus::Ok);
    CHECK(r.transversal);
    const double alpha = M_PI * j / 31.0;
    const double u_expect = std::fmod(r.entry.u[0] + 2 * alpha, 2 * M_PI);
    CHECK(std::abs(wrap_periodic(r.exit.u[0] - u_expect, 2 * M_PI)) < 1e-10);
    CHECK(r.time == doctest::Approx(2 * std::sin(alpha)).epsilon(1e-10));
    CHECK(r.exit.r == doctest::Approx(-std::sin(alpha)).epsilon(1e-9));
    CHECK(r.exit.w[0] == doctest::Approx(std::cos(alpha)).epsilon(1e-9));
  }
  CHECK(tangent == 128);
}

TEST_CASE("dataset serialization round trip") {
  const ScatteringDataset& ds = flat_dataset();
  std::stringstream ss;
  write_dataset(ss, ds);
  const ScatteringDataset back = read_dataset(ss);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t k = 0; k < ds.records.size(); ++k)
    REQUIRE(records_identical(back.records[k], ds.records[k]));
  CHECK(back.grid.nu == 64);
  CHECK(back.u_period == ds.u_period);

  std::stringstream twice;
  write_dataset(twice, back);
  std::stringstream once;
  write_dataset(once, ds);
  CHECK(twice.str() == once.str());

  ScatteringDataset empty = sample_dataset(make("euclidean_disk"), GridSpec{0, 0});
  std::stringstream es;
  write_dataset(es, empty);
  CHECK(read_dataset(es).records.empty());
}

TEST_CASE("dataset validation errors") {
  const std::string head =
      "# magscat-dataset v1\n# system: x\n# dim: 2\n# grid: 1 1\n# u-period: 6.2831853071795862\n"
      "# tangent-norm: euclidean\n"
      "u_in,w_in,r_in,u_out,w_out,r_out,time,transversal,status\n";
  std::stringstream bad(head + "0,0.5,0.8,1,0,-1,1,1,ok\n");
  CHECK_THROWS_WITH_AS(read_dataset(bad), doctest::Contains("line 8"), Error);

  std::stringstream version("# magscat-dataset v0\n");
  CHECK_THROWS_WITH_AS(read_dataset(version), doctest::Contains("magscat-dataset v1"), Error);

  std::stringstream junk(head + "0,0,1,abc,0,-1,1,1,ok\n");
  CHECK_THROWS_WITH_AS(read_dataset(junk), doctest::Contains("FormatError"), Error);

  std::stringstream good(head + "0,0,1,3.1415926535897931,0,-1,2,1,ok\n");
  CHECK(read_dataset(good).records.size() == 1);
}

TEST_CASE("bump perturbation only affects chords through its support") {
  SystemSpec s;
  s.name = "perturbed_disk";
  auto bump = builtin_system(s);
  const Vec c = v2(s.bump_center_x, s.bump_center_y);
  const GridSpec grid{16, 9};
  const ScatteringDataset a = sample_dataset(make("euclidean_disk"), grid);
  const ScatteringDataset b = sample_dataset(bump, grid);
  int far = 0, near = 0;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const ScatteringRecord& ra = a.records[k];
    const ScatteringRecord& rb = b.records[k];
    if (ra.status != RecordStatus::Ok) continue;
    // distance from the bump centre to the straight chord
    const Vec p = v2(std::cos(ra.entry.u[0]), std::sin(ra.entry.u[0]));
    const Vec q = v2(std::cos(ra.exit.u[0]), std::sin(ra.exit.u[0]));
    const Vec d = (q - p).normalized();
    const Vec off = (c - p) - (c - p).dot(d) * d;
    const double diff = std::abs(wrap_periodic(ra.exit.u[0] - rb.exit.u[0], 2 * M_PI)) +
                        std::abs(ra.exit.r - rb.exit.r);
    if (off.norm() > s.bump_radius) {
      ++far;
      CHECK(diff < 1e-12);
    } else if (off.norm() > 0.1 * s.bump_radius && off.norm() < 0.7 * s.bump_radius) {
      // chords through the centre of a radial bump stay straight by symmetry
      ++near;
      CHECK(diff > 1e-6);
    }
  }
  CHECK(far > 20);
  CHECK(near > 5);
}

TEST_CASE("dataset-backed oracle tracks the live oracle") {
  DatasetOracle table(flat_dataset());
  LiveOracle live(make("euclidean_disk"));
  for (double u : {0.33, 2.5, 5.9})
    for (double alpha : {0.4, 1.3, 2.2}) {
      const BoundaryVector e = boundary_direction(u, alpha, 1.0);
      const ScatteringRecord a = table.query(e), b = live.query(e);
      CHECK(std::abs(wrap_periodic(a.exit.u[0] - b.exit.u[0], 2 * M_PI)) < 5e-3);
      CHECK(std::abs(a.exit.r - b.exit.r) < 5e-3);
      CHECK(std::abs(a.time - b.time) < 5e-3);
    }
  CHECK(table.calls() == 9);
  CHECK(live.calls() == 9);
}

TEST_CASE("exit-map inversion") {
  LiveOracle flat(make("euclidean_disk"));
  const double ux = 0.1;
  EntrySolution sol = entry_for_exit(flat, ux, M_PI, 1.2);
  CHECK(sol.alpha == doctest::Approx((M_PI - ux) / 2).epsilon(1e-10));
  CHECK(sol.residual <= 1e-9);
  const Vec chord = (v2(-1, 0) - v2(std::cos(ux), std::sin(ux))).normalized();
  const Vec tangent = v2(-std::sin(ux), std::cos(ux));
  CHECK(std::acos(chord.dot(tangent)) == doctest::Approx(sol.alpha).epsilon(1e-10));

  // At x = x0 the probe direction is recovered.
  LiveOracle mag(make("euclidean_disk", 0.5));
  const double alpha0 = 1.1;
  const ScatteringRecord probe = mag.query(boundary_direction(0.0, alpha0, 1.0));
  sol = entry_for_exit(mag, 0.0, probe.exit.u[0], 0.9);
  CHECK(sol.alpha == doctest::Approx(alpha0).epsilon(1e-9));

  LiveOracle hemi(make("spherical_cap", 0.0, M_PI / 2));
  CHECK_THROWS_WITH_AS(entry_for_exit(hemi, 0.0, M_PI, 1.0), doctest::Contains("KappaSingular"),
                       Error);
}
