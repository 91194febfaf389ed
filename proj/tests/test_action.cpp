#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "magscat/action.hpp"

#include <cmath>
#include <random>

using namespace magscat;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

MagneticSystem make(const char* name, double B = 0.0, double R = 1.0) {
  SystemSpec s;
  s.name = name;
  s.B = B;
  s.R = R;
  s.phi0 = M_PI / 2 + 0.2;
  return builtin_system(s);
}

// Larmor circle in the plane: x(t) = x0 + (sin(Bt) th + (1 - cos(Bt)) J th) / B.
Vec larmor(const Vec& x0, const Vec& th, double B, double t) {
  const Vec Jth = v2(-th(1), th(0));
  return x0 + (std::sin(B * t) * th + (1 - std::cos(B * t)) * Jth) / B;
}

// h = sin(x) + x y^2
void bump_h(const Vec& p, double& v, Vec& grad, Mat& hess) {
  const double x = p(0), y = p(1);
  v = std::sin(x) + x * y * y;
  grad = v2(std::cos(x) + y * y, 2 * x * y);
  hess = Mat(2, 2);
  hess << -std::sin(x), 2 * y, 2 * y, 2 * x;
}

double h_value(const Vec& p) {
  double v;
  Vec g;
  Mat H;
  bump_h(p, v, g, H);
  return v;
}

// Random boundary-to-interior pair: point on the boundary and a point along
// the trajectory of a transversal direction.
struct Pair {
  Vec x, y, theta;
  double tau;
};

Pair random_pair(const MagneticSystem& sys, std::mt19937& rng, double tmax) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (;;) {
    Vec u(1);
    u << sys.boundary().extent() * U(rng);
    const double alpha = 0.3 + (M_PI - 0.6) * U(rng);
    const double E = collar_metric(sys, u, 0.0)(0, 0);
    const PhaseState s = lambda_inverse(sys, boundary_direction(u(0), alpha, E));
    const ExitEvent ev = first_exit(sys, s);
    const double tau = std::min(tmax, ev.time) * (0.4 + 0.5 * U(rng));
    if (tau < 0.2) continue;
    return {s.x, flow_for(sys, s, tau).x, s.theta, tau};
  }
}

}  // namespace

TEST_CASE("radial potential") {
  const double B = 0.8;
  auto flat = make("euclidean_disk", B);
  auto z = radial_potential(flat, v2(0, 0));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-0.7, 0.7);
  for (int i = 0; i < 20; ++i) {
    const Vec x = v2(U(rng), U(rng));
    CHECK((z->zeta(x) - 0.5 * B * v2(-x(1), x(0))).norm() < 1e-14);
  }
  auto zero = radial_potential(make("euclidean_disk"), v2(0.1, 0.2));
  CHECK(zero->zeta(v2(0.3, -0.4)).norm() == 0.0);

  auto pert = make("perturbed_disk", 1.3);
  auto zp = radial_potential(pert, v2(0, 0));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, potential_residual(pert, *zp, v2(U(rng), U(rng))));
  CHECK(worst <= 1e-7);

  // Non-constant field, off-centre base point.
  auto field = std::make_shared<FiniteDifferenceMagneticField>(2, [](const Vec& x) {
    const double b = 1.0 + x(0) * x(0) + std::sin(x(1));
    Mat om(2, 2);
    om << 0, b, -b, 0;
    return om;
  });
  MagneticSystem var(flat.metric_ptr(), field, flat.boundary_ptr(), 0.2);
  auto zv = radial_potential(var, v2(0.2, -0.1));
  worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, potential_residual(var, *zv, v2(U(rng), U(rng))));
  CHECK(worst <= 1e-7);
}

TEST_CASE("action of a path") {
  auto flat = make("euclidean_disk");
  ZeroPotential zero(2);
  GeodesicPath chord = integrate_geodesic(flat, {v2(1, 0), v2(-1, 0)}, 2.0);
  CHECK(action_of_path(zero, chord) == doctest::Approx(2.0).epsilon(1e-14));
  GeodesicPath back = integrate_geodesic(flat, {v2(-1, 0), v2(-1, 0)}, -2.0);
  CHECK(action_of_path(zero, back) == doctest::Approx(2.0).epsilon(1e-14));

  // Larmor arc from the origin: the flux term is B times the circular segment area.
  const double B = 1.0;
  auto mag = make("euclidean_disk", B, 10.0);
  auto z = radial_potential(mag, v2(0, 0));
  for (double t : {0.5, 2.0, 4.0}) {
    GeodesicPath arc = integrate_geodesic(mag, {v2(0, 0), v2(1, 0)}, t);
    const double phi = B * t;
    const double expected = t - (phi - std::sin(phi)) / (2 * B);
    CHECK(std::abs(action_of_path(*z, arc) - expected) < 1e-10);
  }
}

TEST_CASE("two-point connection") {
  auto flat = make("euclidean_disk");
  TwoPointConnection c = connect(flat, v2(1, 0), v2(-1, 0), v2(-1, 0.2), 1.6);
  CHECK((c.theta - v2(-1, 0)).norm() < 1e-9);
  CHECK(std::abs(c.tau - 2.0) < 1e-9);
  CHECK(c.residual <= 1e-9);

  const double B = 1.0;
  auto mag = make("euclidean_disk", B);
  const Vec x0 = v2(1, 0), th = v2(-0.6, 0.8);
  const Vec y = larmor(x0, th, B, 1.3);
  c = connect(mag, x0, y, v2(-0.7, 0.7), 1.1);
  CHECK((c.theta - th).norm() < 1e-8);
  CHECK(std::abs(c.tau - 1.3) < 1e-8);
  CHECK((flow_for(mag, {x0, c.theta}, c.tau).x - y).norm() <= 1e-9);

  auto cap = make("spherical_cap");
  try {
    connect(cap, v2(1, 0), v2(-1, 0), v2(-1, 0), M_PI);
    FAIL("antipodal pair accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConjugateDegenerate);
  }
}

TEST_CASE("rho values") {
  auto flat = make("euclidean_disk");
  ZeroPotential zero(2);
  RhoValue r = rho(flat, zero, v2(0.3, 0.1), v2(-0.2, 0.5), v2(-1, 1), 0.5);
  CHECK(r.rho == doctest::Approx(std::hypot(0.5, 0.4)).epsilon(1e-12));

  const double B = 1.0;
  auto mag = make("euclidean_disk", B, 10.0);
  auto z = radial_potential(mag, v2(0, 0));
  const double t = 1.7, phi = B * t;
  r = rho(mag, *z, v2(0, 0), larmor(v2(0, 0), v2(1, 0), B, t), v2(1, 0.1), 1.5);
  CHECK(std::abs(r.rho - (t - (phi - std::sin(phi)) / (2 * B))) < 1e-9);

  // Rotation by pi preserves the field and the radial gauge.
  auto disk = make("euclidean_disk", B);
  auto zd = radial_potential(disk, v2(0, 0));
  const Vec a = v2(0.7, 0.2), b = larmor(a, v2(-0.6, 0.8), B, 0.9);
  const RhoValue r1 = rho(disk, *zd, a, b, v2(-0.6, 0.8), 0.9);
  const RhoValue r2 = rho(disk, *zd, -a, -b, v2(0.6, -0.8), 0.9);
  CHECK(std::abs(r1.rho - r2.rho) <= 1e-9);
}

TEST_CASE("first variation") {
  auto flat = make("euclidean_disk");
  ZeroPotential zero(2);
  const RhoValue r = rho(flat, zero, v2(0.3, 0.1), v2(-0.2, 0.5), v2(-1, 1), 0.5);
  CHECK(first_variation_check(flat, zero, r, v2(1, 0)) <= 1e-6);
  CHECK(first_variation_check(flat, zero, r, v2(0.3, -0.7)) <= 1e-6);
  // Perpendicular to the chord and zeta = 0: no first-order change.
  const Vec perp = v2(-r.connection.theta(1), r.connection.theta(0));
  const Vec g = rho_gradient_fd(flat, zero, r);
  CHECK(std::abs(g.dot(perp)) <= 1e-7);

  auto mag = make("euclidean_disk", 1.0);
  auto z = radial_potential(mag, v2(0, 0));
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> A(0, 2 * M_PI);
  for (int i = 0; i < 10; ++i) {
    const Pair p = random_pair(mag, rng, 2.5);
    const RhoValue q = rho(mag, *z, p.x, p.y, p.theta, p.tau);
    const double a = A(rng);
    CHECK(first_variation_check(mag, *z, q, v2(std::cos(a), std::sin(a))) <= 1e-5);
  }
}

TEST_CASE("eikonal identity") {
  std::mt19937 rng(5);
  for (const char* name : {"euclidean_disk", "perturbed_disk", "spherical_cap", "flower_disk"}) {
    for (double B : {0.0, 1.0}) {
      auto sys = make(name, B);
      auto z = radial_potential(sys, v2(0, 0));
      double worst = 0.0;
      for (int i = 0; i < 6; ++i) {
        const Pair p = random_pair(sys, rng, 2.5);
        const RhoValue q = rho(sys, *z, p.x, p.y, p.theta, p.tau);
        worst = std::max(worst, eikonal_residual(sys, *z, q));
      }
      INFO(name << " B=" << B);
      CHECK(worst <= 1e-5);
    }
  }
}

TEST_CASE("gauge covariance") {
  auto sys = make("perturbed_disk", 0.7);
  auto z = radial_potential(sys, v2(0, 0));
  ShiftedPotential zh(z, bump_h);
  std::mt19937 rng(8);
  for (int i = 0; i < 5; ++i) {
    const Pair p = random_pair(sys, rng, 2.0);
    const RhoValue a = rho(sys, *z, p.x, p.y, p.theta, p.tau);
    const RhoValue b = rho(sys, zh, p.x, p.y, p.theta, p.tau);
    CHECK(std::abs((b.rho - a.rho) - (h_value(p.x) - h_value(p.y))) <= 1e-8);
  }
}

TEST_CASE("compatible gauge") {
  auto sys = make("euclidean_disk", 0.5);
  auto z1 = radial_potential(sys, v2(0, 0));
  auto z2 = std::make_shared<ShiftedPotential>(z1, bump_h);
  const CollarGauge g1 = collar_gauge(sys, z1), g2 = collar_gauge(sys, z2);
  const double eps = sys.epsilon(), period = sys.boundary().period();

  CompatibleGauge same(g1, g1, period, eps);
  CHECK(std::abs(same.f(1.0, 0.3 * eps)) < 1e-14);

  CompatibleGauge cg(g1, g2, period, eps);
  auto X = [&](double u, double z) {
    Vec uu(1);
    uu << u;
    return collar_map(sys, uu, z);
  };
  const double h0 = h_value(X(0, 0));
  for (double u : {0.3, 2.0, 5.5})
    for (double z : {0.0, 0.2 * eps, 0.5 * eps}) {
      CHECK(std::abs(cg.f(u, z) - (h_value(X(u, z)) - h0)) <= 1e-8);
    }
  for (double u : {0.3, 4.0})
    for (double z : {0.0, 0.1 * eps, 0.35 * eps}) {
      const auto adj = cg.adjusted(u, z);
      CHECK(std::abs(adj.first - g2.zeta_u(u, z)) <= 1e-8);
      CHECK(std::abs(adj.second - g2.zeta_z(u, z)) <= 1e-8);
    }
  // Beyond the cutoff the first gauge is untouched.
  const auto far = cg.adjusted(1.0, 0.9 * eps);
  CHECK(far.first == g1.zeta_u(1.0, 0.9 * eps));

  CollarGauge g3 = g1;
  g3.zeta_u = [g1](double u, double z) { return g1.zeta_u(u, z) + 0.1; };
  try {
    CompatibleGauge bad(g1, g3, period, eps);
    FAIL("holonomy not detected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HolonomyObstruction);
  }
}

TEST_CASE("rho along scattering") {
  const std::vector<double> grid{0.02, 0.05, 0.1, 0.2};
  auto flat = make("euclidean_disk");
  LiveOracle oracle(flat);
  BoundaryGaugeData none{[](double) { return 1.0; }, [](double) { return 0.0; }};
  RhoAlongScattering r = rho_along_scattering(oracle, none, 0.0, 1, grid);
  CHECK(r.lambda == doctest::Approx(1.0).epsilon(1e-3));
  for (const auto& s : r.samples) CHECK(std::abs(s.rho - 2 * std::sin(s.s)) <= 1e-5);
  r = rho_along_scattering(oracle, none, 1.0, -1, {1e-3});
  CHECK(std::abs(r.samples[0].rho) <= 3e-3);

  auto mag = make("euclidean_disk", 0.5);
  LiveOracle mo(mag);
  auto z = radial_potential(mag, v2(0, 0));
  BoundaryGaugeData data{[&mo](double u) { return mo.induced(u); }, [&](double u) {
                           Vec uu(1);
                           uu << u;
                           return z->zeta(mag.boundary().point(uu)).dot(mag.boundary().tangents(uu).col(0));
                         }};
  for (int sign : {1, -1}) {
    const double u0 = 0.7;
    r = rho_along_scattering(mo, data, u0, sign, grid);
    Vec uu(1);
    uu << u0;
    const Vec x0 = mag.boundary().point(uu);
    for (const auto& s : r.samples) {
      Vec ue(1);
      ue << s.u_exit;
      const Vec y = mag.boundary().point(ue);
      const PhaseState v = lambda_inverse(mag, boundary_direction(u0, sign > 0 ? s.s : M_PI - s.s, 1.0));
      const RhoValue direct = rho(mag, *z, x0, y, v.theta, (y - x0).norm());
      INFO("sign " << sign << " s " << s.s);
      CHECK(std::abs(s.rho - direct.rho) <= 1e-5);
    }
  }

  // Concave lobe: the exit curve does not collapse.
  auto flower = make("flower_disk");
  LiveOracle fo(flower);
  BoundaryGaugeData fd{[&fo](double u) { return fo.induced(u); }, [](double) { return 0.0; }};
  const double concave_u = M_PI / flower.spec->flower_lobes;
  Vec cu(1);
  cu << concave_u;
  CHECK(convexity_indicator(flower, cu, flower.boundary().tangents(cu).col(0)) < 0);
  CHECK_THROWS_AS(rho_along_scattering(fo, fd, concave_u, 1, grid), Error);
}
