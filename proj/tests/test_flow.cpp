#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "magscat/flow.hpp"

#include <cmath>

using namespace magscat;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

MagneticSystem make(const char* name, double B = 0.0) {
  SystemSpec s;
  s.name = name;
  s.B = B;
  return builtin_system(s);
}

}  // namespace

TEST_CASE("right-hand side") {
  auto flat = make("euclidean_disk");
  auto r = magnetic_rhs(flat, {v2(0.1, 0.2), v2(0.6, 0.8)});
  CHECK(r.theta.norm() == 0.0);
  CHECK((r.x - v2(0.6, 0.8)).norm() == 0.0);

  auto mag = make("euclidean_disk", 1.0);
  r = magnetic_rhs(mag, {v2(0.1, 0.2), v2(1, 0)});
  CHECK((r.theta - v2(0, 1)).norm() < 1e-15);

  // Great-circle equation in the stereographic chart: f = 4/(1+|p|^2)^2,
  // Gamma(v, v) = (2 (grad f . v) v - |v|^2 grad f) / (2 f).
  auto cap = make("spherical_cap");
  const Vec p = v2(0.3, -0.4), v = v2(0.7, 0.2);
  const double w = 1 + p.squaredNorm();
  const double f = 4 / (w * w);
  const Vec gf = -16 * p / (w * w * w);
  const Vec gamma = (2 * gf.dot(v) * v - v.squaredNorm() * gf) / (2 * f);
  r = magnetic_rhs(cap, {p, v});
  CHECK((r.theta + gamma).norm() < 1e-14);
}

TEST_CASE("constant field circle") {
  auto sys = make("euclidean_disk", 1.0);
  const PhaseState s{v2(1, 0), v2(0, 1)};
  const PhaseState e = flow_for(sys, s, M_PI, 1e-3);
  CHECK((e.x - v2(-1, 0)).norm() <= 1e-8);
  auto path = integrate_geodesic(sys, s, 10.0, 1e-3);
  CHECK(path.max_speed_error(sys) <= 1e-9);
  for (double t : {0.3, 2.71, 7.05}) {
    const PhaseState q = path.at(t);
    CHECK((q.x - v2(std::cos(t), std::sin(t))).norm() < 1e-9);
  }
}

TEST_CASE("fourth-order convergence") {
  auto sys = make("euclidean_disk", 1.0);
  const PhaseState s{v2(1, 0), v2(0, 1)};
  const double e1 = (flow_for(sys, s, 3.0, 0.1).x - v2(std::cos(3.0), std::sin(3.0))).norm();
  const double e2 = (flow_for(sys, s, 3.0, 0.05).x - v2(std::cos(3.0), std::sin(3.0))).norm();
  CHECK(e1 / e2 > 13.0);
  CHECK(e1 / e2 < 19.0);
}

TEST_CASE("straight chord and great circle") {
  auto flat = make("euclidean_disk");
  CHECK((flow_for(flat, {v2(1, 0), v2(-1, 0)}, 2.0).x - v2(-1, 0)).norm() < 1e-14);

  // Equator point (colatitude pi/2) to the antipode through the north pole.
  auto cap = make("spherical_cap");
  const PhaseState e = flow_for(cap, {v2(1, 0), v2(-1, 0)}, M_PI, 1e-3);
  CHECK((e.x - v2(-1, 0)).norm() <= 1e-8);
}

TEST_CASE("time reversal with reversed field") {
  for (const char* name : {"euclidean_disk", "perturbed_disk", "spherical_cap"}) {
    auto sys = make(name, 0.8);
    auto rev = sys.with_reversed_field();
    const Vec x = v2(0.2, 0.1);
    Vec th = v2(0.3, -0.5);
    th /= std::sqrt(th.dot(sys.metric(x) * th));
    const PhaseState a = flow_for(sys, {x, th}, 0.7);
    const PhaseState b = flow_for(rev, {a.x, -a.theta}, 0.7);
    CHECK((b.x - x).norm() < 1e-8);
    CHECK((b.theta + th).norm() < 1e-8);
  }
}

TEST_CASE("first exit of the disk") {
  auto flat = make("euclidean_disk");
  ExitEvent ev = first_exit(flat, {v2(1, 0), v2(-1, 0)});
  CHECK(ev.time == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((ev.exit.x - v2(-1, 0)).norm() < 1e-11);
  CHECK((ev.exit.theta - v2(-1, 0)).norm() < 1e-11);
  CHECK(ev.transversal);

  // Larmor circle centred (1, -1) meets the unit circle at (0, -1) after a quarter turn.
  auto mag = make("euclidean_disk", 1.0);
  ev = first_exit(mag, {v2(1, 0), v2(-1, 0)});
  CHECK(ev.time == doctest::Approx(M_PI / 2).epsilon(1e-10));
  CHECK((ev.exit.x - v2(0, -1)).norm() < 1e-9);
  CHECK((ev.exit.theta - v2(0, -1)).norm() < 1e-9);
  CHECK(std::abs(mag.level(ev.exit.x)) <= 1e-10);

  ev = first_exit(flat, {v2(1, 0), v2(0, 1)});
  CHECK(ev.time == 0.0);
  CHECK_FALSE(ev.transversal);
}

TEST_CASE("exit consistency and energy on all built-ins") {
  for (const char* name : {"euclidean_disk", "perturbed_disk", "spherical_cap", "flower_disk"}) {
    auto sys = make(name, 0.5);
    const double period = sys.boundary().period();
    for (double uf : {0.05, 0.4, 0.77}) {
      Vec u(1);
      u << uf * period;
      const BoundaryFrame f = boundary_frame(sys, u);
      const Vec t = f.tangents.col(0) / std::sqrt(f.induced(0, 0));
      const double a = 0.3 + 2.0 * uf;
      const Vec th = std::cos(a) * t + std::sin(a) * f.normal;
      const ExitEvent ev = first_exit(sys, {f.x, th});
      CHECK(std::abs(sys.level(ev.exit.x)) <= 1e-10);
      CHECK(ev.time > 0.0);
      auto path = integrate_geodesic(sys, {f.x, th}, ev.time);
      for (std::size_t k = 1; k + 1 < path.states.size(); ++k)
        REQUIRE(sys.level(path.states[k].x) > 0.0);
      CHECK(path.max_speed_error(sys) <= 1e-9 * std::max(1.0, ev.time));
    }
  }
}

TEST_CASE("trapping guard") {
  auto sys = make("euclidean_disk", 10.0);
  FlowOptions opt;
  opt.t_trap = 5.0;
  // Small Larmor circle tangent to nothing: stays inside forever.
  CHECK_THROWS_WITH_AS(first_exit(sys, {v2(0, 0), v2(1, 0)}, opt), doctest::Contains("Trapped"),
                       Error);
}

TEST_CASE("magnetic exponential") {
  auto flat = make("euclidean_disk");
  CHECK((magnetic_exp(flat, v2(0, 0), v2(0, 0)) - v2(0, 0)).norm() == 0.0);
  CHECK((magnetic_exp(flat, v2(0, 0), v2(0.3, 0.4)) - v2(0.3, 0.4)).norm() < 1e-14);
  auto mag = make("euclidean_disk", 1.0);
  // Larmor circle through the origin with centre (0, 1); half a turn ends at (0, 2).
  auto half = make("half_plane", 1.0);
  CHECK((magnetic_exp(half, v2(0, 0.5), v2(M_PI, 0)) - v2(0, 2.5)).norm() < 1e-8);
  CHECK((magnetic_exp(mag, v2(0, 0), v2(0.5 * M_PI, 0)) - v2(1, 1)).norm() < 1e-8);
}
