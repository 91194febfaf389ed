// Acceptance run: one PASS/FAIL line per criterion with the pinned tolerances.
#include "magscat/recovery.hpp"
#include "magscat/rigidity.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace magscat;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

MagneticSystem make(const std::string& name, double B = 0.0, double R = 1.0,
                    double phi0 = M_PI / 2 + 0.2) {
  SystemSpec s;
  s.name = name;
  s.B = B;
  s.R = R;
  s.phi0 = phi0;
  return builtin_system(s);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome flow_fidelity() {
  auto sys = make("euclidean_disk", 1.0);
  const PhaseState s{v2(1, 0), v2(0, 1)};
  const Vec end = v2(-1, 0);  // unit Larmor circle after length pi
  const double e1 = (flow_for(sys, s, M_PI, 1e-3).x - end).norm();
  // the ratio is measured where the truncation error dominates rounding
  const Vec p3 = v2(std::cos(3.0), std::sin(3.0));
  const double c1 = (flow_for(sys, s, 3.0, 0.1).x - p3).norm();
  const double c2 = (flow_for(sys, s, 3.0, 0.05).x - p3).norm();
  const double drift = integrate_geodesic(sys, s, M_PI, 1e-3).max_speed_error(sys);
  Outcome o;
  o.pass = e1 <= 1e-8 && c1 / c2 >= 12.0 && drift <= 1e-9;
  o.detail = "endpoint err " + fmt("%.2e", e1) + " (<= 1e-8), halving ratio " + fmt("%.2f", c1 / c2) +
             " (>= 12), energy drift " + fmt("%.2e", drift) + " (<= 1e-9)";
  return o;
}

Outcome collar_coordinates() {
  auto sys = make("euclidean_disk");
  double worst_nn = 0.0, worst_an = 0.0, worst_tt = 0.0;
  for (double u : {0.0, 0.7, 2.5, 4.0}) {
    for (double z : {0.02, 0.1, 0.15}) {
      const Mat g = collar_metric(sys, Vec::Constant(1, u), z);
      worst_nn = std::max(worst_nn, std::abs(g(1, 1) - 1.0));
      worst_an = std::max(worst_an, std::abs(g(0, 1)));
      if (z == 0.1) worst_tt = std::max(worst_tt, std::abs(g(0, 0) - 0.81));
    }
  }
  Outcome o;
  o.pass = worst_nn <= 1e-8 && worst_an <= 1e-8 && worst_tt <= 1e-6;
  o.detail = "|g_nn - 1| " + fmt("%.1e", worst_nn) + ", |g_an| " + fmt("%.1e", worst_an) +
             " (<= 1e-8), |g_tt(u,0.1) - 0.81| " + fmt("%.1e", worst_tt) + " (<= 1e-6)";
  return o;
}

struct PairStats {
  double eikonal = 0.0, variation = 0.0;
  int pairs = 0;
};

// x on the boundary, y on the trajectory of a transversal direction, shorter than
// pi so that no pair is conjugate
PairStats eikonal_pairs() {
  PairStats st;
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (const char* name : {"euclidean_disk", "perturbed_disk", "spherical_cap", "flower_disk"}) {
    auto sys = make(name, 0.5);
    auto z = radial_potential(sys, v2(0, 0));
    for (int i = 0; i < 100;) {
      const double u = sys.boundary().extent() * U(rng);
      const double alpha = 0.3 + (M_PI - 0.6) * U(rng);
      const double E = collar_metric(sys, Vec::Constant(1, u), 0.0)(0, 0);
      const PhaseState s = lambda_inverse(sys, boundary_direction(u, alpha, E));
      const double tau = std::min(2.5, first_exit(sys, s).time) * (0.4 + 0.5 * U(rng));
      if (tau < 0.2) continue;
      const Vec y = flow_for(sys, s, tau).x;
      const RhoValue q = rho(sys, *z, s.x, y, s.theta, tau);
      st.eikonal = std::max(st.eikonal, eikonal_residual(sys, *z, q));
      const Vec grad = rho_gradient_fd(sys, *z, q);
      const Vec th = q.connection.theta;
      const Vec expect = -(sys.metric(s.x) * th) + z->zeta(s.x);
      st.variation = std::max(st.variation, (grad - expect).cwiseAbs().maxCoeff());
      ++i;
      ++st.pairs;
    }
  }
  return st;
}

PairStats& pair_stats() {
  static PairStats st = eikonal_pairs();
  return st;
}

Outcome eikonal_identity() {
  const PairStats& st = pair_stats();
  return {st.eikonal <= 1e-5, std::to_string(st.pairs) + " pairs on 4 built-ins at B=0.5, max residual " +
                                  fmt("%.2e", st.eikonal) + " (<= 1e-5)"};
}

Outcome first_variation() {
  const PairStats& st = pair_stats();
  return {st.variation <= 1e-5, "max |d rho - (-theta + zeta)| " + fmt("%.2e", st.variation) +
                                    " (<= 1e-5) on the same pairs"};
}

Outcome jacobi_correctness() {
  auto sys = make("perturbed_disk", 0.7);
  PhaseState s{v2(0.3, 0.05), v2(-0.2, 0.5)};
  s.theta /= speed(sys, s);
  const LocalGeometry geo = sys.local(s.x, 0);
  JacobiRun run = solve_jacobi(sys, s, 1.2, s.theta, geo.Y * s.theta);
  double vel = 0.0;
  for (std::size_t k = 0; k < run.size(); ++k)
    vel = std::max(vel, (run.J(k).col(0) - run.state(k).theta).norm());
  const double resid = jacobi_residual(sys, run, 0);

  auto hemi = make("spherical_cap", 0.0, 1.0, M_PI / 2);
  JacobiTensorResult r = jacobi_tensor(hemi, {v2(1, 0), v2(-1, 0)}, M_PI + 0.1, Anchor::Start);
  double sphere = 1.0;
  int order = 0;
  for (const auto& c : r.conjugate)
    if (std::abs(c.t - M_PI) < sphere) sphere = std::abs(c.t - M_PI), order = c.order;

  const double B = 1.0;
  auto mag = make("euclidean_disk", B, 10.0);
  r = jacobi_tensor(mag, {v2(0, 0), v2(1, 0)}, 2.2 * M_PI / B, Anchor::Start);
  double larmor = 1.0;
  for (const auto& c : r.conjugate) larmor = std::min(larmor, std::abs(c.t - 2 * M_PI / B));

  const PhaseState s0{v2(0, 0), v2(1, 0)};
  const double d1 = jacobi_vs_variation(mag, s0, M_PI, v2(0.3, -0.2), v2(0, 0.5), 1e-3);
  const double d2 = jacobi_vs_variation(mag, s0, M_PI, v2(0.3, -0.2), v2(0, 0.5), 5e-4);
  const double slope = d1 / d2;

  Outcome o;
  o.pass = vel <= 1e-7 && resid <= 1e-6 && sphere <= 1e-3 && order == 1 && larmor <= 1e-3 &&
           std::abs(slope - 2.0) <= 0.3 * 2.0;
  o.detail = "gamma' as Jacobi field " + fmt("%.1e", vel) + " (<= 1e-7, equation residual " +
             fmt("%.1e", resid) + "), hemisphere |t-pi| " +
             fmt("%.1e", sphere) + " order " + std::to_string(order) + ", Larmor |t-2pi/B| " +
             fmt("%.1e", larmor) + " (<= 1e-3), variation ratio " + fmt("%.3f", slope) +
             " (2 +- 30%)";
  return o;
}

struct RecoveryRuns {
  BoundaryJetEstimate flat, a, b;
  TruthJets ta, tb;
  std::size_t outside = 0;
  double seconds = 0.0;
};

BoundaryJetEstimate blind(const MagneticSystem& sys, std::shared_ptr<const MagneticPotential> gauge,
                          double u0, std::size_t& outside) {
  const BoundaryData data = tabulate_boundary_data(sys, gauge, u0 - 1.2, u0 + 1.2);
  LiveOracle oracle(sys);
  sys.audit().reset();
  BoundaryJetEstimate est = recover_jet(oracle, data, u0);
  outside += sys.audit().outside_oracle();
  return est;
}

RecoveryRuns& recovery_runs() {
  static RecoveryRuns r = [] {
    RecoveryRuns out;
    const auto t0 = std::chrono::steady_clock::now();
    auto flat = make("euclidean_disk");
    out.flat = blind(flat, radial_potential(flat, v2(0, 0)), 1.0, out.outside);
    auto mag = make("euclidean_disk", 0.5);
    auto ga = radial_potential(mag, v2(0, 0)), gb = radial_potential(mag, v2(0.3, 0.2));
    out.a = blind(mag, ga, 1.0, out.outside);
    out.b = blind(mag, gb, 1.0, out.outside);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.ta = truth_jets(mag, ga, 1.0);
    out.tb = truth_jets(mag, gb, 1.0);
    return out;
  }();
  return r;
}

Outcome jet_recovery() {
  const RecoveryRuns& r = recovery_runs();
  const double g1 = std::abs(r.flat.g[1].value - 2.0) / 2.0;
  const double g2 = std::abs(r.flat.g[2].value - 6.0) / 6.0;
  const double za = std::abs(r.a.zeta[1].value - r.ta.zeta[1]) / std::abs(r.ta.zeta[1]);
  const double zb = std::abs(r.b.zeta[1].value - r.tb.zeta[1]) / std::abs(r.tb.zeta[1]);
  double om = 0.0, om_tol = 0.0;
  bool om_ok = true;
  for (int k = 0; k < 2; ++k) {
    const double d = std::abs(r.a.omega[k].value - r.b.omega[k].value);
    const double tol = 1e-6 + r.a.omega[k].width + r.b.omega[k].width;
    om_ok = om_ok && d <= tol;
    om = std::max(om, d);
    om_tol = std::max(om_tol, tol);
  }
  Outcome o;
  o.pass = g1 <= 0.03 && g2 <= 0.10 && za <= 0.05 && zb <= 0.05 && om_ok && r.seconds <= 300.0;
  o.detail = "d_n g " + fmt("%.5f", r.flat.g[1].value) + " (rel " + fmt("%.1e", g1) +
             " <= 3%), d_n^2 g " + fmt("%.4f", r.flat.g[2].value) + " (rel " + fmt("%.1e", g2) +
             " <= 10%), d_n zeta rel " + fmt("%.1e", std::max(za, zb)) +
             " (<= 5%), Omega-jet gap " + fmt("%.1e", om) + " (<= " + fmt("%.1e", om_tol) +
             "), " + fmt("%.1f", r.seconds) + " s";
  return o;
}

Outcome data_only() {
  const RecoveryRuns& r = recovery_runs();
  const std::size_t calls = r.flat.oracle_calls + r.a.oracle_calls + r.b.oracle_calls;
  return {r.outside == 0 && calls > 0, std::to_string(r.outside) +
                                           " non-oracle truth queries over 3 blind runs (" +
                                           std::to_string(calls) + " oracle calls)"};
}

Outcome equivalence() {
  auto sys = make("euclidean_disk");
  auto pb = pullback_system(sys, std::make_shared<BumpDiffeo>(v2(0.1, 0.1), 0.5, v2(0.08, -0.05)));
  const GridSpec grid{64, 32};
  const auto d1 = sample_dataset(sys, grid), d2 = sample_dataset(pb, grid);
  const auto sd = scattering_distance(d1, d2);
  const auto tt = compare_travel_times(d1, d2);
  Outcome o;
  o.pass = sd.sup_exit <= 1e-6 && tt.sup <= 1e-6 && sd.status_mismatch == 0;
  o.detail = "64x32 grid, " + std::to_string(sd.compared) + " records: scattering " +
             fmt("%.2e", sd.sup_exit) + ", travel time " + fmt("%.2e", tt.sup) + " (<= 1e-6)";
  return o;
}

Outcome rho_scattering() {
  auto mag = make("euclidean_disk", 0.5);
  LiveOracle oracle(mag);
  auto z = radial_potential(mag, v2(0, 0));
  const BoundaryChart& bd = mag.boundary();
  BoundaryGaugeData data{[&](double u) { return oracle.induced(u); }, [&](double u) {
                           const Vec uu = Vec::Constant(1, u);
                           return z->zeta(bd.point(uu)).dot(bd.tangents(uu).col(0));
                         }};
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.02 * k);
  double worst = 0.0;
  for (int sign : {1, -1}) {
    const double u0 = 0.7;
    const Vec x0 = bd.point(Vec::Constant(1, u0));
    const RhoAlongScattering r = rho_along_scattering(oracle, data, u0, sign, grid);
    for (const RhoSample& s : r.samples) {
      const Vec y = bd.point(Vec::Constant(1, s.u_exit));
      const PhaseState v =
          lambda_inverse(mag, boundary_direction(u0, sign > 0 ? s.s : M_PI - s.s, 1.0));
      const RhoValue direct = rho(mag, *z, x0, y, v.theta, (y - x0).norm());
      worst = std::max(worst, std::abs(s.rho - direct.rho));
    }
  }
  return {worst <= 1e-5, "flat disk B=0.5, s in [0.02, 0.2], both tangents: max |quadrature - direct| " +
                             fmt("%.2e", worst) + " (<= 1e-5)"};
}

Outcome extension_map() {
  auto sys = make("euclidean_disk", 0.5);
  auto phi = std::make_shared<BumpDiffeo>(v2(0.1, 0.1), 0.5, v2(0.08, -0.05));
  auto pb = pullback_system(sys, phi);
  const Vec x = v2(0.15, 0.05);
  const ExtensionProbe p = theta_independence(pb, sys, x, 16);

  ExtensionOptions early, late;
  early.band_fraction = 0.3;
  late.band_fraction = 0.7;
  double tdiff = 0.0;
  for (int j = 0; j < 16; j += 3) {
    const Vec th = p.thetas[j];
    tdiff = std::max(tdiff, (extend_phi(pb, sys, x, th, early).image -
                             extend_phi(pb, sys, x, th, late).image).norm());
  }

  std::mt19937 rng(77);
  std::uniform_real_distribution<double> U(-0.6, 0.6), A(0, 2 * M_PI);
  double known = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Vec y = v2(U(rng), U(rng));
    Vec th = v2(std::cos(A(rng)), std::sin(A(rng)));
    th /= std::sqrt(th.dot(pb.metric(y) * th));
    known = std::max(known, (extend_phi(pb, sys, y, th).image - phi->map(y)).norm());
  }
  Outcome o;
  o.pass = p.spread <= 1e-5 && p.failures.empty() && tdiff <= 1e-8 && known <= 1e-6;
  o.detail = "16-direction spread " + fmt("%.1e", p.spread) + " (<= 1e-5), T-choice " +
             fmt("%.1e", tdiff) + " (<= 1e-8), known diffeomorphism at 20 points " +
             fmt("%.1e", known) + " (<= 1e-6)";
  return o;
}

Outcome negative_control() {
  auto flat = make("euclidean_disk");
  SystemSpec ps;
  ps.name = "perturbed_disk";
  auto bumped = builtin_system(ps);
  const GridSpec grid{64, 32};
  const auto d1 = sample_dataset(flat, grid), d2 = sample_dataset(bumped, grid);
  const auto sd = scattering_distance(d1, d2);
  const Vec c = v2(ps.bump_center_x, ps.bump_center_y);
  const BoundaryChart& bd = flat.boundary();
  double crossing = 0.0, away = 0.0;
  std::size_t n_cross = 0;
  for (const RecordDiff& d : sd.diffs) {
    const auto& rec = d1.records[d.index];
    const Vec a = bd.point(rec.entry.u), b = bd.point(rec.exit.u);
    const double t = std::clamp((c - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    const double dist = (a + t * (b - a) - c).norm();
    if (dist < ps.bump_radius) {
      crossing = std::max(crossing, d.exit);
      ++n_cross;
    } else {
      away = std::max(away, d.exit);
    }
  }
  return {crossing >= 1e-3 && away <= 1e-12,
          std::to_string(n_cross) + " bump-crossing records: max discrepancy " + fmt("%.2e", crossing) +
              " (>= 1e-3); chords missing the bump " + fmt("%.1e", away)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "flow fidelity", flow_fidelity},
      {2, "collar coordinates", collar_coordinates},
      {3, "eikonal identity", eikonal_identity},
      {4, "first variation", first_variation},
      {5, "Jacobi correctness", jacobi_correctness},
      {6, "jet recovery", jet_recovery},
      {7, "data-only discipline", data_only},
      {8, "equivalence invariance", equivalence},
      {9, "rho along scattering", rho_scattering},
      {10, "extension map", extension_map},
      {11, "negative control", negative_control},
  };
  int failed = 0;
  for (const Criterion& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("raised ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), sec);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
