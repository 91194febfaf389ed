#pragma once

#include "magscat/geometry.hpp"

#include <vector>

namespace magscat {

struct PhaseState {
  Vec x;
  Vec theta;
};

struct FlowOptions {
  double h = 1e-3;
  double t_trap = 100.0;
  double tol_tangency = 1e-6;
};

/// Knots of a fixed-step integration plus derivatives for cubic Hermite output.
struct GeodesicPath {
  double h = 0.0;
  std::vector<double> t;
  std::vector<PhaseState> states;
  std::vector<PhaseState> rates;

  PhaseState at(double time) const;
  double max_speed_error(const MagneticSystem& sys) const;
};

/// (dx, dtheta) = (theta, -Gamma(theta, theta) + Y theta).
PhaseState magnetic_rhs(const MagneticSystem& sys, const PhaseState& s);

/// One RK4 step of size h (h may be negative).
PhaseState flow_step(const MagneticSystem& sys, const PhaseState& s, double h);

/// Flow for signed time t using ceil(|t|/h) equal steps. Throws LeftChart.
PhaseState flow_for(const MagneticSystem& sys, const PhaseState& s, double t, double h = 1e-3);

/// Fixed-step path on [0, t_max] (t_max < 0 integrates backwards). Throws LeftChart.
GeodesicPath integrate_geodesic(const MagneticSystem& sys, const PhaseState& s, double t_max,
                                double h = 1e-3, double t_trap = 100.0);

struct ExitEvent {
  double time = 0.0;
  PhaseState exit;
  bool transversal = false;
  double normal_component = 0.0;  // <theta, nu>_g at exit (negative when leaving)
  int grazing_contacts = 0;       // interior tangential touches passed on the way
  std::vector<double> grazing_times;
};

/// First time the trajectory leaves M. Throws Trapped / GrazingUnresolved / LeftChart.
ExitEvent first_exit(const MagneticSystem& sys, const PhaseState& entry,
                     const FlowOptions& opt = {});

/// gamma_{x, w/|w|}(|w|_g).
Vec magnetic_exp(const MagneticSystem& sys, const Vec& x, const Vec& w, double h = 1e-3,
                 double t_trap = 100.0);

double speed(const MagneticSystem& sys, const PhaseState& s);

}  // namespace magscat
