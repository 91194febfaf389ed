#include "magscat/flow.hpp"

#include <cmath>

namespace magscat {

namespace {

void check_chart(const MagneticSystem& sys, const PhaseState& s) {
  if (!s.x.allFinite() || !s.theta.allFinite() || !sys.in_extended_chart(s.x))
    throw Error(ErrorCode::LeftChart, "trajectory left the extended chart");
}

double level_rate(const MagneticSystem& sys, const PhaseState& s) {
  return sys.boundary().level_grad(s.x).dot(s.theta);
}

double normal_component(const MagneticSystem& sys, const PhaseState& s) {
  const Vec nu = normal_field(sys, s.x);
  return s.theta.dot(sys.metric(s.x) * nu);
}

}  // namespace

PhaseState magnetic_rhs(const MagneticSystem& sys, const PhaseState& s) {
  return PhaseState{s.theta, sys.acceleration(s.x, s.theta)};
}

PhaseState flow_step(const MagneticSystem& sys, const PhaseState& s, double h) {
  const PhaseState k1 = magnetic_rhs(sys, s);
  const PhaseState k2 = magnetic_rhs(sys, {s.x + 0.5 * h * k1.x, s.theta + 0.5 * h * k1.theta});
  const PhaseState k3 = magnetic_rhs(sys, {s.x + 0.5 * h * k2.x, s.theta + 0.5 * h * k2.theta});
  const PhaseState k4 = magnetic_rhs(sys, {s.x + h * k3.x, s.theta + h * k3.theta});
  return PhaseState{s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
                    s.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta)};
}

PhaseState flow_for(const MagneticSystem& sys, const PhaseState& s, double t, double h) {
  if (t == 0.0) return s;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t) / h - 1e-9)));
  const double dt = t / steps;
  PhaseState cur = s;
  for (int i = 0; i < steps; ++i) {
    cur = flow_step(sys, cur, dt);
    check_chart(sys, cur);
  }
  return cur;
}

double speed(const MagneticSystem& sys, const PhaseState& s) {
  return std::sqrt(s.theta.dot(sys.metric(s.x) * s.theta));
}

PhaseState GeodesicPath::at(double time) const {
  if (t.empty()) throw Error(ErrorCode::BadParams, "empty path");
  const double dir = (t.size() > 1 && t.back() < t.front()) ? -1.0 : 1.0;
  const double rel = dir * (time - t.front());
  const double span = dir * (t.back() - t.front());
  if (rel < -1e-12 || rel > span + 1e-12) throw Error(ErrorCode::BadParams, "time outside path");
  std::size_t k = 0;
  if (t.size() > 1) {
    const double step = std::abs(t[1] - t[0]);
    k = std::min<std::size_t>(t.size() - 2,
                              static_cast<std::size_t>(std::max(0.0, std::floor(rel / step))));
  }
  if (t.size() == 1) return states[0];
  const double dt = t[k + 1] - t[k];
  const double s = (time - t[k]) / dt;
  const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
  const double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
  PhaseState out;
  out.x = h00 * states[k].x + h10 * dt * rates[k].x + h01 * states[k + 1].x +
          h11 * dt * rates[k + 1].x;
  out.theta = h00 * states[k].theta + h10 * dt * rates[k].theta + h01 * states[k + 1].theta +
              h11 * dt * rates[k + 1].theta;
  return out;
}

double GeodesicPath::max_speed_error(const MagneticSystem& sys) const {
  double worst = 0.0;
  for (const auto& s : states) worst = std::max(worst, std::abs(speed(sys, s) - 1.0));
  return worst;
}

GeodesicPath integrate_geodesic(const MagneticSystem& sys, const PhaseState& s, double t_max,
                                double h, double t_trap) {
  if (!(h > 0.0)) throw Error(ErrorCode::BadParams, "step size must be positive");
  if (std::abs(t_max) > t_trap) throw Error(ErrorCode::Trapped, "requested time exceeds T_TRAP");
  check_chart(sys, s);
  GeodesicPath path;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t_max) / h - 1e-9)));
  const double dt = t_max / steps;
  path.h = std::abs(dt);
  path.t.reserve(steps + 1);
  path.states.reserve(steps + 1);
  path.rates.reserve(steps + 1);
  PhaseState cur = s;
  path.t.push_back(0.0);
  path.states.push_back(cur);
  path.rates.push_back(magnetic_rhs(sys, cur));
  for (int i = 1; i <= steps; ++i) {
    cur = flow_step(sys, cur, dt);
    check_chart(sys, cur);
    path.t.push_back(i * dt);
    path.states.push_back(cur);
    path.rates.push_back(magnetic_rhs(sys, cur));
  }
  return path;
}

ExitEvent first_exit(const MagneticSystem& sys, const PhaseState& entry, const FlowOptions& opt) {
  check_chart(sys, entry);
  const double b0 = sys.level(entry.x);
  if (b0 < -1e-9) throw Error(ErrorCode::NotOnBoundary, "entry point lies outside M");

  ExitEvent ev;
  if (std::abs(b0) <= 1e-9) {
    const double c0 = normal_component(sys, entry);
    if (c0 <= opt.tol_tangency) {
      ev.time = 0.0;
      ev.exit = entry;
      ev.normal_component = c0;
      ev.transversal = std::abs(c0) > opt.tol_tangency;
      return ev;
    }
  }

  const double h = opt.h;
  PhaseState cur = entry;
  double t = 0.0;
  double rate = level_rate(sys, cur);

  auto partial = [&](double tau) { return flow_step(sys, cur, tau); };
  // Bisection for b = 0 on (0, hi] where b(hi) <= 0 and b > 0 just after 0.
  auto locate = [&](double hi) {
    double lo = 0.0;
    PhaseState best = partial(hi);
    double best_b = sys.level(best.x), best_tau = hi;
    for (int it = 0; it < 200 && std::abs(best_b) > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const PhaseState s = partial(mid);
      const double b = sys.level(s.x);
      if (b > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (std::abs(b) < std::abs(best_b)) {
        best = s;
        best_b = b;
        best_tau = mid;
      }
    }
    if (std::abs(best_b) > 1e-10)
      throw Error(ErrorCode::GrazingUnresolved, "exit crossing could not be resolved");
    ev.time = t + best_tau;
    ev.exit = best;
    ev.normal_component = normal_component(sys, best);
    ev.transversal = std::abs(ev.normal_component) > opt.tol_tangency;
    return ev;
  };

  while (true) {
    if (t > opt.t_trap) throw Error(ErrorCode::Trapped, "no exit before T_TRAP");
    const PhaseState next = flow_step(sys, cur, h);
    check_chart(sys, next);
    const double b_next = sys.level(next.x);
    if (b_next <= 0.0) return locate(h);
    const double rate_next = level_rate(sys, next);
    if (rate < 0.0 && rate_next > 0.0) {
      // b has an interior minimum in this step: find it and test its sign.
      double lo = 0.0, hi = h;
      for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (level_rate(sys, partial(mid)) < 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double tau_min = 0.5 * (lo + hi);
      const double b_min = sys.level(partial(tau_min).x);
      if (b_min <= 0.0) return locate(tau_min);
      if (b_min < 1e-9) {
        ++ev.grazing_contacts;
        ev.grazing_times.push_back(t + tau_min);
      }
    }
    cur = next;
    rate = rate_next;
    t += h;
  }
}

Vec magnetic_exp(const MagneticSystem& sys, const Vec& x, const Vec& w, double h, double t_trap) {
  const double len = std::sqrt(w.dot(sys.metric(x) * w));
  if (len == 0.0) return x;
  if (len > t_trap) throw Error(ErrorCode::BadParams, "|w| exceeds T_TRAP");
  return flow_for(sys, PhaseState{x, w / len}, len, h).x;
}

}  // namespace magscat
