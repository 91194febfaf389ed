#pragma once

namespace magscat {

/// One classical Runge-Kutta step for an autonomous system y' = f(y).
template <class State, class Rhs>
State rk4_step(const Rhs& f, const State& y, double h) {
  const State k1 = f(y);
  const State k2 = f(State(y + (0.5 * h) * k1));
  const State k3 = f(State(y + (0.5 * h) * k2));
  const State k4 = f(State(y + h * k3));
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace magscat
