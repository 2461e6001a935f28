#include "gridreg/dynamics.hpp"

namespace gridreg {

namespace {

void check_finite(const Eigen::VectorXd& v, double t, const std::function<int(int)>& locate_bus) {
  if (v.allFinite()) return;
  int idx = 0;
  for (; idx < v.size(); ++idx)
    if (!std::isfinite(v(idx))) break;
  const int bus = locate_bus ? locate_bus(idx) : -1;
  throw IntegrationError("non-finite derivative at t=" + std::to_string(t) +
                             (bus >= 0 ? " (bus index " + std::to_string(bus) + ")" : ""),
                         t, bus);
}

}  // namespace

Eigen::VectorXd rk4_step(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& rhs,
                         const Eigen::VectorXd& state, double t, double dt,
                         const std::function<int(int)>& locate_bus) {
  const Eigen::VectorXd k1 = rhs(t, state);
  check_finite(k1, t, locate_bus);
  const Eigen::VectorXd k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1);
  check_finite(k2, t + 0.5 * dt, locate_bus);
  const Eigen::VectorXd k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2);
  check_finite(k3, t + 0.5 * dt, locate_bus);
  const Eigen::VectorXd k4 = rhs(t + dt, state + dt * k3);
  check_finite(k4, t + dt, locate_bus);
  return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace gridreg
