#pragma once

#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

#include "gridreg/model.hpp"

namespace gridreg {

/// Raised when an integration step produces a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time, int bus)
      : std::runtime_error(what), time_s(time), bus_index(bus) {}
  double time_s;
  int bus_index;
};

/// The right-hand sides are scalar-templated: the simulator runs them in
/// double, the network-matrix probe re-runs the same formulas in extended
/// precision.
template <typename Real>
struct GeneratorStateT {
  Real theta{0};  // rad
  Real w{0};      // Hz
  Real P_M{0};    // MW
  Real P_v{0};    // MW
};
using GeneratorState = GeneratorStateT<double>;

template <typename Real>
struct LoadBusStateT {
  Real theta{0};
  Real w{0};
};
using LoadBusState = LoadBusStateT<double>;

/// Fourth-order synchronous generator right-hand side. flows_sum is the sum
/// of tie-line flows out of the bus, P_L the total local load, P_ren the
/// injected renewable power, P_ref the governor reference input.
template <typename Real>
GeneratorStateT<Real> gen4_rhs(const GeneratorStateT<Real>& s, Real flows_sum, Real P_L,
                               Real P_ren, Real P_ref, const BusParams& p) {
  GeneratorStateT<Real> d;
  d.theta = kTwoPi * s.w;
  d.w = -(p.D * s.w + flows_sum - s.P_M + P_L - P_ren) / p.m;
  d.P_M = -(s.P_M - s.P_v) / p.T_CH;
  d.P_v = -(s.P_v + s.w / p.R - P_ref) / p.T_G;
  return d;
}

/// Third-order simplification: the valve position is an exogenous input and
/// the governor equation is dropped.
template <typename Real>
GeneratorStateT<Real> gen3_rhs(const GeneratorStateT<Real>& s, Real flows_sum, Real P_L,
                               Real P_ren, Real P_v_input, const BusParams& p) {
  GeneratorStateT<Real> d;
  d.theta = kTwoPi * s.w;
  d.w = -(p.D * s.w + flows_sum - s.P_M + P_L - P_ren) / p.m;
  d.P_M = -(s.P_M - P_v_input) / p.T_CH;
  d.P_v = Real(0);
  return d;
}

/// Load-bus swing dynamics; passive buses call with P_L = P_ren = 0.
template <typename Real>
LoadBusStateT<Real> loadbus_rhs(const LoadBusStateT<Real>& s, Real flows_sum, Real P_L,
                                Real P_ren, const BusParams& p) {
  LoadBusStateT<Real> d;
  d.theta = kTwoPi * s.w;
  d.w = -(p.D * s.w + flows_sum + P_L - P_ren) / p.m;
  return d;
}

/// Elastic demand response driven by the price signal lambda.
template <typename Real>
Real demand_rhs(Real P_L_E, Real lambda, double b, double c) {
  return b + c * P_L_E - lambda;
}

inline Eigen::VectorXd exosystem_rhs(const Eigen::VectorXd& chi, const Eigen::MatrixXd& Phi) {
  if (chi.size() != Phi.rows()) throw ConfigError("exosystem_rhs: dimension mismatch");
  return Phi * chi;
}

inline double exo_output(const Eigen::RowVectorXd& Psi, const Eigen::VectorXd& chi) {
  if (chi.size() != Psi.size()) throw ConfigError("exo_output: dimension mismatch");
  return Psi * chi;
}

/// Turbine power from wind speed, in MW. Signal-synthesis utility; scenario
/// wind normally comes from the exosystem directly.
inline double wind_power_from_speed(double v, double rho_air, double r, double C_p) {
  if (v < 0.0) throw std::domain_error("wind_power_from_speed: negative wind speed");
  return C_p * 0.5 * rho_air * M_PI * r * r * v * v * v / 1e6;
}

template <typename Real>
struct BessStateT {
  Real y{0};     // filter output P_ren, MW
  double T = 1;  // time constant, s
};
using BessState = BessStateT<double>;

/// State-space realization of the low-pass filter 1/(1+sT).
template <typename Real>
Real bess_rhs(const BessStateT<Real>& s, Real u) {
  return (u - s.y) / s.T;
}

/// Classical fixed-step RK4 update of a flat state vector. Aborts with bus
/// and time context when a stage derivative is non-finite; locate_bus maps a
/// state index to the owning bus (may be null).
Eigen::VectorXd rk4_step(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& rhs,
                         const Eigen::VectorXd& state, double t, double dt,
                         const std::function<int(int)>& locate_bus = nullptr);

}  // namespace gridreg
