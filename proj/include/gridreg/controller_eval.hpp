#pragma once

// Scalar-templated per-bus evaluation core shared by the simulation loop and
// the network-matrix probing. Algorithm-designed gains reach 1e13..1e15, and
// probing the closed loop at those magnitudes needs more than double
// precision; the same formulas instantiated with float128 keep the probe and
// its superposition guard honest. The double instantiation is the one the
// simulator runs.

#include <Eigen/Dense>

#include "gridreg/gains.hpp"
#include "gridreg/internal_model.hpp"
#include "gridreg/model.hpp"

namespace gridreg {

template <typename Real>
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using RowX = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Internal-model matrices cast to the evaluation scalar once.
template <typename Real>
struct ModelMatrices {
  bool empty = true;
  MatX<Real> M;
  VecX<Real> N;
  RowX<Real> Psi, Psi1, Psi2;
  MatX<Real> T_star_inv;

  static ModelMatrices from(const InternalModelSpec& spec) {
    ModelMatrices mm;
    if (spec.empty()) return mm;
    mm.empty = false;
    mm.M = spec.M().template cast<Real>();
    mm.N = spec.N().template cast<Real>();
    mm.Psi = spec.Psi().template cast<Real>();
    mm.Psi1 = spec.Psi1().template cast<Real>();
    mm.Psi2 = spec.Psi2().template cast<Real>();
    mm.T_star_inv = spec.T_star_inv().template cast<Real>();
    return mm;
  }
};

template <typename Real>
struct LocalBusViewT {
  BusKind kind = BusKind::Passive;
  BusParams params;
  Real w_star{0};
  Real theta_ref{0};
  Real flows_star{0};
  Real stiffness_sum{0};

  Real delta{0};
  Real w{0};
  Real P_M{0};
  Real P_v{0};
  Real P_LE{0};
  VecX<Real> eta;
  MatX<Real> T_inv;

  Real p_ie{0};
  Real p_ie_dot{0};
  Real p_ie_ddot{0};
};

template <typename Real>
struct ManifoldInputsT {
  Real ren_L{0}, ren_L_dot{0}, ren_L_ddot{0};
  Real ren_M{0}, ren_M_dot{0};
  Real p_ie{0}, p_ie_dot{0}, p_ie_ddot{0};
  Real w_star{0};
  Real flows_star{0};
};

template <typename Real>
struct GenManifoldsT {
  Real theta{0}, w{0}, P_M{0}, P_v{0}, P_ref{0}, P_LE{0}, lambda{0};
};

template <typename Real>
struct LoadManifoldsT {
  Real theta{0}, w{0}, demand{0}, lambda{0};
};

template <typename Real>
struct HatAndInputT {
  VecX<Real> xhat;  // scalar backstepping states (5 or 4 generator, 3 load)
  Real P_ref{0};    // Solution 1 generator input
  Real P_v{0};      // Solution 2 generator input
  Real lambda{0};   // pricing input (generator and load)
  VecX<Real> J;     // Solution 2 estimator drive (empty otherwise)
};

template <typename Real>
GenManifoldsT<Real> manifolds_s1_generator_t(const ManifoldInputsT<Real>& in, const BusParams& p,
                                             Real theta_ref) {
  GenManifoldsT<Real> m;
  m.theta = theta_ref;
  m.w = in.w_star;
  m.P_LE = in.ren_M;
  const Real base = in.p_ie - in.ren_L + p.D * in.w_star + in.flows_star;
  m.P_M = base;
  m.P_v = p.T_CH * (in.p_ie_dot - in.ren_L_dot) + base;
  m.P_ref = p.T_G * p.T_CH * (in.p_ie_ddot - in.ren_L_ddot) +
            (p.T_G + p.T_CH) * (in.p_ie_dot - in.ren_L_dot) + in.p_ie - in.ren_L +
            (p.D + 1.0 / p.R) * in.w_star + in.flows_star;
  m.lambda = -in.ren_M_dot + p.c() * in.ren_M + p.b();
  return m;
}

template <typename Real>
LoadManifoldsT<Real> manifolds_s1_load_t(const ManifoldInputsT<Real>& in, const BusParams& p,
                                         Real theta_ref) {
  LoadManifoldsT<Real> m;
  m.theta = theta_ref;
  m.w = in.w_star;
  const Real ren = in.ren_L + in.ren_M;
  const Real ren_dot = in.ren_L_dot + in.ren_M_dot;
  m.demand = ren - in.p_ie - p.D * in.w_star - in.flows_star;
  m.lambda = -ren_dot + in.p_ie_dot + p.b() + p.c() * m.demand;
  return m;
}

/// Reconstruction chain: d/dt of Psi_j C eta on the certainty-equivalent
/// manifold is Psi_j C (M + N Psi C) eta, applied twice for the second
/// derivative.
template <typename Real>
ManifoldInputsT<Real> reconstructed_inputs_t(const ModelMatrices<Real>& mm, const MatX<Real>& C,
                                             const VecX<Real>& eta,
                                             const LocalBusViewT<Real>& view) {
  ManifoldInputsT<Real> in;
  in.p_ie = view.p_ie;
  in.p_ie_dot = view.p_ie_dot;
  in.p_ie_ddot = view.p_ie_ddot;
  in.w_star = view.w_star;
  in.flows_star = view.flows_star;
  if (!mm.empty) {
    const RowX<Real> r1 = mm.Psi1 * C;
    const RowX<Real> r2 = mm.Psi2 * C;
    const MatX<Real> G = mm.M + mm.N * (mm.Psi * C);  // N (1xK row) product stays a matrix
    const VecX<Real> Geta = G * eta;
    in.ren_L = (r1 * eta).value();
    in.ren_L_dot = (r1 * Geta).value();
    in.ren_L_ddot = (r1 * (G * Geta)).value();
    in.ren_M = (r2 * eta).value();
    in.ren_M_dot = (r2 * Geta).value();
  }
  return in;
}

/// Coordinate transformation (Solution 1) and control law, generator bus.
/// eta is passed separately so the regular stabilizing baseline can zero it.
template <typename Real>
HatAndInputT<Real> eval_s1_generator_t(const LocalBusViewT<Real>& view,
                                       const ModelMatrices<Real>& mm, const GainSet1& g,
                                       const VecX<Real>& eta) {
  const BusParams& p = view.params;
  const Real x1 = view.delta - view.theta_ref;
  const Real x2 = (view.w - view.w_star) + (g.k1 / kTwoPi) * x1;
  const ManifoldInputsT<Real> in = reconstructed_inputs_t(mm, mm.T_star_inv, eta, view);
  const GenManifoldsT<Real> m = manifolds_s1_generator_t(in, p, view.theta_ref);

  HatAndInputT<Real> out;
  out.xhat.resize(5);
  const Real x3 = view.P_M - m.P_M - g.e_M1 * x1 - g.e_M2 * x2;
  const Real x4 = view.P_v - m.P_v - g.e_v1 * x1 - g.e_v2 * x2 - g.e_v3 * x3;
  const Real x5 = view.P_LE - m.P_LE;
  out.xhat << x1, x2, x3, x4, x5;

  const Real P_ref_hat =
      (g.e_v1 - g.k1 / (kTwoPi * p.R) - p.T_G * g.k1 * g.e_v1) * x1 +
      (g.e_v2 + 1.0 / p.R + kTwoPi * p.T_G * g.e_v1 - p.T_G * g.k2 * g.e_v2) * x2 +
      (g.e_v3 + (p.T_G / p.m) * g.e_v2 - p.T_G * g.k3 * g.e_v3) * x3 +
      (-p.T_G * g.k4 + 1.0 + (p.T_G / p.T_CH) * g.e_v3) * x4;
  const Real lambda_hat = (p.c() + g.k5) * x5;

  out.P_ref = m.P_ref + P_ref_hat;
  out.lambda = m.lambda + lambda_hat;
  return out;
}

template <typename Real>
HatAndInputT<Real> eval_s1_load_t(const LocalBusViewT<Real>& view, const ModelMatrices<Real>& mm,
                                  const GainSet1& g, const VecX<Real>& eta) {
  const BusParams& p = view.params;
  const Real x1 = view.delta - view.theta_ref;
  const Real x2 = (view.w - view.w_star) + (g.k1 / kTwoPi) * x1;
  const ManifoldInputsT<Real> in = reconstructed_inputs_t(mm, mm.T_star_inv, eta, view);
  const LoadManifoldsT<Real> m = manifolds_s1_load_t(in, p, view.theta_ref);

  HatAndInputT<Real> out;
  out.xhat.resize(3);
  // The load-bus transformation vector carries -x3*, hence the plus signs.
  const Real x3 = view.P_LE - m.demand + g.e_M1 * x1 + g.e_M2 * x2;
  out.xhat << x1, x2, x3;

  const Real lambda_hat = -g.e_M1 * (p.c() + g.k1) * x1 +
                          (kTwoPi * g.e_M1 - g.e_M2 * (p.c() + g.k2)) * x2 +
                          (p.c() + g.k3 - g.e_M2 / p.m) * x3;
  out.lambda = m.lambda + lambda_hat;
  return out;
}

/// Solution-2 transformation and control law; the reconstruction source is
/// the estimator matrix in the view (certainty equivalence).
template <typename Real>
HatAndInputT<Real> eval_s2_generator_t(const LocalBusViewT<Real>& view,
                                       const ModelMatrices<Real>& mm, const GainSet2& g) {
  const BusParams& p = view.params;
  const Real x1 = view.delta - view.theta_ref;
  const Real x2 = kTwoPi * (view.w - view.w_star) + g.k1 * x1;
  const ManifoldInputsT<Real> in = reconstructed_inputs_t(mm, view.T_inv, view.eta, view);
  const GenManifoldsT<Real> m = manifolds_s1_generator_t(in, p, view.theta_ref);

  HatAndInputT<Real> out;
  out.xhat.resize(4);
  const Real x4 = view.P_LE - m.P_LE;
  const Real x3 = view.P_M - m.P_M - g.e_M1 * x1 - g.e_M2 * x2 - x4;
  out.xhat << x1, x2, x3, x4;

  const Real P_v_hat = g.e_M1 * (1.0 - p.T_CH * g.k1) * x1 +
                       (p.T_CH * g.e_M1 + (1.0 - p.T_CH * g.k2) * g.e_M2) * x2 +
                       (1.0 + (kTwoPi / p.m) * p.T_CH * g.e_M2 - p.T_CH * g.k3) * x3 +
                       (1.0 - p.T_CH * g.k4) * x4;
  const Real lambda_hat = (p.c() + g.k4) * x4;

  out.P_v = m.P_v + P_v_hat;
  out.lambda = m.lambda + lambda_hat;
  if (!mm.empty) out.J = (kTwoPi / p.m) * view.eta * (x2 - g.e_M2 * x3);
  return out;
}

template <typename Real>
HatAndInputT<Real> eval_s2_load_t(const LocalBusViewT<Real>& view, const ModelMatrices<Real>& mm,
                                  const GainSet2& g) {
  const BusParams& p = view.params;
  const Real x1 = view.delta - view.theta_ref;
  const Real x2 = kTwoPi * (view.w - view.w_star) + g.k1 * x1;
  const ManifoldInputsT<Real> in = reconstructed_inputs_t(mm, view.T_inv, view.eta, view);
  const LoadManifoldsT<Real> m = manifolds_s1_load_t(in, p, view.theta_ref);

  HatAndInputT<Real> out;
  out.xhat.resize(3);
  const Real x3 = view.P_LE - m.demand + g.e_M1 * x1 + g.e_M2 * x2;
  out.xhat << x1, x2, x3;

  const Real lambda_hat = -g.e_M1 * (p.c() + g.k1) * x1 +
                          (g.e_M1 - g.e_M2 * (p.c() + g.k2)) * x2 +
                          (p.c() + g.k3 - g.e_M2 / p.m) * x3;
  out.lambda = m.lambda + lambda_hat;
  if (!mm.empty) out.J = (kTwoPi / p.m) * view.eta * (x2 + g.e_M2 * x3);
  return out;
}

/// Projected estimator row dynamics: t_k' = psi_k (J - (||J|| + gamma)
/// sign_{B/||N||}(psi_k t_k)). The sign threshold is exact in any scalar.
template <typename Real>
MatX<Real> estimator_rhs_t(const MatX<Real>& T_inv, const VecX<Real>& J, const RowX<Real>& Psi,
                           double B_M, double norm_N, double gamma) {
  const int n = static_cast<int>(T_inv.rows());
  MatX<Real> dT = MatX<Real>::Zero(n, n);
  const Real box = Real(B_M) / Real(norm_N);
  const Real J_norm = J.norm();
  for (int k = 0; k < n; ++k) {
    const Real psi_k = Psi(k);
    if (psi_k == Real(0)) continue;
    VecX<Real> proj(n);
    for (int l = 0; l < n; ++l) {
      const Real b = psi_k * T_inv(k, l);
      proj(l) = b >= box ? Real(1) : (b <= -box ? Real(-1) : Real(0));
    }
    dT.row(k) = (psi_k * (J - (J_norm + Real(gamma)) * proj)).transpose();
  }
  return dT;
}

}  // namespace gridreg
