#pragma once

#include "gridreg/controller_common.hpp"

namespace gridreg {

/// Component-wise thresholded sign: 1 where b_i >= alpha, 0 where |b_i| <
/// alpha, -1 where b_i <= -alpha (the three cases partition the line).
Eigen::VectorXd sign_alpha(double alpha, const Eigen::VectorXd& B);

/// Projection bound B(M) = (rho_max^2 + 1) l + ||M||_F.
double bound_B(const Eigen::MatrixXd& M, int ell, double rho_max);

void derive_coefficients_s2(GainSet2& g, const BusParams& p, double stiffness_sum);

struct BusDesign2 {
  GainSet2 gains;
  InternalModelSpec spec;
  double rho_max = 0.0;
};

BusDesign2 design_bus_s2_explicit(const BusDescriptor& bus, double stiffness_sum,
                                  const ExplicitGains& gains, double delta, double gamma);

/// Algorithm 2, bus-local except for the neighbor (t_ij, m_j) pairs that its
/// step 3 takes verbatim.
BusDesign2 design_bus_s2_algorithm(const BusDescriptor& bus,
                                   const std::vector<std::pair<double, double>>& neighbor_t_m,
                                   double delta, double gamma,
                                   const ExplicitGains* matrix_choice = nullptr);

/// Row dynamics of the projected estimator: for each row k,
/// t_k' = psi_k (J - (||J|| + gamma) sign_{B/||N||}(psi_k t_k)).
Eigen::MatrixXd estimator_rhs(const Eigen::MatrixXd& T_inv, const Eigen::VectorXd& J,
                              const Eigen::RowVectorXd& Psi, double B_M, double norm_N,
                              double gamma);

/// Clamps |psi_k t_kl| to B/||N|| to kill RK4 overshoot across the projection
/// boundary. Returns the largest correction applied.
double clamp_to_box(Eigen::MatrixXd& T_inv, const Eigen::RowVectorXd& Psi, double B_M,
                    double norm_N);

HatAndInput eval_s2_generator(const LocalBusView& view, const InternalModelSpec& spec,
                              const GainSet2& g);
HatAndInput eval_s2_load(const LocalBusView& view, const InternalModelSpec& spec,
                         const GainSet2& g);

}  // namespace gridreg
