#include "gridreg/controller_common.hpp"

namespace gridreg {

ManifoldInputs reconstructed_inputs(const InternalModelSpec& spec, const Eigen::MatrixXd& C,
                                    const Eigen::VectorXd& eta, const LocalBusView& view) {
  return reconstructed_inputs_t<double>(ModelMatrices<double>::from(spec), C, eta, view);
}

ManifoldInputs true_inputs(const ExosystemSpec& exo, const Eigen::VectorXd& chi,
                           const LocalBusView& view) {
  ManifoldInputs in;
  in.p_ie = view.p_ie;
  in.p_ie_dot = view.p_ie_dot;
  in.p_ie_ddot = view.p_ie_ddot;
  in.w_star = view.w_star;
  in.flows_star = view.flows_star;
  auto [Psi1, Psi2] = split_psi(exo.Psi, exo.ell_low, exo.ell_med);
  const Eigen::VectorXd chid = exo.Phi * chi;
  in.ren_L = Psi1 * chi;
  in.ren_L_dot = Psi1 * chid;
  in.ren_L_ddot = Psi1 * (exo.Phi * chid);
  in.ren_M = Psi2 * chi;
  in.ren_M_dot = Psi2 * chid;
  return in;
}

}  // namespace gridreg
