#pragma once

#include "gridreg/controller_eval.hpp"

namespace gridreg {

/// Everything a local control authority may see: its own state, its own
/// internal model, static line constants, and local signals. Controllers take
/// this view and nothing else, which is what enforces the locality contract.
using LocalBusView = LocalBusViewT<double>;

/// Wind-signal values feeding the manifold formulas, either reconstructed
/// from an internal model state or evaluated from the true exosystem state.
using ManifoldInputs = ManifoldInputsT<double>;

/// Generator-bus manifolds. theta is expressed in the rotating frame, where
/// the target phase is the constant theta**.
using GenManifolds = GenManifoldsT<double>;

/// Load-bus manifolds; demand is the target for the elastic demand state.
using LoadManifolds = LoadManifoldsT<double>;

/// Controller-side hat state plus the local control inputs.
using HatAndInput = HatAndInputT<double>;

inline GenManifolds manifolds_s1_generator(const ManifoldInputs& in, const BusParams& p,
                                           double theta_ref) {
  return manifolds_s1_generator_t<double>(in, p, theta_ref);
}

inline LoadManifolds manifolds_s1_load(const ManifoldInputs& in, const BusParams& p,
                                       double theta_ref) {
  return manifolds_s1_load_t<double>(in, p, theta_ref);
}

/// Certainty-equivalent manifold inputs from an internal-model state through
/// the reconstruction matrix C (T*^-1 for Solution 1, the estimator for
/// Solution 2).
ManifoldInputs reconstructed_inputs(const InternalModelSpec& spec, const Eigen::MatrixXd& C,
                                    const Eigen::VectorXd& eta, const LocalBusView& view);

/// Manifold inputs from the true exosystem state (test oracles and
/// manifold-exact initialization).
ManifoldInputs true_inputs(const ExosystemSpec& exo, const Eigen::VectorXd& chi,
                           const LocalBusView& view);

}  // namespace gridreg
