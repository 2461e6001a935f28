#pragma once

#include "gridreg/controller_common.hpp"

namespace gridreg {

/// Fills the derived coefficients of the Solution-1 transformation and the
/// pre-Algorithm-1 e_eta display from the primary gains.
void derive_coefficients_s1(GainSet1& g, const BusParams& p, double stiffness_sum,
                            const InternalModelSpec& spec, BusKind kind);

/// Gains plus the internal model they were designed against.
struct BusDesign1 {
  GainSet1 gains;
  InternalModelSpec spec;
};

/// Builds a Solution-1 design from explicitly supplied gains and (M, N).
BusDesign1 design_bus_s1_explicit(const BusDescriptor& bus, double stiffness_sum,
                                  const ExplicitGains& gains, double delta);

/// Algorithm 1 executed with bus-local data only. M and the controllable
/// direction C default to the reference matrices when not supplied.
BusDesign1 design_bus_s1_algorithm(const BusDescriptor& bus, double stiffness_sum, double delta,
                                   const ExplicitGains* matrix_choice = nullptr);

/// Coordinate transformation and control law, generator bus. The
/// reconstruction source is the spec's T*^-1.
HatAndInput eval_s1_generator(const LocalBusView& view, const InternalModelSpec& spec,
                              const GainSet1& g);
HatAndInput eval_s1_load(const LocalBusView& view, const InternalModelSpec& spec,
                         const GainSet1& g);

/// Regular stabilizing controller: Solution 1 with the internal-model feed
/// zeroed in both the transformation and the feedforward.
HatAndInput eval_baseline_generator(const LocalBusView& view, const InternalModelSpec& spec,
                                    const GainSet1& g);
HatAndInput eval_baseline_load(const LocalBusView& view, const InternalModelSpec& spec,
                               const GainSet1& g);

/// Reference internal-model matrices used when a design does not pin them.
/// Solution 1 uses the fixed 2x2/4x4 pair.
Eigen::MatrixXd default_M_s1(int dim);

/// Solution-2 default: the observer form M = Phi - N Psi with N placing the
/// eigenvalues on a ladder interleaved with the exosystem frequencies. The
/// Sylvester solution is then a multiple of the identity, so T* is perfectly
/// conditioned and the projection box provably contains the true parameters.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> default_observer_pair(const ExosystemSpec& exo);

/// Single-output Ackermann observer gain: eig(Phi - N Psi) = targets.
Eigen::VectorXd ackermann_observer_gain(const Eigen::MatrixXd& Phi,
                                        const Eigen::RowVectorXd& Psi,
                                        const Eigen::VectorXd& targets);

}  // namespace gridreg
