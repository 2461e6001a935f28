#pragma once

#include <memory>
#include <vector>

#include "gridreg/controller_adaptive.hpp"
#include "gridreg/controller_robust.hpp"
#include "gridreg/dynamics.hpp"
#include "gridreg/scenario_io.hpp"

namespace gridreg {

/// Offsets of one bus inside the flat simulation state and the hat vector.
struct BusBlock {
  int phys_offset = 0;
  int n_phys = 0;      // 5 (4th-order gen), 4 (3rd-order gen), 3 (load), 2 (passive)
  int eta_offset = -1;
  int eta_dim = 0;
  int chi_offset = -1;
  int chi_dim = 0;
  int tinv_offset = -1;  // adaptive estimator, row-major
  int bess_offset = -1;  // high-frequency synthesis filter state
  int hat_offset = 0;
  int hat_dim = 0;
};

struct HurwitzResult {
  bool hurwitz = false;
  double max_real_part = 0.0;
};

/// max Re eig(A) < -margin, via the dense eigenvalue solver. Solver failure
/// is an error, never a silent false.
HurwitzResult is_hurwitz(const Eigen::MatrixXd& A, double margin = 1e-9);

struct NegdefResult {
  bool negative_definite = false;
  double max_eig = 0.0;
};

/// max eig < -margin for a symmetric matrix (asymmetry above 1e-12 relative
/// is an error).
NegdefResult check_negdef(const Eigen::MatrixXd& A_plus_At, double margin = 1e-9);

struct ScaledNegdefResult {
  bool negative_definite = false;
  double max_eig = 0.0;     // of sym(D^-1 A D) at the returned scaling
  Eigen::VectorXd scaling;  // diagonal entries of D
};

/// Diagonal Lyapunov certificate: deterministic descent over positive
/// diagonal metrics D searching for sym(D^-1 A D) < 0. Succeeding means
/// A + A^T is Hurwitz in the rescaled hat coordinates, i.e. V = ||D^-1 x||^2
/// decreases along the linear dynamics.
ScaledNegdefResult scaled_negdef(const Eigen::MatrixXd& A, double margin = 1e-9,
                                 int max_iters = 400);

/// The closed-loop network for one scenario and controller selection:
/// state layout, vector field, hat-coordinate maps, and the probed network
/// matrix A of Theorems 1 and 2.
class ClosedLoop {
 public:
  enum class GainSource { PreferScenario, ForceAlgorithm };

  ClosedLoop(Scenario scenario, ControllerKind mode,
             GainSource source = GainSource::PreferScenario);
  ~ClosedLoop();
  ClosedLoop(ClosedLoop&&) = delete;
  ClosedLoop& operator=(ClosedLoop&&) = delete;

  const Scenario& scenario() const { return scenario_; }
  ControllerKind mode() const { return mode_; }
  int state_dim() const { return state_dim_; }
  int hat_dim() const { return hat_dim_; }
  const std::vector<BusBlock>& blocks() const { return blocks_; }
  const BusDesign1& design1(int bus) const { return designs1_.at(bus); }
  const BusDesign2& design2(int bus) const { return designs2_.at(bus); }
  const InternalModelSpec& spec(int bus) const;

  /// Closed-loop vector field over the full simulation state.
  Eigen::VectorXd rhs(double t, const Eigen::VectorXd& y) const;

  /// One RK4 step plus the estimator box clamp; returns the largest clamp
  /// correction (0 outside adaptive runs).
  double step(double t, double dt, Eigen::VectorXd& y) const;

  /// Flat start: phases at theta**, frequencies at w*, powers and internal
  /// models at zero, estimator at zero, exosystems at chi0.
  Eigen::VectorXd initial_state_flat() const;

  /// State placed exactly on the manifolds at time t0 (eta = T* chi,
  /// estimator at T*^-1). Requires wind active at t0 wherever wind exists.
  Eigen::VectorXd initial_state_on_manifold(double t0 = 0.0) const;

  /// Analysis-side hat state: controller backstepping states plus the
  /// internal-model error eta - T* chi - x_eta*(x1, x2).
  Eigen::VectorXd hat_state(double t, const Eigen::VectorXd& y) const;

  /// Control inputs per bus, for recording. Entries: P_ref or P_v, lambda.
  struct BusInputs {
    double primary = 0.0;
    double lambda = 0.0;
  };
  std::vector<BusInputs> control_inputs(double t, const Eigen::VectorXd& y) const;

  /// Hat-coordinate vector field with chi = 0 and the estimator frozen at
  /// T*^-1 (exact certainty equivalence). Linear time-invariant when the
  /// closed-loop construction is correct.
  Eigen::VectorXd hat_rhs_frozen(double t, const Eigen::VectorXd& xhat) const;

  /// Probes hat_rhs_frozen with basis vectors and verifies superposition
  /// (residual above 1e-8 relative is an internal consistency failure).
  Eigen::MatrixXd assemble_A(double t = 0.0) const;

  /// Hat indices belonging to controlled (generator/load) buses.
  std::vector<int> controlled_hat_indices() const;

  /// Controlled-bus subsystem of A in certificate coordinates: the
  /// internal-model error block of each bus is graded by powers of
  /// eta_grading (a diagonal Lyapunov rescaling; eigenvalue checks of A
  /// itself are unaffected by it).
  Eigen::MatrixXd assemble_A_controlled(double eta_grading = 1.0, double t = 0.0) const;

  /// Renewable power injected at the bus at time t (event-gated).
  double wind_injection(int bus, double t, const Eigen::VectorXd& y) const;

  /// Largest controller coefficient magnitude; decides probing precision.
  double coefficient_scale() const;

  /// Raw state reconstructed from a hat vector at chi = 0 (probing support,
  /// exposed for tests). Uses the frozen estimator without box projection.
  Eigen::VectorXd raw_from_hat(double t, const Eigen::VectorXd& xhat) const;

 private:
  template <typename Real>
  class Engine;
  struct EngineHolder;

  Scenario scenario_;
  ControllerKind mode_;
  GainSource source_ = GainSource::PreferScenario;
  std::vector<BusBlock> blocks_;
  std::vector<BusDesign1> designs1_;
  std::vector<BusDesign2> designs2_;
  std::vector<int> owner_of_index_;
  int state_dim_ = 0;
  int hat_dim_ = 0;
  std::unique_ptr<EngineHolder> engine_;
};

}  // namespace gridreg
