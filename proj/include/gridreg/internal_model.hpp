#pragma once

#include <Eigen/Dense>

#include "gridreg/model.hpp"

namespace gridreg {

/// Unique solution T of T Phi - M T = N Psi, via the Kronecker-vectorized
/// dense linear system. Requires disjoint spectra (M Hurwitz, Phi marginally
/// stable); throws ConfigError when the system is singular.
Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& M,
                                const Eigen::VectorXd& N, const Eigen::RowVectorXd& Psi);

/// Rank test of the observability matrix via singular values
/// (tolerance 1e-10 relative to the largest).
bool check_observability(const Eigen::RowVectorXd& Psi, const Eigen::MatrixXd& Phi);

/// Splits Psi into its low-band row (medium entries zeroed) and medium-band
/// row (low entries zeroed); Psi1 + Psi2 = Psi.
std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> split_psi(const Eigen::RowVectorXd& Psi,
                                                            int ell_low, int ell_med);

/// Per-bus internal model: Hurwitz pair (M, N), Sylvester solution and its
/// inverse, and the split output rows. Immutable once built.
class InternalModelSpec {
 public:
  InternalModelSpec() = default;  // empty model for buses without wind

  /// Builds and validates the spec; T*^-1 is computed once with a condition
  /// number guard (> 1e12 reported as an observability failure).
  InternalModelSpec(const ExosystemSpec& exo, Eigen::MatrixXd M, Eigen::VectorXd N);

  int dim() const { return static_cast<int>(M_.rows()); }
  bool empty() const { return dim() == 0; }

  const Eigen::MatrixXd& M() const { return M_; }
  const Eigen::VectorXd& N() const { return N_; }
  const Eigen::RowVectorXd& Psi() const { return Psi_; }
  const Eigen::RowVectorXd& Psi1() const { return Psi1_; }
  const Eigen::RowVectorXd& Psi2() const { return Psi2_; }
  const Eigen::MatrixXd& T_star() const { return T_star_; }
  const Eigen::MatrixXd& T_star_inv() const { return T_star_inv_; }
  double sylvester_residual() const { return residual_; }
  double condition_number() const { return cond_; }
  double max_re_eig_M() const { return max_re_eig_M_; }

  /// Internal-model dynamics eta' = M eta + N drive. The drive is the
  /// bus-kind-specific measurable combination.
  Eigen::VectorXd rhs(const Eigen::VectorXd& eta, double drive) const {
    return M_ * eta + N_ * drive;
  }

  enum class Band { Low, Medium, Both };

  /// Psi_j T*^-1 eta: reconstructed wind power for the requested band.
  double reconstruct_ren(const Eigen::VectorXd& eta, Band which) const;

 private:
  Eigen::MatrixXd M_;
  Eigen::VectorXd N_;
  Eigen::RowVectorXd Psi_, Psi1_, Psi2_;
  Eigen::MatrixXd T_star_, T_star_inv_;
  double residual_ = 0.0;
  double cond_ = 0.0;
  double max_re_eig_M_ = 0.0;
};

}  // namespace gridreg
