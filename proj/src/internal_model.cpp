#include "gridreg/internal_model.hpp"

#include <unsupported/Eigen/KroneckerProduct>

namespace gridreg {

Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& M,
                                const Eigen::VectorXd& N, const Eigen::RowVectorXd& Psi) {
  const int n = static_cast<int>(Phi.rows());
  if (M.rows() != n || M.cols() != n || N.size() != n || Psi.size() != n)
    throw ConfigError("solve_sylvester: dimension mismatch");
  if (n == 0) return Eigen::MatrixXd(0, 0);

  // vec(T Phi - M T) = (Phi^T (x) I - I (x) M) vec(T)
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd K = Eigen::kroneckerProduct(Phi.transpose(), I) - Eigen::kroneckerProduct(I, M);
  const Eigen::MatrixXd NPsi = N * Psi;
  const Eigen::Map<const Eigen::VectorXd> rhs(NPsi.data(), n * n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible())
    throw ConfigError("solve_sylvester: singular system (spectra of M and Phi overlap)");
  const Eigen::VectorXd vec_t = lu.solve(rhs);
  return Eigen::Map<const Eigen::MatrixXd>(vec_t.data(), n, n);
}

bool check_observability(const Eigen::RowVectorXd& Psi, const Eigen::MatrixXd& Phi) {
  const int n = static_cast<int>(Phi.rows());
  if (Psi.size() != n) throw ConfigError("check_observability: dimension mismatch");
  if (n == 0) return true;
  Eigen::MatrixXd O(n, n);
  Eigen::RowVectorXd row = Psi;
  for (int i = 0; i < n; ++i) {
    O.row(i) = row;
    row = row * Phi;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(O);
  const auto& sv = svd.singularValues();
  return sv(0) > 0.0 && sv(sv.size() - 1) > 1e-10 * sv(0);
}

std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> split_psi(const Eigen::RowVectorXd& Psi,
                                                            int ell_low, int ell_med) {
  if (Psi.size() != 2 * (ell_low + ell_med)) throw ConfigError("split_psi: length mismatch");
  Eigen::RowVectorXd Psi1 = Eigen::RowVectorXd::Zero(Psi.size());
  Eigen::RowVectorXd Psi2 = Eigen::RowVectorXd::Zero(Psi.size());
  Psi1.head(2 * ell_low) = Psi.head(2 * ell_low);
  Psi2.tail(2 * ell_med) = Psi.tail(2 * ell_med);
  return {Psi1, Psi2};
}

InternalModelSpec::InternalModelSpec(const ExosystemSpec& exo, Eigen::MatrixXd M,
                                     Eigen::VectorXd N)
    : M_(std::move(M)), N_(std::move(N)) {
  const int n = exo.dim();
  if (M_.rows() != n || M_.cols() != n || N_.size() != n)
    throw ConfigError("internal model: (M, N) dimension does not match exosystem");
  if (n == 0) return;

  Eigen::EigenSolver<Eigen::MatrixXd> eig(M_);
  if (eig.info() != Eigen::Success) throw ConfigError("internal model: eigen solver failed on M");
  max_re_eig_M_ = eig.eigenvalues().real().maxCoeff();
  if (max_re_eig_M_ >= 0.0) throw ConfigError("internal model: M is not Hurwitz");

  // Controllability of (M, N).
  Eigen::MatrixXd C(n, n);
  Eigen::VectorXd col = N_;
  for (int i = 0; i < n; ++i) {
    C.col(i) = col;
    col = M_ * col;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_c(C);
  if (svd_c.singularValues()(n - 1) <= 1e-10 * svd_c.singularValues()(0))
    throw ConfigError("internal model: (M, N) pair is not controllable");

  Psi_ = exo.Psi;
  std::tie(Psi1_, Psi2_) = split_psi(Psi_, exo.ell_low, exo.ell_med);

  T_star_ = solve_sylvester(exo.Phi, M_, N_, Psi_);
  residual_ = (T_star_ * exo.Phi - M_ * T_star_ - N_ * Psi_).norm();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_t(T_star_);
  const auto& sv = svd_t.singularValues();
  cond_ = sv(n - 1) > 0.0 ? sv(0) / sv(n - 1) : std::numeric_limits<double>::infinity();
  if (!(cond_ < 1e12))
    throw ConfigError("internal model: T* numerically singular (observability failure)");
  T_star_inv_ = T_star_.inverse();
}

double InternalModelSpec::reconstruct_ren(const Eigen::VectorXd& eta, Band which) const {
  if (empty()) return 0.0;
  switch (which) {
    case Band::Low: return Psi1_ * T_star_inv_ * eta;
    case Band::Medium: return Psi2_ * T_star_inv_ * eta;
    case Band::Both: return Psi_ * T_star_inv_ * eta;
  }
  return 0.0;
}

}  // namespace gridreg
