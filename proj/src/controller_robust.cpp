#include "gridreg/controller_robust.hpp"

#include <algorithm>

namespace gridreg {

namespace {

double psi_Tinv_N(const InternalModelSpec& spec) {
  if (spec.empty()) return 0.0;
  return spec.Psi() * spec.T_star_inv() * spec.N();
}

double psi_Tinv_norm(const InternalModelSpec& spec) {
  if (spec.empty()) return 0.0;
  return (spec.Psi() * spec.T_star_inv()).norm();
}

Eigen::VectorXd e_eta_vec(int which, const BusParams& p, double stiffness_sum, double k1,
                          const Eigen::MatrixXd& M, const Eigen::VectorXd& N) {
  const int n = static_cast<int>(N.size());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  switch (which) {
    case 1:
      return ((p.m * k1 / kTwoPi) * M + (p.D * k1 / kTwoPi + stiffness_sum) * I) * N;
    case 2:
      return -(p.m * M + p.D * I) * N;
    default:
      return N * stiffness_sum;
  }
}

}  // namespace

void derive_coefficients_s1(GainSet1& g, const BusParams& p, double stiffness_sum,
                            const InternalModelSpec& spec, BusKind kind) {
  const double ptn = psi_Tinv_N(spec);
  g.e_M1 = stiffness_sum - (g.k1 / kTwoPi) * (p.D - p.m * ptn - p.m * g.k1);
  g.e_M2 = p.D - p.m * ptn - p.m * g.k1 - p.m * g.k2;
  if (kind == BusKind::Generator) {
    g.e_v1 = g.e_M1 * (1.0 - p.T_CH * g.k1);
    g.e_v2 = kTwoPi * p.T_CH * g.e_M1 + g.e_M2 - p.T_CH * g.k2 * g.e_M2;
    g.e_v3 = 1.0 + (g.e_M2 / p.m) * p.T_CH - p.T_CH * g.k3;
  } else {
    g.e_v1 = g.e_v2 = g.e_v3 = 0.0;
  }
  if (!spec.empty()) {
    g.e_eta1 = e_eta_vec(1, p, stiffness_sum, g.k1, spec.M(), spec.N());
    g.e_eta2 = e_eta_vec(2, p, stiffness_sum, g.k1, spec.M(), spec.N());
    g.e_eta3 = e_eta_vec(3, p, stiffness_sum, g.k1, spec.M(), spec.N());
  } else {
    g.e_eta1 = g.e_eta2 = g.e_eta3 = Eigen::VectorXd();
  }
}

Eigen::MatrixXd default_M_s1(int dim) {
  if (dim == 0) return Eigen::MatrixXd(0, 0);
  if (dim == 2) {
    Eigen::MatrixXd M(2, 2);
    M << -2.0, 0.0, 11.0, -2.5;
    return M;
  }
  if (dim == 4) {
    Eigen::MatrixXd M(4, 4);
    M << -2.0, 0.0, 0.0, 0.0,  //
        11.0, -2.5, 0.0, 0.0,  //
        4.0, -1.0, -3.0, 0.0,  //
        -6.0, 5.0, 1.0, -3.5;
    return M;
  }
  // Stable lower-triangular continuation of the same eigenvalue ladder.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) M(i, i) = -2.0 - 0.5 * i;
  for (int i = 1; i < dim; ++i) M(i, i - 1) = 1.0;
  return M;
}

Eigen::VectorXd ackermann_observer_gain(const Eigen::MatrixXd& Phi,
                                        const Eigen::RowVectorXd& Psi,
                                        const Eigen::VectorXd& targets) {
  const int n = static_cast<int>(Phi.rows());
  if (Psi.size() != n || targets.size() != n)
    throw ConfigError("ackermann_observer_gain: dimension mismatch");
  // q(Phi) for the desired characteristic polynomial, built as a product of
  // the linear factors.
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) q = q * (Phi - targets(i) * Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd O(n, n);
  Eigen::RowVectorXd row = Psi;
  for (int i = 0; i < n; ++i) {
    O.row(i) = row;
    row = row * Phi;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(O);
  if (!lu.isInvertible())
    throw ConfigError("ackermann_observer_gain: (Psi, Phi) not observable");
  Eigen::VectorXd e_last = Eigen::VectorXd::Zero(n);
  e_last(n - 1) = 1.0;
  return q * lu.solve(e_last);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> default_observer_pair(const ExosystemSpec& exo) {
  // Target ladder interleaved with the oscillator frequencies, with a
  // relative gap so the pair stays controllable from one input direction.
  std::vector<double> mag;
  for (int k = 0; k < exo.ell(); ++k) {
    const double base = exo.rho[k] > 0.0 ? exo.rho[k] : 0.5 * std::max(exo.rho_max, 0.1);
    mag.push_back(base);
    mag.push_back(1.5 * base);
  }
  std::sort(mag.begin(), mag.end());
  for (size_t i = 1; i < mag.size(); ++i) mag[i] = std::max(mag[i], 1.2 * mag[i - 1]);
  Eigen::VectorXd targets(exo.dim());
  for (int i = 0; i < targets.size(); ++i) targets(i) = -mag[i];
  const Eigen::VectorXd N = ackermann_observer_gain(exo.Phi, exo.Psi, targets);
  const Eigen::MatrixXd M = exo.Phi - N * exo.Psi;
  return {M, N};
}

BusDesign1 design_bus_s1_explicit(const BusDescriptor& bus, double stiffness_sum,
                                  const ExplicitGains& gains, double delta) {
  BusDesign1 d;
  const auto& k = bus.kind == BusKind::Generator ? gains.k_generator : gains.k_load;
  const size_t need = bus.kind == BusKind::Generator ? 5 : 3;
  if (k.size() < need)
    throw ConfigError("bus '" + bus.id + "': expected " + std::to_string(need) +
                      " robust gains");
  d.gains.k1 = k[0];
  d.gains.k2 = k[1];
  d.gains.k3 = k[2];
  if (bus.kind == BusKind::Generator) {
    d.gains.k4 = k[3];
    d.gains.k5 = k[4];
  }
  d.gains.delta = delta;
  if (bus.wind) {
    const int dim = bus.wind->dim();
    auto mit = gains.M_by_dim.find(dim);
    auto nit = gains.N_by_dim.find(dim);
    const Eigen::MatrixXd M = mit != gains.M_by_dim.end() ? mit->second : default_M_s1(dim);
    const Eigen::VectorXd N =
        nit != gains.N_by_dim.end() ? nit->second : Eigen::VectorXd::Ones(dim);
    d.spec = InternalModelSpec(*bus.wind, M, N);
    d.gains.alpha = N.norm();
  }
  derive_coefficients_s1(d.gains, bus.params, stiffness_sum, d.spec, bus.kind);
  return d;
}

BusDesign1 design_bus_s1_algorithm(const BusDescriptor& bus, double stiffness_sum, double delta,
                                   const ExplicitGains* matrix_choice) {
  if (!(delta > 0.0)) throw ConfigError("Algorithm 1 requires delta > 0");
  BusDesign1 d;
  GainSet1& g = d.gains;
  const BusParams& p = bus.params;
  g.delta = delta;
  g.k1 = 10.0 * M_PI + delta;

  double psiT = 0.0;
  if (bus.wind) {
    const int dim = bus.wind->dim();
    // Normal (diagonal) M with its spectrum near the exosystem band: keeps
    // the Sylvester solution conditioned, bounds the gain cascade of steps
    // 7-8, and gives the exact transition envelope the small-gain
    // certificate needs.
    const double m_scale = 0.4 * std::max(bus.wind->rho_max, 0.1);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) M(i, i) = -m_scale * (1.0 + 0.5 * i);
    Eigen::VectorXd C = Eigen::VectorXd::Ones(dim);
    if (matrix_choice) {
      auto mit = matrix_choice->M_by_dim.find(dim);
      if (mit != matrix_choice->M_by_dim.end()) M = mit->second;
      auto nit = matrix_choice->N_by_dim.find(dim);
      if (nit != matrix_choice->N_by_dim.end()) C = nit->second;
    }
    const Eigen::VectorXd C_hat = C / C.norm();

    // Step 5: the e_eta norms are evaluated on the unit direction C/||C||,
    // then N = alpha C/||C|| (alpha is not defined before this step).
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int which : {1, 2, 3}) {
      const double nrm = e_eta_vec(which, p, stiffness_sum, g.k1, M, C_hat).norm();
      if (nrm > 0.0) min_ratio = std::min(min_ratio, 0.2 / nrm);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> eig(M);
    const double lmax = eig.eigenvalues().real().maxCoeff();
    g.alpha = (-lmax / (1.0 + delta)) * min_ratio;
    const Eigen::VectorXd N = g.alpha * C_hat;
    d.spec = InternalModelSpec(*bus.wind, M, N);
    psiT = psi_Tinv_norm(d.spec);
  }

  g.k2 = (5.0 / p.m) * std::max({stiffness_sum, 1.0, psiT}) + delta;
  // e_M2 needs k1, k2 only.
  const double e_M2 = p.D - p.m * psi_Tinv_N(d.spec) - p.m * g.k1 - p.m * g.k2;
  const double a = std::abs(e_M2);
  double k3_max = std::max({a * stiffness_sum / p.m, a / p.m, a * psiT / p.m});
  if (bus.kind == BusKind::Generator) k3_max = std::max(k3_max, 1.0 / p.T_CH);
  g.k3 = 5.0 * k3_max + delta;

  if (bus.kind == BusKind::Generator) {
    const double e_M1 =
        stiffness_sum - (g.k1 / kTwoPi) * (p.D - p.m * psi_Tinv_N(d.spec) - p.m * g.k1);
    const double e_v2 = kTwoPi * p.T_CH * e_M1 + e_M2 - p.T_CH * g.k2 * e_M2;
    const double e_v3 = 1.0 + (e_M2 / p.m) * p.T_CH - p.T_CH * g.k3;
    const double q = std::abs((e_v2 - e_M2 * e_v3) / p.m);
    g.k4 = 5.0 * std::max(q * (1.0 + stiffness_sum), q * psiT) + delta;
    // The paper leaves k5 as any positive constant, but the demand hat
    // dynamics reduce to x5' = -(k5 + r2 N) x5 + r2 N (e_M1 x1 + e_M2 x2 +
    // x3) with r2 = Psi2 T*^-1; generators with medium-band wind need k5 to
    // dominate that row. Same 5x margin pattern as steps 7-8.
    double psi2TN = 0.0;
    if (!d.spec.empty())
      psi2TN = std::abs(double(d.spec.Psi2() * d.spec.T_star_inv() * d.spec.N()));
    g.k5 = 5.0 * psi2TN * (1.0 + std::abs(e_M1) + std::abs(e_M2)) + delta;
  }

  derive_coefficients_s1(g, p, stiffness_sum, d.spec, bus.kind);
  return d;
}

HatAndInput eval_s1_generator(const LocalBusView& view, const InternalModelSpec& spec,
                              const GainSet1& g) {
  return eval_s1_generator_t<double>(view, ModelMatrices<double>::from(spec), g, view.eta);
}

HatAndInput eval_s1_load(const LocalBusView& view, const InternalModelSpec& spec,
                         const GainSet1& g) {
  return eval_s1_load_t<double>(view, ModelMatrices<double>::from(spec), g, view.eta);
}

HatAndInput eval_baseline_generator(const LocalBusView& view, const InternalModelSpec& spec,
                                    const GainSet1& g) {
  return eval_s1_generator_t<double>(view, ModelMatrices<double>::from(spec), g,
                                     Eigen::VectorXd::Zero(spec.dim()));
}

HatAndInput eval_baseline_load(const LocalBusView& view, const InternalModelSpec& spec,
                               const GainSet1& g) {
  return eval_s1_load_t<double>(view, ModelMatrices<double>::from(spec), g,
                                Eigen::VectorXd::Zero(spec.dim()));
}

}  // namespace gridreg
