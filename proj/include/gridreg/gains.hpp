#pragma once

#include <Eigen/Dense>

namespace gridreg {

/// Solution-1 control gains with the derived backstepping coefficients. The
/// derived values are fixed by (k, params, internal model); they are stored
/// for inspection and must always match a recomputation.
struct GainSet1 {
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0, k5 = 0.0;
  double delta = 0.0;
  double alpha = 0.0;  // ||N||; equals the Algorithm-1 step-5 scaling when designed

  double e_M1 = 0.0, e_M2 = 0.0;
  double e_v1 = 0.0, e_v2 = 0.0, e_v3 = 0.0;
  Eigen::VectorXd e_eta1, e_eta2, e_eta3;
};

/// Solution-2 gains and the derived x3* coefficients.
struct GainSet2 {
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
  double delta = 0.0;
  double alpha = 0.0;   // ||N||
  double B_M = 0.0;     // projection bound B(M)
  double gamma = 0.1;   // estimator projection constant
  double e_M1 = 0.0, e_M2 = 0.0;
};

}  // namespace gridreg
