#pragma once

#include <cmath>
#include <vector>

namespace gridreg {

struct ExpFit {
  double rate = 0.0;       // sigma in y ~ C exp(-sigma t)
  double log_intercept = 0.0;
  double r_squared = 0.0;
  int samples_used = 0;
};

/// Least-squares fit of log y against t. Samples at or below the floor are
/// excluded (they sit in integrator round-off, not on the decay); the floor
/// is relative to the largest sample in the window.
ExpFit fit_exponential(const std::vector<double>& t, const std::vector<double>& y,
                       double relative_floor = 1e-11, double absolute_floor = 0.0);

/// Root-mean-square of a sample set.
double rms(const std::vector<double>& values);

/// Single-frequency discrete Fourier amplitude of a uniformly sampled signal:
/// 2/N |sum y_k exp(-i w t_k)|. Used to measure steady-state sinusoid gains.
double dft_amplitude(const std::vector<double>& y, double dt, double omega);

}  // namespace gridreg
