#include "gridreg/fit.hpp"

#include <complex>
#include <stdexcept>

namespace gridreg {

ExpFit fit_exponential(const std::vector<double>& t, const std::vector<double>& y,
                       double relative_floor, double absolute_floor) {
  if (t.size() != y.size()) throw std::invalid_argument("fit_exponential: size mismatch");
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, v);
  const double floor = std::max(relative_floor * peak, absolute_floor);

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  int n = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > floor)) continue;
    const double ly = std::log(y[i]);
    sx += t[i];
    sy += ly;
    sxx += t[i] * t[i];
    sxy += t[i] * ly;
    syy += ly * ly;
    ++n;
  }
  ExpFit fit;
  fit.samples_used = n;
  if (n < 3) return fit;
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return fit;
  const double slope = (n * sxy - sx * sy) / denom;
  fit.rate = -slope;
  fit.log_intercept = (sy - slope * sx) / n;

  const double mean_y = sy / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > floor)) continue;
    const double ly = std::log(y[i]);
    const double pred = fit.log_intercept + slope * t[i];
    ss_res += (ly - pred) * (ly - pred);
    ss_tot += (ly - mean_y) * (ly - mean_y);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

double rms(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s / static_cast<double>(values.size()));
}

double dft_amplitude(const std::vector<double>& y, double dt, double omega) {
  std::complex<double> acc(0.0, 0.0);
  for (size_t k = 0; k < y.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    acc += y[k] * std::exp(std::complex<double>(0.0, -omega * t));
  }
  return 2.0 * std::abs(acc) / static_cast<double>(y.size());
}

}  // namespace gridreg
