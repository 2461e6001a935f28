#pragma once

#include <string>
#include <vector>

#include "gridreg/closed_loop.hpp"

namespace gridreg {

/// Decimated closed-loop trajectory: one row per recorded sample.
struct RunRecord {
  ControllerKind controller = ControllerKind::Robust;
  std::vector<std::string> bus_ids;
  std::vector<BusKind> bus_kinds;
  bool fourth_order = true;  // generators carry a P_v column

  std::vector<double> time;
  // Per sample, per bus: w, theta deviation, and where applicable P_M, P_v,
  // P_L^E and the control inputs.
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> theta_dev;
  std::vector<std::vector<double>> P_M;
  std::vector<std::vector<double>> P_v;
  std::vector<std::vector<double>> P_LE;
  std::vector<std::vector<double>> input_primary;  // P_ref (robust) or P_v (adaptive)
  std::vector<std::vector<double>> input_lambda;
  std::vector<double> xhat_norm;
  std::vector<int> wind_active_count;  // event marker
  double max_estimator_box_violation = 0.0;  // adaptive runs

  int samples() const { return static_cast<int>(time.size()); }
};

struct RunOptions {
  int record_every = 100;    // steps between samples (0.1 s at dt = 1e-3)
  bool start_on_manifold = false;
  std::optional<double> dt_override;
  std::optional<double> t_end_override;
};

/// Simulates the scenario under the selected controller. Deterministic:
/// identical inputs give identical records. Integration blow-ups surface as
/// IntegrationError with bus and time context.
RunRecord run(const Scenario& scenario, ControllerKind controller,
              const RunOptions& opts = {});
RunRecord run(const ClosedLoop& loop, const RunOptions& opts = {});

struct CompareResult {
  RunRecord with_internal_model;
  RunRecord baseline;
  double rms_internal_model = 0.0;  // frequency deviation RMS over the window
  double rms_baseline = 0.0;
  double ratio = 0.0;
  double window_begin = 0.0;
  double window_end = 0.0;
};

/// Runs the robust and baseline controllers on identical inputs and reports
/// post-transient frequency-deviation RMS for each. The window defaults to
/// [60, 110] s, inside the wind-connected interval of the reference setup.
CompareResult compare(const Scenario& scenario, double window_begin = 60.0,
                      double window_end = 110.0);

/// Writes the record as CSV: header row, then one row per sample (optionally
/// further decimated); 9 significant digits, deterministic bytes.
void export_csv(const RunRecord& record, const std::string& path, int decimate = 1);
std::string csv_string(const RunRecord& record, int decimate = 1);

}  // namespace gridreg
