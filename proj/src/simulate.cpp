#include "gridreg/simulate.hpp"

#include <cstdio>
#include <fstream>

#include "gridreg/fit.hpp"

namespace gridreg {

RunRecord run(const ClosedLoop& loop, const RunOptions& opts) {
  const Scenario& sc = loop.scenario();
  const double dt = opts.dt_override.value_or(sc.integrator.dt);
  const double t_end = opts.t_end_override.value_or(sc.integrator.t_end);
  const long steps = std::lround(t_end / dt);
  const int every = std::max(1, opts.record_every);

  const auto& topo = sc.topology;
  RunRecord rec;
  rec.controller = loop.mode();
  rec.fourth_order = loop.mode() != ControllerKind::Adaptive;
  for (const auto& b : topo.buses()) {
    rec.bus_ids.push_back(b.id);
    rec.bus_kinds.push_back(b.kind);
  }

  Eigen::VectorXd y = opts.start_on_manifold ? loop.initial_state_on_manifold()
                                             : loop.initial_state_flat();

  auto record_sample = [&](double t) {
    rec.time.push_back(t);
    const int n = topo.bus_count();
    std::vector<double> w(n), th(n), pm(n, 0.0), pv(n, 0.0), ple(n, 0.0);
    const auto inputs = loop.control_inputs(t, y);
    std::vector<double> uin(n, 0.0), ulam(n, 0.0);
    int active = 0;
    for (int i = 0; i < n; ++i) {
      const auto& blk = loop.blocks()[i];
      const auto& b = topo.bus(i);
      th[i] = y(blk.phys_offset) - b.theta_star;
      w[i] = y(blk.phys_offset + 1);
      if (b.kind == BusKind::Generator) {
        pm[i] = y(blk.phys_offset + 2);
        if (blk.n_phys == 5) pv[i] = y(blk.phys_offset + 3);
        ple[i] = y(blk.phys_offset + blk.n_phys - 1);
      } else if (b.kind == BusKind::Load) {
        ple[i] = y(blk.phys_offset + 2);
      }
      uin[i] = inputs[i].primary;
      ulam[i] = inputs[i].lambda;
      if (b.wind && sc.wind_active(i, t)) ++active;
    }
    rec.w.push_back(std::move(w));
    rec.theta_dev.push_back(std::move(th));
    rec.P_M.push_back(std::move(pm));
    rec.P_v.push_back(std::move(pv));
    rec.P_LE.push_back(std::move(ple));
    rec.input_primary.push_back(std::move(uin));
    rec.input_lambda.push_back(std::move(ulam));
    rec.xhat_norm.push_back(loop.hat_state(t, y).norm());
    rec.wind_active_count.push_back(active);
  };

  record_sample(0.0);
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double clamp = loop.step(t, dt, y);
    rec.max_estimator_box_violation = std::max(rec.max_estimator_box_violation, clamp);
    if ((k + 1) % every == 0) record_sample(static_cast<double>(k + 1) * dt);
  }
  return rec;
}

RunRecord run(const Scenario& scenario, ControllerKind controller, const RunOptions& opts) {
  ClosedLoop loop(scenario, controller);
  return run(loop, opts);
}

CompareResult compare(const Scenario& scenario, double window_begin, double window_end) {
  CompareResult out;
  out.window_begin = window_begin;
  out.window_end = window_end;
  out.with_internal_model = run(scenario, ControllerKind::Robust);
  out.baseline = run(scenario, ControllerKind::Baseline);

  auto window_rms = [&](const RunRecord& rec) {
    std::vector<double> dev;
    for (int s = 0; s < rec.samples(); ++s) {
      if (rec.time[s] < window_begin || rec.time[s] > window_end) continue;
      for (double wi : rec.w[s]) dev.push_back(wi - scenario.setpoint_hz);
    }
    return rms(dev);
  };
  out.rms_internal_model = window_rms(out.with_internal_model);
  out.rms_baseline = window_rms(out.baseline);
  out.ratio = out.rms_baseline > 0.0 ? out.rms_internal_model / out.rms_baseline
                                     : (out.rms_internal_model > 0.0 ? 1.0 : 1.0);
  return out;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  out += buf;
}

}  // namespace

std::string csv_string(const RunRecord& rec, int decimate) {
  if (decimate < 1) decimate = 1;
  std::string out;
  out += "t";
  const int n = static_cast<int>(rec.bus_ids.size());
  for (int i = 0; i < n; ++i) {
    const std::string& id = rec.bus_ids[i];
    out += ",bus" + id + "_w,bus" + id + "_theta_dev";
    if (rec.bus_kinds[i] == BusKind::Generator) {
      out += ",bus" + id + "_P_M";
      if (rec.fourth_order) out += ",bus" + id + "_P_v";
      out += ",bus" + id + "_P_LE";
      out += ",bus" + id + (rec.controller == ControllerKind::Adaptive ? "_P_v_cmd" : "_P_ref");
      out += ",bus" + id + "_lambda";
    } else if (rec.bus_kinds[i] == BusKind::Load) {
      out += ",bus" + id + "_P_LE,bus" + id + "_lambda";
    }
  }
  out += ",xhat_norm,wind_active\n";

  for (int s = 0; s < rec.samples(); s += decimate) {
    append_number(out, rec.time[s]);
    for (int i = 0; i < n; ++i) {
      out += ',';
      append_number(out, rec.w[s][i]);
      out += ',';
      append_number(out, rec.theta_dev[s][i]);
      if (rec.bus_kinds[i] == BusKind::Generator) {
        out += ',';
        append_number(out, rec.P_M[s][i]);
        if (rec.fourth_order) {
          out += ',';
          append_number(out, rec.P_v[s][i]);
        }
        out += ',';
        append_number(out, rec.P_LE[s][i]);
        out += ',';
        append_number(out, rec.input_primary[s][i]);
        out += ',';
        append_number(out, rec.input_lambda[s][i]);
      } else if (rec.bus_kinds[i] == BusKind::Load) {
        out += ',';
        append_number(out, rec.P_LE[s][i]);
        out += ',';
        append_number(out, rec.input_lambda[s][i]);
      }
    }
    out += ',';
    append_number(out, rec.xhat_norm[s]);
    out += ',';
    append_number(out, static_cast<double>(rec.wind_active_count[s]));
    out += '\n';
  }
  return out;
}

void export_csv(const RunRecord& record, const std::string& path, int decimate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << csv_string(record, decimate);
  if (!f) throw std::runtime_error("write failure on '" + path + "'");
}

}  // namespace gridreg
