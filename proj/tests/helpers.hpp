#pragma once

#include <random>
#include <string>

#include "gridreg/scenario_io.hpp"

namespace gridreg::testing {

inline std::string data_path(const std::string& name) {
  return std::string(GRIDREG_DATA_DIR) + "/" + name;
}

inline Scenario single_generator_scenario(std::vector<double> k_gen = {5, 10, 15, 35, 3},
                                          bool wind = true) {
  std::string wind_part = wind ? R"("wind": {"low": [{"rho": 0.1, "psi": [10, 0],
        "chi0": [0, 3]}], "rho_max": 0.2},)"
                               : "";
  std::string j = R"({
    "setpoint_hz": 60.0, "bess_time_constant": 1.0, "delta": 0.1,
    "controller": "robust", "integrator": {"dt": 1e-3, "t_end": 20.0},
    "buses": [{"id": "G1", "kind": "G",
      "params": {"m": 10, "D": 1, "T_CH": 0.3, "T_G": 0.2, "R": 0.05,
                 "tau": 150, "b_prime": 40, "c_prime": -0.8},
      "theta_star": 0.0, )" +
                  wind_part + R"(
      "inelastic_demand": {"constant": 100,
        "sinusoids": [{"amplitude": 50, "frequency_rad": 0.01, "phase": 0}]}}],
    "edges": [],
    "events": [)" + (wind ? R"({"time_s": 0.0, "bus": "G1", "action": "wind_connect"})" : "") +
                  R"(]
  })";
  auto sc = parse_scenario(j);
  ExplicitGains g;
  g.k_generator = std::move(k_gen);
  sc.robust_gains = g;
  ExplicitGains a;
  a.k_generator = {15, 20, 40, 3};
  sc.adaptive_gains = a;
  return sc;
}

/// Random connected network of at most max_buses buses with the passive-bus
/// condition D > sum t_ij enforced; Kundur-flavored parameter ranges and
/// exosystem bands matching the reference experiments.
inline Scenario random_scenario(std::mt19937_64& rng, int max_buses = 12) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> nbus(2, max_buses);
  const int n = nbus(rng);
  std::vector<BusDescriptor> buses(n);
  std::vector<Edge> edges;
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    edges.push_back({parent(rng), i, 1.5});
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      bool have = false;
      for (auto& e : edges)
        have |= (e.a == a && e.b == b) || (e.a == b && e.b == a);
      if (!have && unif(rng) < 0.15) edges.push_back({a, b, 1.5});
    }
  std::vector<double> stiff(n, 0.0);
  for (auto& e : edges) {
    stiff[e.a] += e.stiffness;
    stiff[e.b] += e.stiffness;
  }

  for (int i = 0; i < n; ++i) {
    auto& b = buses[i];
    b.id = "B" + std::to_string(i);
    const double r = unif(rng);
    b.kind = r < 0.35 ? BusKind::Generator : (r < 0.7 ? BusKind::Load : BusKind::Passive);
    if (i == 0) b.kind = BusKind::Generator;
    b.params.m = 5.0 + 10.0 * unif(rng);
    if (b.kind == BusKind::Passive) {
      b.params.D = stiff[i] * (1.1 + 2.0 * unif(rng));
    } else {
      b.params.D = 0.5 + 1.5 * unif(rng);
      b.params.tau = 150.0;
      b.params.b_prime = 40.0;
      b.params.c_prime = -0.8;
    }
    if (b.kind == BusKind::Generator) {
      b.params.T_CH = 0.2 + 0.3 * unif(rng);
      b.params.T_G = 0.1 + 0.2 * unif(rng);
      b.params.R = 0.05;
    }
    if (b.kind != BusKind::Passive && unif(rng) < 0.7) {
      ExosystemSpec exo;
      exo.ell_low = 1;
      exo.ell_med = unif(rng) < 0.5 ? 1 : 0;
      exo.rho.push_back(0.08 + 0.07 * unif(rng));
      if (exo.ell_med) exo.rho.push_back(0.2 + 0.1 * unif(rng));
      exo.Phi = oscillator_matrix(exo.rho);
      exo.Psi = Eigen::RowVectorXd::Zero(exo.dim());
      for (int k = 0; k < exo.ell(); ++k) exo.Psi(2 * k) = 10.0;
      exo.chi0 = Eigen::VectorXd::Zero(exo.dim());
      for (int k = 0; k < exo.ell(); ++k) exo.chi0(2 * k + 1) = 30.0 * exo.rho[k];
      exo.rho_max = 0.35;
      exo.validate();
      b.wind = exo;
    }
    if (b.kind != BusKind::Passive) {
      SignalSpec sig;
      sig.constant = 100.0;
      sig.sinusoids.push_back({50.0, 0.01, 0.0});
      b.inelastic_demand = sig;
    }
  }
  Scenario sc;
  sc.topology = NetworkTopology(buses, edges);
  sc.setpoint_hz = 60.0;
  sc.delta = 0.1;
  return sc;
}

}  // namespace gridreg::testing
