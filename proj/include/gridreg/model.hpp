#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridreg {

constexpr double kTwoPi = 2.0 * M_PI;

/// Thrown on malformed scenario files or inconsistent model data.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class BusKind : std::uint8_t { Generator, Load, Passive };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& s);

/// Per-bus physical constants. Which fields are meaningful depends on the
/// bus kind: generators use all of them, load buses use m, D and the demand
/// response block, passive buses only m and D.
struct BusParams {
  double m = 0.0;     // angular momentum, s*MW/Hz
  double D = 0.0;     // damping, MW/Hz
  double T_CH = 0.0;  // charging time constant, s
  double T_G = 0.0;   // governor time constant, s
  double R = 0.0;     // droop gain, Hz/MW
  double tau = 0.0;   // consumer response constant, s
  double b_prime = 0.0;  // marginal benefit offset, $/MWh
  double c_prime = 0.0;  // marginal benefit slope, $/MW^2h (negative)

  double b() const { return b_prime / tau; }
  double c() const { return c_prime / tau; }
};

/// Closed-form signal: constant plus a sum of sinusoids. Value and the first
/// two derivatives are available analytically, which is what the manifold
/// feedforward needs.
struct SignalSpec {
  struct Sinusoid {
    double amplitude = 0.0;
    double frequency_rad = 0.0;
    double phase = 0.0;
  };
  double constant = 0.0;
  std::vector<Sinusoid> sinusoids;

  double value(double t) const {
    double v = constant;
    for (const auto& s : sinusoids) v += s.amplitude * std::sin(s.frequency_rad * t + s.phase);
    return v;
  }
  double deriv1(double t) const {
    double v = 0.0;
    for (const auto& s : sinusoids)
      v += s.amplitude * s.frequency_rad * std::cos(s.frequency_rad * t + s.phase);
    return v;
  }
  double deriv2(double t) const {
    double v = 0.0;
    for (const auto& s : sinusoids) {
      const double w = s.frequency_rad;
      v -= s.amplitude * w * w * std::sin(w * t + s.phase);
    }
    return v;
  }
};

/// Partially known exosystem generating the low/medium frequency wind power.
/// Phi is block diagonal with one [[0,1],[-rho^2,0]] block per oscillator,
/// low blocks first. Psi is the 1 x 2l output row.
struct ExosystemSpec {
  int ell_low = 0;
  int ell_med = 0;
  std::vector<double> rho;  // per oscillator, low block then medium block
  Eigen::MatrixXd Phi;      // 2l x 2l
  Eigen::RowVectorXd Psi;   // 1 x 2l
  Eigen::VectorXd chi0;     // initial hidden state
  double rho_max = 0.0;
  SignalSpec high;  // synthesized high-frequency sinusoids, removed by the BESS

  int ell() const { return ell_low + ell_med; }
  int dim() const { return 2 * ell(); }

  /// Validates block structure, frequency ordering and observability.
  void validate() const;
};

/// Builds the block diagonal oscillator matrix for the given frequencies.
Eigen::MatrixXd oscillator_matrix(const std::vector<double>& rho);

struct BusDescriptor {
  std::string id;
  BusKind kind = BusKind::Passive;
  BusParams params;
  double theta_star = 0.0;  // desired phase offset theta**, rad
  std::optional<ExosystemSpec> wind;
  std::optional<SignalSpec> inelastic_demand;

  bool controlled() const { return kind != BusKind::Passive; }
};

struct Edge {
  int a = 0;
  int b = 0;
  double stiffness = 0.0;  // t_ij, MW/rad
};

/// Undirected bus/line graph. Neighbor sets are derived from the edge list at
/// construction and kept consistent with it.
class NetworkTopology {
 public:
  NetworkTopology() = default;
  NetworkTopology(std::vector<BusDescriptor> buses, std::vector<Edge> edges);

  int bus_count() const { return static_cast<int>(buses_.size()); }
  const std::vector<BusDescriptor>& buses() const { return buses_; }
  const BusDescriptor& bus(int i) const { return buses_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Neighbors of bus i as (neighbor index, stiffness) pairs.
  const std::vector<std::pair<int, double>>& neighbors(int i) const { return neighbors_.at(i); }

  /// Sum of line stiffnesses incident to bus i.
  double stiffness_sum(int i) const;

  /// Sum of desired flows t_ij (theta_i** - theta_j**) out of bus i.
  double desired_flow_sum(int i) const;

  int index_of(const std::string& id) const;
  bool connected() const;

 private:
  std::vector<BusDescriptor> buses_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, double>>> neighbors_;
  std::map<std::string, int> index_;
};

/// Tie-line power flow t_ij (theta_i - theta_j); antisymmetric in (i, j).
inline double power_flow(double theta_i, double theta_j, double t_ij) {
  return t_ij * (theta_i - theta_j);
}

enum class ControllerKind : std::uint8_t { Robust, Adaptive, Baseline };

std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& s);

struct WindEvent {
  double time_s = 0.0;
  int bus = 0;
  bool connect = false;  // wind_connect vs wind_disconnect
};

struct IntegratorSettings {
  double dt = 1e-3;
  double t_end = 150.0;
};

/// Explicit controller gains keyed by internal-model dimension where a matrix
/// is needed. Used when a scenario pins the gain values instead of running
/// the design algorithm.
struct ExplicitGains {
  std::vector<double> k_generator;           // k1..k5 (robust) or k1..k4 (adaptive)
  std::vector<double> k_load;                // k1..k3
  std::map<int, Eigen::MatrixXd> M_by_dim;   // keyed by 2l
  std::map<int, Eigen::VectorXd> N_by_dim;   // keyed by 2l
};

struct Scenario {
  NetworkTopology topology;
  double setpoint_hz = 60.0;  // w*
  double bess_time_constant = 1.0;
  double delta = 0.1;  // Algorithm 1/2 margin input
  ControllerKind controller = ControllerKind::Robust;
  IntegratorSettings integrator;
  std::vector<WindEvent> events;
  std::optional<ExplicitGains> robust_gains;
  std::optional<ExplicitGains> adaptive_gains;

  /// Inelastic demand value/derivatives at bus i (zero signal when absent).
  double p_ie(int i, double t) const;
  double p_ie_dot(int i, double t) const;
  double p_ie_ddot(int i, double t) const;

  /// True while a wind_connect window covers time t (half open intervals).
  bool wind_active(int bus, double t) const;
};

}  // namespace gridreg
