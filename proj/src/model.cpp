#include "gridreg/model.hpp"

#include <algorithm>
#include <queue>

namespace gridreg {

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Generator: return "G";
    case BusKind::Load: return "L";
    case BusKind::Passive: return "T";
  }
  return "?";
}

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "G") return BusKind::Generator;
  if (s == "L") return BusKind::Load;
  if (s == "T") return BusKind::Passive;
  throw ConfigError("unknown bus kind '" + s + "' (expected G, L or T)");
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Robust: return "robust";
    case ControllerKind::Adaptive: return "adaptive";
    case ControllerKind::Baseline: return "baseline";
  }
  return "?";
}

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "robust") return ControllerKind::Robust;
  if (s == "adaptive") return ControllerKind::Adaptive;
  if (s == "baseline") return ControllerKind::Baseline;
  throw ConfigError("unknown controller '" + s + "'");
}

Eigen::MatrixXd oscillator_matrix(const std::vector<double>& rho) {
  const int n = static_cast<int>(rho.size());
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    Phi(2 * i, 2 * i + 1) = 1.0;
    Phi(2 * i + 1, 2 * i) = -rho[i] * rho[i];
  }
  return Phi;
}

namespace {

bool observable(const Eigen::RowVectorXd& Psi, const Eigen::MatrixXd& Phi) {
  const int n = static_cast<int>(Phi.rows());
  if (n == 0) return true;
  Eigen::MatrixXd O(n, n);
  Eigen::RowVectorXd row = Psi;
  for (int i = 0; i < n; ++i) {
    O.row(i) = row;
    row = row * Phi;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(O);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return false;
  return sv(sv.size() - 1) > 1e-10 * sv(0);
}

}  // namespace

void ExosystemSpec::validate() const {
  const int l = ell();
  if (static_cast<int>(rho.size()) != l)
    throw ConfigError("exosystem: rho list length does not match ell_low + ell_med");
  if (Phi.rows() != 2 * l || Phi.cols() != 2 * l)
    throw ConfigError("exosystem: Phi dimension mismatch");
  if (Psi.size() != 2 * l) throw ConfigError("exosystem: Psi dimension mismatch");
  if (chi0.size() != 2 * l) throw ConfigError("exosystem: chi0 dimension mismatch");
  if ((Phi - oscillator_matrix(rho)).norm() > 0.0)
    throw ConfigError("exosystem: Phi is not the block oscillator matrix of rho");
  for (int i = 0; i < ell_low; ++i)
    for (int j = ell_low; j < l; ++j)
      if (rho[j] > 0.0 && rho[i] >= rho[j])
        throw ConfigError("exosystem: low frequency must be below every nonzero medium frequency");
  for (double r : rho) {
    if (r < 0.0) throw ConfigError("exosystem: negative frequency");
    if (r > rho_max) throw ConfigError("exosystem: frequency exceeds rho_max");
  }
  if (!observable(Psi, Phi)) throw ConfigError("exosystem: (Psi, Phi) pair is not observable");
}

NetworkTopology::NetworkTopology(std::vector<BusDescriptor> buses, std::vector<Edge> edges)
    : buses_(std::move(buses)), edges_(std::move(edges)) {
  neighbors_.resize(buses_.size());
  for (int i = 0; i < bus_count(); ++i) {
    const auto& b = buses_[i];
    if (!index_.emplace(b.id, i).second) throw ConfigError("duplicate bus id '" + b.id + "'");
    if (b.kind == BusKind::Passive && (b.wind || b.inelastic_demand))
      throw ConfigError("passive bus '" + b.id + "' carries wind or demand");
  }
  for (const auto& e : edges_) {
    if (e.a < 0 || e.a >= bus_count() || e.b < 0 || e.b >= bus_count())
      throw ConfigError("edge references bus out of range");
    if (e.a == e.b) throw ConfigError("self-loop at bus '" + buses_[e.a].id + "'");
    if (!(e.stiffness > 0.0)) throw ConfigError("non-positive line stiffness");
    neighbors_[e.a].emplace_back(e.b, e.stiffness);
    neighbors_[e.b].emplace_back(e.a, e.stiffness);
  }
  for (auto& nbrs : neighbors_) {
    std::sort(nbrs.begin(), nbrs.end());
    for (size_t k = 1; k < nbrs.size(); ++k)
      if (nbrs[k].first == nbrs[k - 1].first) throw ConfigError("parallel edge in line list");
  }
}

double NetworkTopology::stiffness_sum(int i) const {
  double s = 0.0;
  for (const auto& [j, t] : neighbors(i)) s += t;
  return s;
}

double NetworkTopology::desired_flow_sum(int i) const {
  double s = 0.0;
  for (const auto& [j, t] : neighbors(i))
    s += power_flow(buses_[i].theta_star, buses_[j].theta_star, t);
  return s;
}

int NetworkTopology::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown bus id '" + id + "'");
  return it->second;
}

bool NetworkTopology::connected() const {
  if (buses_.empty()) return true;
  std::vector<char> seen(buses_.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    for (const auto& [j, t] : neighbors(i)) {
      if (!seen[j]) {
        seen[j] = 1;
        ++count;
        q.push(j);
      }
    }
  }
  return count == bus_count();
}

double Scenario::p_ie(int i, double t) const {
  const auto& sig = topology.bus(i).inelastic_demand;
  return sig ? sig->value(t) : 0.0;
}

double Scenario::p_ie_dot(int i, double t) const {
  const auto& sig = topology.bus(i).inelastic_demand;
  return sig ? sig->deriv1(t) : 0.0;
}

double Scenario::p_ie_ddot(int i, double t) const {
  const auto& sig = topology.bus(i).inelastic_demand;
  return sig ? sig->deriv2(t) : 0.0;
}

bool Scenario::wind_active(int bus, double t) const {
  bool active = false;
  for (const auto& ev : events) {
    if (ev.bus != bus) continue;
    if (ev.time_s > t) break;  // events are sorted by time
    active = ev.connect;
  }
  return active;
}

}  // namespace gridreg
