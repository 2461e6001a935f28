#include "gridreg/scenario_io.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gridreg {

using nlohmann::json;

namespace {

double require_positive(const json& j, const std::string& field, const std::string& where) {
  if (!j.contains(field)) throw ConfigError(where + ": missing field '" + field + "'");
  const double v = j.at(field).get<double>();
  if (!(v > 0.0)) throw ConfigError(where + ": field '" + field + "' must be positive");
  return v;
}

BusParams parse_params(const json& j, BusKind kind, const std::string& where) {
  BusParams p;
  p.m = require_positive(j, "m", where);
  p.D = require_positive(j, "D", where);
  if (kind == BusKind::Generator) {
    p.T_CH = require_positive(j, "T_CH", where);
    p.T_G = require_positive(j, "T_G", where);
    p.R = require_positive(j, "R", where);
  }
  if (kind != BusKind::Passive) {
    p.tau = require_positive(j, "tau", where);
    p.b_prime = j.value("b_prime", 0.0);
    p.c_prime = j.value("c_prime", 0.0);
    if (!(p.c() < 0.0)) throw ConfigError(where + ": c = c'/tau must be negative");
  }
  return p;
}

ExosystemSpec parse_wind(const json& j, const std::string& where) {
  ExosystemSpec spec;
  std::vector<double> psi_entries;
  std::vector<double> chi_entries;
  auto read_band = [&](const char* band, int& count) {
    if (!j.contains(band)) return;
    for (const auto& blk : j.at(band)) {
      spec.rho.push_back(blk.at("rho").get<double>());
      const auto psi = blk.at("psi").get<std::vector<double>>();
      const auto chi = blk.at("chi0").get<std::vector<double>>();
      if (psi.size() != 2 || chi.size() != 2)
        throw ConfigError(where + ": wind block psi/chi0 must have two entries");
      psi_entries.insert(psi_entries.end(), psi.begin(), psi.end());
      chi_entries.insert(chi_entries.end(), chi.begin(), chi.end());
      ++count;
    }
  };
  read_band("low", spec.ell_low);
  read_band("medium", spec.ell_med);
  if (spec.ell() == 0) throw ConfigError(where + ": wind spec has no oscillator blocks");
  spec.Phi = oscillator_matrix(spec.rho);
  spec.Psi = Eigen::Map<Eigen::RowVectorXd>(psi_entries.data(), psi_entries.size());
  spec.chi0 = Eigen::Map<Eigen::VectorXd>(chi_entries.data(), chi_entries.size());
  double max_rho = 0.0;
  for (double r : spec.rho) max_rho = std::max(max_rho, r);
  spec.rho_max = j.value("rho_max", 2.0 * max_rho);
  if (j.contains("high")) {
    for (const auto& s : j.at("high")) {
      SignalSpec::Sinusoid term;
      term.amplitude = s.at("amplitude").get<double>();
      term.frequency_rad = s.at("frequency_rad").get<double>();
      term.phase = s.value("phase", 0.0);
      spec.high.sinusoids.push_back(term);
    }
  }
  spec.validate();
  return spec;
}

json wind_to_json(const ExosystemSpec& spec) {
  json j;
  auto band = [&](int begin, int end) {
    json arr = json::array();
    for (int b = begin; b < end; ++b) {
      json blk;
      blk["rho"] = spec.rho[b];
      blk["psi"] = {spec.Psi(2 * b), spec.Psi(2 * b + 1)};
      blk["chi0"] = {spec.chi0(2 * b), spec.chi0(2 * b + 1)};
      arr.push_back(blk);
    }
    return arr;
  };
  if (spec.ell_low > 0) j["low"] = band(0, spec.ell_low);
  if (spec.ell_med > 0) j["medium"] = band(spec.ell_low, spec.ell());
  j["rho_max"] = spec.rho_max;
  if (!spec.high.sinusoids.empty()) {
    json arr = json::array();
    for (const auto& s : spec.high.sinusoids)
      arr.push_back(
          {{"amplitude", s.amplitude}, {"frequency_rad", s.frequency_rad}, {"phase", s.phase}});
    j["high"] = arr;
  }
  return j;
}

SignalSpec parse_signal(const json& j, const std::string& where) {
  SignalSpec sig;
  sig.constant = j.value("constant", 0.0);
  if (j.contains("sinusoids")) {
    for (const auto& s : j.at("sinusoids")) {
      SignalSpec::Sinusoid term;
      term.amplitude = s.at("amplitude").get<double>();
      term.frequency_rad = s.at("frequency_rad").get<double>();
      term.phase = s.value("phase", 0.0);
      sig.sinusoids.push_back(term);
    }
  }
  (void)where;
  return sig;
}

json signal_to_json(const SignalSpec& sig) {
  json j;
  j["constant"] = sig.constant;
  json arr = json::array();
  for (const auto& s : sig.sinusoids)
    arr.push_back({{"amplitude", s.amplitude}, {"frequency_rad", s.frequency_rad}, {"phase", s.phase}});
  j["sinusoids"] = arr;
  return j;
}

ExplicitGains parse_gains(const json& j, const std::string& where) {
  ExplicitGains g;
  if (j.contains("generator")) g.k_generator = j.at("generator").get<std::vector<double>>();
  if (j.contains("load")) g.k_load = j.at("load").get<std::vector<double>>();
  for (const double k : g.k_generator)
    if (!(k > 0.0)) throw ConfigError(where + ": generator gains must be positive");
  for (const double k : g.k_load)
    if (!(k > 0.0)) throw ConfigError(where + ": load gains must be positive");
  if (j.contains("M")) {
    for (const auto& [dim, rows] : j.at("M").items()) {
      const auto mat = rows.get<std::vector<std::vector<double>>>();
      const int n = static_cast<int>(mat.size());
      Eigen::MatrixXd M(n, n);
      for (int r = 0; r < n; ++r) {
        if (static_cast<int>(mat[r].size()) != n) throw ConfigError(where + ": M must be square");
        for (int c = 0; c < n; ++c) M(r, c) = mat[r][c];
      }
      if (std::stoi(dim) != n) throw ConfigError(where + ": M dimension key mismatch");
      g.M_by_dim[n] = M;
    }
  }
  if (j.contains("N")) {
    for (const auto& [dim, entries] : j.at("N").items()) {
      const auto vec = entries.get<std::vector<double>>();
      g.N_by_dim[static_cast<int>(vec.size())] =
          Eigen::Map<const Eigen::VectorXd>(vec.data(), vec.size());
      if (std::stoi(dim) != static_cast<int>(vec.size()))
        throw ConfigError(where + ": N dimension key mismatch");
    }
  }
  return g;
}

json gains_to_json(const ExplicitGains& g) {
  json j;
  if (!g.k_generator.empty()) j["generator"] = g.k_generator;
  if (!g.k_load.empty()) j["load"] = g.k_load;
  if (!g.M_by_dim.empty()) {
    json m;
    for (const auto& [dim, M] : g.M_by_dim) {
      std::vector<std::vector<double>> rows(M.rows(), std::vector<double>(M.cols()));
      for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c < M.cols(); ++c) rows[r][c] = M(r, c);
      m[std::to_string(dim)] = rows;
    }
    j["M"] = m;
  }
  if (!g.N_by_dim.empty()) {
    json n;
    for (const auto& [dim, N] : g.N_by_dim)
      n[std::to_string(dim)] = std::vector<double>(N.data(), N.data() + N.size());
    j["N"] = n;
  }
  return j;
}

}  // namespace

Scenario parse_scenario(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }

  Scenario s;
  try {
    s.setpoint_hz = root.at("setpoint_hz").get<double>();
    s.bess_time_constant = require_positive(root, "bess_time_constant", origin);
    s.delta = require_positive(root, "delta", origin);
    s.controller = controller_kind_from_string(root.at("controller").get<std::string>());

    const auto& integ = root.at("integrator");
    s.integrator.dt = integ.at("dt").get<double>();
    s.integrator.t_end = integ.at("t_end").get<double>();
    if (!(s.integrator.dt > 0.0)) throw ConfigError(origin + ": integrator.dt must be positive");
    if (!(s.integrator.t_end > s.integrator.dt))
      throw ConfigError(origin + ": integrator.t_end must exceed dt");

    std::vector<BusDescriptor> buses;
    for (const auto& jb : root.at("buses")) {
      BusDescriptor b;
      b.id = jb.at("id").get<std::string>();
      const std::string where = origin + ": bus '" + b.id + "'";
      b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
      b.params = parse_params(jb.at("params"), b.kind, where);
      b.theta_star = jb.value("theta_star", 0.0);
      if (jb.contains("wind")) b.wind = parse_wind(jb.at("wind"), where);
      if (jb.contains("inelastic_demand"))
        b.inelastic_demand = parse_signal(jb.at("inelastic_demand"), where);
      buses.push_back(std::move(b));
    }

    std::map<std::string, int> ids;
    for (int i = 0; i < static_cast<int>(buses.size()); ++i) ids[buses[i].id] = i;

    std::vector<Edge> edges;
    for (const auto& je : root.at("edges")) {
      if (!je.is_array() || je.size() != 3)
        throw ConfigError(origin + ": edge entries must be [from, to, stiffness]");
      Edge e;
      const std::string from = je[0].get<std::string>();
      const std::string to = je[1].get<std::string>();
      auto ia = ids.find(from);
      auto ib = ids.find(to);
      if (ia == ids.end()) throw ConfigError(origin + ": edge references undefined bus '" + from + "'");
      if (ib == ids.end()) throw ConfigError(origin + ": edge references undefined bus '" + to + "'");
      e.a = ia->second;
      e.b = ib->second;
      e.stiffness = je[2].get<double>();
      edges.push_back(e);
    }

    s.topology = NetworkTopology(std::move(buses), std::move(edges));

    if (root.contains("events")) {
      std::map<int, double> last_per_bus;
      double last = -std::numeric_limits<double>::infinity();
      for (const auto& je : root.at("events")) {
        WindEvent ev;
        ev.time_s = je.at("time_s").get<double>();
        ev.bus = s.topology.index_of(je.at("bus").get<std::string>());
        const std::string action = je.at("action").get<std::string>();
        if (action == "wind_connect")
          ev.connect = true;
        else if (action == "wind_disconnect")
          ev.connect = false;
        else
          throw ConfigError(origin + ": unknown event action '" + action + "'");
        if (!s.topology.bus(ev.bus).wind)
          throw ConfigError(origin + ": wind event at bus without wind spec");
        if (ev.time_s < last) throw ConfigError(origin + ": events not in time order");
        auto it = last_per_bus.find(ev.bus);
        if (it != last_per_bus.end() && !(ev.time_s > it->second))
          throw ConfigError(origin + ": per-bus event times must be strictly increasing");
        last_per_bus[ev.bus] = ev.time_s;
        last = ev.time_s;
        s.events.push_back(ev);
      }
    }

    if (root.contains("gains")) {
      const auto& jg = root.at("gains");
      if (jg.contains("robust")) s.robust_gains = parse_gains(jg.at("robust"), origin);
      if (jg.contains("adaptive")) s.adaptive_gains = parse_gains(jg.at("adaptive"), origin);
    }
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

std::string serialize_scenario(const Scenario& s) {
  json root;
  root["setpoint_hz"] = s.setpoint_hz;
  root["bess_time_constant"] = s.bess_time_constant;
  root["delta"] = s.delta;
  root["controller"] = to_string(s.controller);
  root["integrator"] = {{"dt", s.integrator.dt}, {"t_end", s.integrator.t_end}};

  json buses = json::array();
  for (const auto& b : s.topology.buses()) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = to_string(b.kind);
    json p;
    p["m"] = b.params.m;
    p["D"] = b.params.D;
    if (b.kind == BusKind::Generator) {
      p["T_CH"] = b.params.T_CH;
      p["T_G"] = b.params.T_G;
      p["R"] = b.params.R;
    }
    if (b.kind != BusKind::Passive) {
      p["tau"] = b.params.tau;
      p["b_prime"] = b.params.b_prime;
      p["c_prime"] = b.params.c_prime;
    }
    jb["params"] = p;
    jb["theta_star"] = b.theta_star;
    if (b.wind) jb["wind"] = wind_to_json(*b.wind);
    if (b.inelastic_demand) jb["inelastic_demand"] = signal_to_json(*b.inelastic_demand);
    buses.push_back(jb);
  }
  root["buses"] = buses;

  json edges = json::array();
  for (const auto& e : s.topology.edges())
    edges.push_back({s.topology.bus(e.a).id, s.topology.bus(e.b).id, e.stiffness});
  root["edges"] = edges;

  json events = json::array();
  for (const auto& ev : s.events)
    events.push_back({{"time_s", ev.time_s},
                      {"bus", s.topology.bus(ev.bus).id},
                      {"action", ev.connect ? "wind_connect" : "wind_disconnect"}});
  root["events"] = events;

  if (s.robust_gains || s.adaptive_gains) {
    json jg;
    if (s.robust_gains) jg["robust"] = gains_to_json(*s.robust_gains);
    if (s.adaptive_gains) jg["adaptive"] = gains_to_json(*s.adaptive_gains);
    root["gains"] = jg;
  }
  return root.dump(2);
}

bool scenarios_equal(const Scenario& a, const Scenario& b) {
  return serialize_scenario(a) == serialize_scenario(b);
}

DiagnosticsReport validate_assumptions(const Scenario& s) {
  DiagnosticsReport report;
  const auto& topo = s.topology;

  {
    AssumptionCheck c{"flow balance at passive buses (Assumption 2)", true, ""};
    for (int i = 0; i < topo.bus_count(); ++i) {
      if (topo.bus(i).kind != BusKind::Passive) continue;
      const double sum = topo.desired_flow_sum(i);
      if (std::abs(sum) > 1e-9) {
        c.pass = false;
        c.detail += (c.detail.empty() ? "" : ", ") + topo.bus(i).id;
      }
    }
    if (c.pass) c.detail = "sum of desired flows is zero at every passive bus";
    report.checks.push_back(std::move(c));
  }
  {
    AssumptionCheck c{"passive-bus stability condition D_i > sum t_ij", true, ""};
    for (int i = 0; i < topo.bus_count(); ++i) {
      if (topo.bus(i).kind != BusKind::Passive) continue;
      if (!(topo.bus(i).params.D > topo.stiffness_sum(i))) {
        c.pass = false;
        c.detail += (c.detail.empty() ? "" : ", ") + topo.bus(i).id;
      }
    }
    if (c.pass) c.detail = "holds at every passive bus";
    report.checks.push_back(std::move(c));
  }
  {
    // Closed-form signals always carry two analytic derivatives; the check
    // guards the schema rather than the math.
    AssumptionCheck c{"inelastic demand twice differentiable (Assumption 1)", true,
                      "closed-form signals provide two analytic derivatives"};
    report.checks.push_back(std::move(c));
  }
  return report;
}

std::ostream& operator<<(std::ostream& os, const DiagnosticsReport& report) {
  for (const auto& c : report.checks)
    os << (c.pass ? "PASS" : "FAIL") << "  " << c.name << (c.detail.empty() ? "" : ": " + c.detail)
       << "\n";
  return os;
}

}  // namespace gridreg
