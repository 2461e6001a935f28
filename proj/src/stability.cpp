#include "gridreg/stability.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace gridreg {

double GainFunction::operator()(double s) const {
  if (linear) return coef * s;
  if (table.empty() || s <= 0.0) return 0.0;
  if (s <= table.front().first)
    return table.front().second * (s / table.front().first);
  for (size_t i = 1; i < table.size(); ++i) {
    if (s <= table[i].first) {
      const auto& [s0, g0] = table[i - 1];
      const auto& [s1, g1] = table[i];
      return g0 + (g1 - g0) * (s - s0) / (s1 - s0);
    }
  }
  const auto& [s0, g0] = table[table.size() - 2];
  const auto& [s1, g1] = table.back();
  return g1 + (g1 - g0) * (s - s1) / (s1 - s0);
}

GainFunction GainFunction::tabulate(const std::function<double(double)>& f, double s_min,
                                    double s_max, int points) {
  GainFunction g;
  g.linear = false;
  const double ratio = std::log(s_max / s_min);
  for (int i = 0; i < points; ++i) {
    const double s = s_min * std::exp(ratio * i / (points - 1));
    g.table.emplace_back(s, f(s));
  }
  return g;
}

double ExpKL::operator()(double x, double t) const {
  return coef * std::pow(x, power) * std::exp(-rate * t);
}

std::vector<double> default_sample_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 256; ++i) grid.push_back(1e-6 * std::pow(10.0, 12.0 * i / 255.0));
  return grid;
}

std::vector<ContractionVerdict> check_contraction(const GainGraph& graph,
                                                  const std::vector<double>& sample_grid) {
  std::vector<ContractionVerdict> out;
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& g = graph.edges[e].gamma;
    ContractionVerdict v;
    v.edge = static_cast<int>(e);
    if (g.linear) {
      v.worst_ratio = g.coef;
      v.pass = g.coef < 1.0;
    } else {
      double worst = 0.0;
      for (double s : sample_grid) {
        if (!(s > 0.0)) continue;
        worst = std::max(worst, g(s) / s);
      }
      v.worst_ratio = worst;
      v.pass = worst < 1.0 - 1e-12;
    }
    out.push_back(v);
  }
  return out;
}

bool all_contractive(const std::vector<ContractionVerdict>& verdicts) {
  for (const auto& v : verdicts)
    if (!v.pass) return false;
  return true;
}

CompositeBeta::CompositeBeta(std::vector<ExpKL> betas, double L) : betas_(std::move(betas)) {
  const int n = static_cast<int>(betas_.size());
  time_scale_ = std::pow(2.0 * L, n - 1);
}

double CompositeBeta::operator()(double x, double t) const {
  const double n = static_cast<double>(betas_.size());
  double inner = 0.0;
  for (const auto& b : betas_) inner += b(x, 0.0);
  inner *= n;
  double outer = 0.0;
  for (const auto& b : betas_) outer += b(inner, t / time_scale_);
  return n * outer;
}

CompositeBeta beta_candidate(const GainGraph& graph, double L) {
  if (!(L > 1.0)) throw ConfigError("beta_candidate requires L > 1");
  std::vector<ExpKL> betas;
  for (const auto& node : graph.nodes) betas.push_back(node.beta);
  CompositeBeta beta(betas, L);

  // Class-KL sanity on a grid.
  for (double x : {1e-3, 1.0, 1e3}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {0.0, 1.0, 10.0, 100.0}) {
      const double v = beta(x, t);
      if (v > prev + 1e-12) throw std::runtime_error("beta_candidate: not decreasing in t");
      prev = v;
    }
  }
  for (double t : {0.0, 1.0, 10.0}) {
    if (std::abs(beta(0.0, t)) > 0.0) throw std::runtime_error("beta_candidate: beta(0,t) != 0");
    double prev = 0.0;
    for (double x : {1e-3, 1.0, 1e3}) {
      const double v = beta(x, t);
      if (v < prev) throw std::runtime_error("beta_candidate: not increasing in x");
      prev = v;
    }
  }
  return beta;
}

IssReport verify_iss_bound(const std::vector<double>& t, const std::vector<double>& x_norm,
                           const std::function<double(double, double)>& beta, double x0_norm,
                           const GainFunction* gamma_d, const std::vector<double>& d_norm) {
  if (t.size() != x_norm.size()) throw ConfigError("verify_iss_bound: time grid mismatch");
  if (!d_norm.empty() && d_norm.size() != t.size())
    throw ConfigError("verify_iss_bound: disturbance grid mismatch");
  IssReport rep;
  rep.pass = true;
  rep.min_margin = std::numeric_limits<double>::infinity();
  double d_sup = 0.0;
  for (size_t k = 0; k < t.size(); ++k) {
    double bound = beta(x0_norm, t[k] - t[0]);
    if (gamma_d && !d_norm.empty()) {
      d_sup = std::max(d_sup, d_norm[k]);
      bound = std::max(bound, (*gamma_d)(d_sup));
    }
    const double margin = bound - x_norm[k];
    rep.margin.push_back(margin);
    rep.min_margin = std::min(rep.min_margin, margin);
    if (margin < 0.0) rep.pass = false;
  }
  return rep;
}

namespace {

// Envelope constant kappa with ||exp(A t)|| <= kappa exp(-rate t), evaluated
// on a time grid against the matrix exponential.
double envelope_kappa(const Eigen::MatrixXd& A, double rate) {
  const int steps = 400;
  const double horizon = rate > 0.0 ? 20.0 / rate : 1.0;
  const double h = horizon / steps;
  const Eigen::MatrixXd E = (A * h).exp();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  double kappa = 1.0;
  for (int k = 1; k <= steps; ++k) {
    P = E * P;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(P);
    kappa = std::max(kappa, svd.singularValues()(0) * std::exp(rate * k * h));
  }
  return kappa * 1.05;
}

}  // namespace

ExtractedGainGraph extract_gain_graph(const ClosedLoop& loop, double theta, double alpha) {
  const Eigen::MatrixXd A = loop.assemble_A();
  const auto& topo = loop.scenario().topology;
  ExtractedGainGraph out;

  // Node partition of the hat vector.
  struct NodeSpan {
    int begin;
    int len;
  };
  std::vector<NodeSpan> spans;
  std::vector<int> index_node(loop.hat_dim(), -1);
  for (int i = 0; i < topo.bus_count(); ++i) {
    const auto& blk = loop.blocks()[i];
    if (!topo.bus(i).controlled()) {
      spans.push_back({blk.hat_offset, blk.hat_dim});
      out.info.push_back({i, -1});
      out.graph.nodes.push_back({});
    } else {
      for (int l = 0; l < blk.n_phys; ++l) {
        spans.push_back({blk.hat_offset + l, 1});
        out.info.push_back({i, l});
        out.graph.nodes.push_back({});
      }
      if (blk.eta_dim > 0) {
        spans.push_back({blk.hat_offset + blk.n_phys, blk.eta_dim});
        out.info.push_back({i, -1});
        out.graph.nodes.push_back({});
      }
    }
  }
  const int n_nodes = static_cast<int>(spans.size());
  for (int v = 0; v < n_nodes; ++v)
    for (int k = 0; k < spans[v].len; ++k) index_node[spans[v].begin + k] = v;

  // Coupling norms between nodes.
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (int v = 0; v < n_nodes; ++v) {
    for (int u = 0; u < n_nodes; ++u) {
      if (u == v) continue;
      const Eigen::MatrixXd B = A.block(spans[v].begin, spans[u].begin, spans[v].len, spans[u].len);
      const double norm = B.norm() > 0.0
                              ? Eigen::JacobiSVD<Eigen::MatrixXd>(B).singularValues()(0)
                              : 0.0;
      W(v, u) = norm;
    }
  }

  for (int v = 0; v < n_nodes; ++v) {
    auto& node = out.graph.nodes[v];
    const auto& info = out.info[v];
    node.name = topo.bus(info.bus).id +
                (info.component >= 0 ? ":x" + std::to_string(info.component + 1) : ":eta");
    if (!topo.bus(info.bus).controlled()) node.name = topo.bus(info.bus).id + ":swing";

    const double w_total = W.row(v).sum();
    const Eigen::MatrixXd local = A.block(spans[v].begin, spans[v].begin, spans[v].len, spans[v].len);
    double gain_coef;
    if (spans[v].len == 1) {
      // Scalar backstepping state: rate k from the diagonal, theta-split ISS.
      const double k = -local(0, 0);
      const double th =
          k > 0.0 && w_total < k ? std::max(theta, 0.5 * (1.0 + w_total / k)) : theta;
      node.beta = ExpKL{1.0, k > 0.0 ? (1.0 - th) * k : 0.0, 1.0};
      gain_coef = k > 0.0 ? w_total / (th * k) : std::numeric_limits<double>::infinity();
    } else if (!topo.bus(info.bus).controlled()) {
      // Passive swing block: the proofs use gamma = sum t_ij / (alpha D).
      const double rate = alpha * (-is_hurwitz(local, 0.0).max_real_part);
      node.beta = ExpKL{envelope_kappa(local, rate), rate, 1.0};
      gain_coef = topo.stiffness_sum(info.bus) / (alpha * topo.bus(info.bus).params.D);
    } else {
      // Internal-model error block: variation-of-constants envelope. The
      // decay/input split is placed midway between the coupling ratio and
      // one, mirroring the scalar theta split.
      const double sigma = -is_hurwitz(local, 0.0).max_real_part;
      const double rate = alpha * sigma;
      const double kappa = envelope_kappa(local, rate);
      const double ratio = rate > 0.0 ? kappa * w_total / rate
                                      : std::numeric_limits<double>::infinity();
      if (ratio < 1.0) {
        const double r = 2.0 / (1.0 / ratio - 1.0);
        node.beta = ExpKL{(1.0 + r) * kappa, rate, 1.0};
        gain_coef = 0.5 * (ratio + 1.0);
      } else {
        node.beta = ExpKL{2.0 * kappa, rate, 1.0};
        gain_coef = 2.0 * ratio;
      }
    }
    for (int u = 0; u < n_nodes; ++u) {
      if (u == v || W(v, u) <= 1e-13) continue;
      out.graph.edges.push_back({u, v, GainFunction::make_linear(gain_coef)});
    }
  }
  return out;
}

}  // namespace gridreg
