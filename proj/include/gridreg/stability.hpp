#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gridreg/closed_loop.hpp"

namespace gridreg {

/// Class-K gain function: linear gamma(s) = c s, or a table of monotone
/// samples interpolated linearly (gamma(0) = 0 always).
struct GainFunction {
  bool linear = true;
  double coef = 0.0;
  std::vector<std::pair<double, double>> table;  // (s, gamma(s)), s increasing

  double operator()(double s) const;
  static GainFunction make_linear(double c) { return GainFunction{true, c, {}}; }
  static GainFunction tabulate(const std::function<double(double)>& f, double s_min, double s_max,
                               int points = 256);
};

/// Exponential class-KL envelope beta(x, t) = coef x^power exp(-rate t).
struct ExpKL {
  double coef = 1.0;
  double rate = 1.0;
  double power = 1.0;
  double operator()(double x, double t) const;
};

struct GainGraphNode {
  std::string name;
  ExpKL beta;
  GainFunction gamma_d = GainFunction::make_linear(0.0);
  bool has_disturbance = false;
};

/// Directed influence edge: node `from` drives node `to` with gain gamma.
struct GainGraphEdge {
  int from = 0;
  int to = 0;
  GainFunction gamma;
};

struct GainGraph {
  std::vector<GainGraphNode> nodes;
  std::vector<GainGraphEdge> edges;
};

struct ContractionVerdict {
  int edge = 0;
  bool pass = false;
  double worst_ratio = 0.0;  // sup gamma(s)/s over the grid (or the linear coef)
};

/// gamma(s) < s at every positive sample (1e-12 slack); linear gains are
/// checked symbolically via their coefficient.
std::vector<ContractionVerdict> check_contraction(const GainGraph& graph,
                                                  const std::vector<double>& sample_grid);
bool all_contractive(const std::vector<ContractionVerdict>& verdicts);

/// 256 log-spaced positive samples covering [1e-6, 1e6].
std::vector<double> default_sample_grid();

/// Composite class-KL bound of the distributed small-gain theorem:
/// beta(x, t) = |V| sum_i beta_i(|V| sum_k beta_k(x, 0), t / (2 L)^(|V|-1)).
class CompositeBeta {
 public:
  CompositeBeta(std::vector<ExpKL> betas, double L);
  double operator()(double x, double t) const;
  double time_scale() const { return time_scale_; }

 private:
  std::vector<ExpKL> betas_;
  double time_scale_ = 1.0;  // (2 L)^(|V|-1)
};

/// Builds the composite bound; requires L > 1 and performs grid checks
/// (decreasing in t, class-K in x, beta(0, t) = 0).
CompositeBeta beta_candidate(const GainGraph& graph, double L);

struct IssReport {
  bool pass = false;
  double min_margin = 0.0;
  std::vector<double> margin;  // per sample: max{beta, gamma_d} - ||x||
};

/// Checks the ISS conclusion on a sampled trajectory. d_norm may be empty
/// (no disturbance); otherwise it must share the time grid.
IssReport verify_iss_bound(const std::vector<double>& t, const std::vector<double>& x_norm,
                           const std::function<double(double, double)>& beta, double x0_norm,
                           const GainFunction* gamma_d = nullptr,
                           const std::vector<double>& d_norm = {});

/// Per-node tag of the extracted graph (bus, backstepping component).
struct GainNodeInfo {
  int bus = 0;
  int component = 0;  // 0-based scalar index; -1 for the internal-model block
};

struct ExtractedGainGraph {
  GainGraph graph;
  std::vector<GainNodeInfo> info;
};

/// Builds the closed-loop gain graph from the probed network matrix: one
/// node per scalar backstepping state and one per internal-model error
/// block. Gains are linear with coefficient (row coupling sum)/(theta k),
/// the diagonal-dominance ratio Algorithm 1 drives below one; envelopes
/// keep the remaining (1-theta) share of the local decay. Passive buses
/// get the paper's sum t_ij / (alpha D) gain with their swing-block
/// envelope. theta and alpha default to the values used by the proofs.
ExtractedGainGraph extract_gain_graph(const ClosedLoop& loop, double theta = 0.5,
                                      double alpha = 0.99);

}  // namespace gridreg
