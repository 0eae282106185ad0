#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msda/common.hpp"
#include "msda/dataset.hpp"
#include "msda/graph.hpp"
#include "msda/neural.hpp"
#include "msda/rng.hpp"

namespace msda {

struct SimulationSpec {
  AugmentedDag dag;  // fully directed generative graph over single-feature nodes + Y
  int module_width = 32;
  int n_domains = 2;  // source domains; one target domain is generated on top
  int n_per_domain = 500;
  double theta_scale = 1.0;
  // Input gain on the theta column of changing mechanisms. Parent features
  // run at several standard deviations, so a unit change parameter needs a
  // comparable gain to move the mechanism visibly.
  double theta_gain = 4.0;
  std::uint64_t seed = 0;
  // "bernoulli": Y ~ Bernoulli(sigmoid(z)) with a per-row uniform draw;
  // "hard": Y = 1[z > 0], all stochasticity coming through the noise input.
  std::string y_link = "bernoulli";
  double degenerate_threshold = 0.85;
  int max_attempts = 500;

  void validate() const {
    dag.validate();
    if (!dag.fully_directed()) throw DataError("simulate: graph must be fully directed");
    for (const GraphNode& n : dag.nodes)
      if (!n.is_y && n.features.size() != 1)
        throw DataError("simulate: only single-feature nodes are supported");
    if (dag.n_classes != 2) throw DataError("simulate: binary labels only");
    if (n_domains < 2) throw ConfigError("simulate: need at least 2 source domains");
    if (n_per_domain < 1) throw ConfigError("simulate: n_per_domain must be >= 1");
    if (theta_scale < 0.0) throw ConfigError("simulate: theta_scale must be >= 0");
    if (theta_gain <= 0.0) throw ConfigError("simulate: theta_gain must be > 0");
    if (y_link != "bernoulli" && y_link != "hard")
      throw ConfigError("simulate: y_link must be 'bernoulli' or 'hard'");
  }
};

// The sampled ground truth behind one simulated dataset.
struct SimulationModel {
  std::vector<Mlp> node_mlps;  // indexed by dag node
  Matrix thetas;               // (n_domains + 1) x n_theta_groups; last row = target
};

// Per-node noise for one domain, drawn up front so mechanisms can be re-run
// with different theta values against the identical noise.
struct DomainNoise {
  std::vector<Vector> node_noise;  // one column per node
  Vector y_uniform;                // for the bernoulli label link
};

inline DomainNoise make_domain_noise(const AugmentedDag& dag, int n, Rng rng) {
  DomainNoise out;
  out.node_noise.resize(static_cast<std::size_t>(dag.size()));
  for (int v = 0; v < dag.size(); ++v) {
    Rng s = rng.fork("node", static_cast<std::uint64_t>(v));
    Vector e(n);
    for (int r = 0; r < n; ++r) e[r] = s.normal();
    out.node_noise[static_cast<std::size_t>(v)] = std::move(e);
  }
  Rng s = rng.fork("label-link");
  out.y_uniform.resize(n);
  for (int r = 0; r < n; ++r) out.y_uniform[r] = s.uniform();
  return out;
}

inline int sim_mlp_input_width(const AugmentedDag& dag, int v) {
  int w = static_cast<int>(dag.parents(v).size());  // every sim node is 1-wide
  w += 1;                                           // noise
  if (dag.nodes[static_cast<std::size_t>(v)].changing) w += 1;
  return w;
}

// Run every mechanism in topological order for one domain.
inline std::pair<Matrix, IntVector> generate_domain(const AugmentedDag& dag,
                                                    const std::vector<Mlp>& mlps,
                                                    const Vector& theta_row,
                                                    const DomainNoise& noise,
                                                    const std::string& y_link,
                                                    double theta_gain = 1.0) {
  const int n = static_cast<int>(noise.node_noise.front().size());
  const int d = static_cast<int>(dag.feature_names.size());
  Matrix x(n, d);
  IntVector y(n);
  std::vector<Vector> value(static_cast<std::size_t>(dag.size()));
  for (int v : dag.topological_order()) {
    const GraphNode& node = dag.nodes[static_cast<std::size_t>(v)];
    std::vector<int> pa = dag.parents(v);
    Matrix in(n, sim_mlp_input_width(dag, v));
    int c = 0;
    for (int p : pa) in.col(c++) = value[static_cast<std::size_t>(p)];
    in.col(c++) = noise.node_noise[static_cast<std::size_t>(v)];
    if (node.changing) {
      int g = dag.theta_group_of(v);
      in.col(c++).setConstant(theta_gain * theta_row[g]);
    }
    Vector out = mlps[static_cast<std::size_t>(v)].forward(in).col(0);
    if (node.is_y) {
      Vector lab(n);
      for (int r = 0; r < n; ++r) {
        if (y_link == "bernoulli") {
          double p = 1.0 / (1.0 + std::exp(-out[r]));
          lab[r] = noise.y_uniform[r] < p ? 1.0 : 0.0;
        } else {
          lab[r] = out[r] > 0.0 ? 1.0 : 0.0;
        }
      }
      value[static_cast<std::size_t>(v)] = lab;
      for (int r = 0; r < n; ++r) y[r] = static_cast<int>(lab[r]);
    } else {
      value[static_cast<std::size_t>(v)] = out;
      x.col(node.features.front()) = out;
    }
  }
  return {std::move(x), std::move(y)};
}

// A draw is degenerate when any single domain is dominated by one class.
// Pooling across domains would hide a domain that is all one label.
inline bool labels_degenerate(const std::vector<IntVector>& all_labels, double threshold) {
  for (const IntVector& y : all_labels) {
    double f = static_cast<double>(y.sum()) / static_cast<double>(y.size());
    if (f > threshold || (1.0 - f) > threshold) return true;
  }
  return false;
}

struct SimulationResult {
  MultiDomainDataset dataset;
  IntVector target_labels;
  SimulationModel model;
  int attempts = 1;
};

// Draw mechanism parameters and per-domain theta values, then generate every
// domain. Parameter draws that give a nearly single-class dataset are
// rejected and redrawn from a fresh parameter stream; the noise streams stay
// fixed across attempts.
inline SimulationResult simulate(const SimulationSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  const int n_groups = static_cast<int>(spec.dag.theta_groups.size());
  const int total_domains = spec.n_domains + 1;

  std::vector<DomainNoise> noise;
  for (int dom = 0; dom < total_domains; ++dom)
    noise.push_back(make_domain_noise(spec.dag, spec.n_per_domain,
                                      root.fork("sim-noise", static_cast<std::uint64_t>(dom))));

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    SimulationModel model;
    Rng pstream = root.fork("sim-params", static_cast<std::uint64_t>(attempt));
    for (int v = 0; v < spec.dag.size(); ++v) {
      std::vector<int> sizes{sim_mlp_input_width(spec.dag, v), spec.module_width, 1};
      Mlp mlp(sizes, Activation::kTanh, pstream.fork(static_cast<std::uint64_t>(v)));
      // mechanism parameters ~ N(0, 1), not the fan-in-scaled training init
      Vector flat(mlp.param_count());
      Rng ps = pstream.fork("flat", static_cast<std::uint64_t>(v));
      for (Eigen::Index k = 0; k < flat.size(); ++k) flat[k] = ps.normal();
      mlp.unflatten_params(flat);
      model.node_mlps.push_back(std::move(mlp));
    }
    model.thetas.resize(total_domains, n_groups);
    Rng tstream = root.fork("sim-theta", static_cast<std::uint64_t>(attempt));
    for (int dom = 0; dom < total_domains; ++dom) {
      Rng ts = tstream.fork(static_cast<std::uint64_t>(dom));
      for (int g = 0; g < n_groups; ++g) model.thetas(dom, g) = spec.theta_scale * ts.normal();
    }

    std::vector<Matrix> xs(static_cast<std::size_t>(total_domains));
    std::vector<IntVector> ys(static_cast<std::size_t>(total_domains));
    for (int dom = 0; dom < total_domains; ++dom) {
      auto [x, y] = generate_domain(spec.dag, model.node_mlps, model.thetas.row(dom), noise[static_cast<std::size_t>(dom)], spec.y_link, spec.theta_gain);
      xs[static_cast<std::size_t>(dom)] = std::move(x);
      ys[static_cast<std::size_t>(dom)] = std::move(y);
    }
    if (labels_degenerate(ys, spec.degenerate_threshold)) continue;

    SimulationResult res;
    res.model = std::move(model);
    res.attempts = attempt + 1;
    res.dataset.feature_names = spec.dag.feature_names;
    res.dataset.n_classes = 2;
    for (int dom = 0; dom < spec.n_domains; ++dom) {
      DomainData d;
      d.x = std::move(xs[static_cast<std::size_t>(dom)]);
      d.y = std::move(ys[static_cast<std::size_t>(dom)]);
      res.dataset.sources.push_back(std::move(d));
    }
    res.dataset.target_x = std::move(xs[static_cast<std::size_t>(spec.n_domains)]);
    res.target_labels = std::move(ys[static_cast<std::size_t>(spec.n_domains)]);
    res.dataset.validate();
    return res;
  }
  throw NumericError("simulate: labels degenerate after " + std::to_string(spec.max_attempts) +
                     " parameter draws");
}

}  // namespace msda
