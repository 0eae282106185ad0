#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "msda/graph.hpp"
#include "msda/kernels.hpp"
#include "msda/neural.hpp"
#include "msda/rng.hpp"

namespace msda {

struct GeneratorConfig {
  int hidden = 32;
  int noise_dim = 1;
  double gumbel_temperature = 0.5;
  Activation activation = Activation::kTanh;

  void validate() const {
    if (hidden < 1) throw ConfigError("GeneratorConfig: hidden must be >= 1");
    if (noise_dim < 1) throw ConfigError("GeneratorConfig: noise_dim must be >= 1");
    if (gumbel_temperature <= 0.0)
      throw ConfigError("GeneratorConfig: gumbel_temperature must be > 0");
  }
};

// One implicit conditional model: node value = mlp(parents, noise, theta).
// Input layout: parent value blocks in ascending node order (Y contributes
// n_classes one-hot columns, a feature supernode one column per feature),
// then noise_dim noise columns, then one theta column if the node changes.
struct GeneratorModule {
  int node = -1;
  std::vector<int> parents;  // dag node indices, ascending
  int theta_coord = -1;      // index into the bundle theta vector, -1 if fixed
  bool discrete = false;     // true for Y: outputs class logits
  int output_width = 0;
  Mlp mlp;
};

class GeneratorBundle {
 public:
  AugmentedDag dag;
  GeneratorConfig config;
  std::vector<GeneratorModule> modules;  // topological order
  std::vector<int> module_of_node;       // dag node -> module index or -1
  int n_theta = 0;                       // theta coordinates (changing groups among modules)
  std::vector<int> group_coord;          // dag theta group -> coordinate or -1

  int feature_width() const { return static_cast<int>(dag.feature_names.size()); }
  int node_width(int v) const {
    const GraphNode& n = dag.nodes[static_cast<std::size_t>(v)];
    return n.is_y ? dag.n_classes : static_cast<int>(n.features.size());
  }
  int y_module() const {
    const int m = module_of_node[static_cast<std::size_t>(dag.y_index())];
    if (m < 0) throw DataError("generator bundle: Y module missing");
    return m;
  }
  // Features not produced by any module; their values come from conditioning rows.
  std::vector<int> conditioning_features() const {
    std::vector<int> out;
    for (int v = 0; v < dag.size(); ++v) {
      if (dag.nodes[static_cast<std::size_t>(v)].is_y) continue;
      if (module_of_node[static_cast<std::size_t>(v)] >= 0) continue;
      for (int f : dag.nodes[static_cast<std::size_t>(v)].features) out.push_back(f);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<int> generated_features() const {
    std::vector<int> out;
    for (const GeneratorModule& m : modules)
      if (!m.discrete)
        for (int f : dag.nodes[static_cast<std::size_t>(m.node)].features) out.push_back(f);
    std::sort(out.begin(), out.end());
    return out;
  }
  // All features the dag mentions, ascending: the classifier input space.
  std::vector<int> observed_features() const {
    std::vector<int> out;
    for (const GraphNode& n : dag.nodes)
      for (int f : n.features) out.push_back(f);
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Modules for Y and each child of Y; changing nodes gain a theta input, with
// merged groups sharing one coordinate.
inline GeneratorBundle build_bundle(const AugmentedDag& dag, const GeneratorConfig& config,
                                    const Rng& rng) {
  config.validate();
  if (!dag.fully_directed()) throw DataError("build_bundle: dag has undirected edges");
  if (!dag.is_acyclic()) throw DataError("build_bundle: dag has a cycle");
  GeneratorBundle b;
  b.dag = dag;
  b.config = config;
  b.module_of_node.assign(static_cast<std::size_t>(dag.size()), -1);

  const int y = dag.y_index();
  std::vector<char> in_v(static_cast<std::size_t>(dag.size()), 0);
  in_v[static_cast<std::size_t>(y)] = 1;
  for (int c : dag.children(y)) in_v[static_cast<std::size_t>(c)] = 1;

  b.group_coord.assign(dag.theta_groups.size(), -1);
  for (std::size_t g = 0; g < dag.theta_groups.size(); ++g) {
    bool touches_v = false;
    for (int v : dag.theta_groups[g])
      if (in_v[static_cast<std::size_t>(v)]) touches_v = true;
    if (touches_v) b.group_coord[g] = b.n_theta++;
  }

  for (int v : dag.topological_order()) {
    if (!in_v[static_cast<std::size_t>(v)]) continue;
    GeneratorModule m;
    m.node = v;
    m.parents = dag.parents(v);
    std::sort(m.parents.begin(), m.parents.end());
    m.discrete = dag.nodes[static_cast<std::size_t>(v)].is_y;
    m.output_width = b.node_width(v);
    const int grp = dag.theta_group_of(v);
    if (grp >= 0) m.theta_coord = b.group_coord[static_cast<std::size_t>(grp)];
    int in_width = config.noise_dim + (m.theta_coord >= 0 ? 1 : 0);
    for (int p : m.parents) in_width += b.node_width(p);
    m.mlp = Mlp({in_width, config.hidden, m.output_width}, config.activation,
                rng.fork("module", static_cast<std::uint64_t>(v)));
    b.module_of_node[static_cast<std::size_t>(v)] = static_cast<int>(b.modules.size());
    b.modules.push_back(std::move(m));
  }
  return b;
}

// Frozen stochastic inputs for one generator pass over n rows.
struct ComposeNoise {
  std::vector<Matrix> module_noise;  // per module: n x noise_dim
  Matrix y_gumbel;                   // n x n_classes

  Eigen::Index rows() const { return y_gumbel.rows(); }
};

inline ComposeNoise draw_compose_noise(const GeneratorBundle& b, int n, const Rng& rng) {
  if (n < 1) throw DataError("draw_compose_noise: n must be >= 1");
  ComposeNoise noise;
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    Rng stream = rng.fork("noise", static_cast<std::uint64_t>(j));
    Matrix e(n, b.config.noise_dim);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < b.config.noise_dim; ++c) e(r, c) = stream.normal();
    noise.module_noise.push_back(std::move(e));
  }
  Rng gstream = rng.fork("gumbel");
  noise.y_gumbel.resize(n, b.dag.n_classes);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int c = 0; c < b.dag.n_classes; ++c) noise.y_gumbel(r, c) = gstream.gumbel();
  return noise;
}

enum class YMode { kRelaxed, kHard };

struct ComposeResult {
  Matrix x;        // n x feature_width; generated columns overwritten, rest from conditioning
  Matrix y_logits;
  Matrix y_probs;  // plain softmax of logits
  Matrix y_value;  // what child modules consumed: relaxed softmax or hard one-hot
  IntVector y_hard;
  YMode mode = YMode::kHard;
  std::vector<MlpCache> caches;  // per module
};

namespace detail {

inline Matrix softmax_rows_local(const Matrix& z) {
  Matrix p = z;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Row-wise vector-Jacobian product of softmax s: ds -> s .* (ds - (ds . s)).
inline Matrix softmax_vjp(const Matrix& s, const Matrix& ds) {
  Matrix out = s;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double dot = ds.row(i).dot(s.row(i));
    out.row(i) = s.row(i).cwiseProduct(ds.row(i) - Eigen::RowVectorXd::Constant(s.cols(), dot));
  }
  return out;
}

}  // namespace detail

// Runs the bundle in topological order. Conditioning rows supply values for
// features the bundle does not generate (they are copied into the output);
// during training the label fed to children is a temperature-softmax
// relaxation so gradients reach Y's module, while kHard draws a one-hot label.
inline ComposeResult compose(const GeneratorBundle& b, const Vector& theta,
                             const Matrix& conditioning, const ComposeNoise& noise, YMode mode) {
  const Eigen::Index n = noise.rows();
  if (theta.size() != b.n_theta) throw DataError("compose: theta assignment has wrong size");
  const std::vector<int> cond = b.conditioning_features();
  if (!cond.empty()) {
    if (conditioning.rows() != n)
      throw DataError("compose: conditioning rows must match the sample count");
    if (conditioning.cols() != b.feature_width())
      throw DataError("compose: conditioning width must equal the feature space");
  }

  ComposeResult res;
  res.mode = mode;
  res.x = conditioning.rows() == n ? conditioning : Matrix::Zero(n, b.feature_width());
  res.caches.resize(b.modules.size());

  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    const GeneratorModule& m = b.modules[j];
    int in_width = b.config.noise_dim + (m.theta_coord >= 0 ? 1 : 0);
    for (int p : m.parents) in_width += b.node_width(p);
    Matrix input(n, in_width);
    Eigen::Index at = 0;
    for (int p : m.parents) {
      const GraphNode& pn = b.dag.nodes[static_cast<std::size_t>(p)];
      if (pn.is_y) {
        if (res.y_value.rows() != n)
          throw DataError("compose: module ordering placed a Y consumer before Y");
        input.middleCols(at, b.dag.n_classes) = res.y_value;
        at += b.dag.n_classes;
      } else {
        for (int f : pn.features) input.col(at++) = res.x.col(f);
      }
    }
    input.middleCols(at, b.config.noise_dim) = noise.module_noise[j];
    at += b.config.noise_dim;
    if (m.theta_coord >= 0) input.col(at) = Vector::Constant(n, theta[m.theta_coord]);

    Matrix out = m.mlp.forward(input, &res.caches[j]);
    if (m.discrete) {
      res.y_logits = out;
      res.y_probs = detail::softmax_rows_local(out);
      Matrix perturbed = out + noise.y_gumbel;
      res.y_hard.resize(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        Eigen::Index arg = 0;
        perturbed.row(r).maxCoeff(&arg);
        res.y_hard[r] = static_cast<int>(arg);
      }
      if (mode == YMode::kRelaxed) {
        res.y_value = detail::softmax_rows_local(perturbed / b.config.gumbel_temperature);
      } else {
        res.y_value = Matrix::Zero(n, b.dag.n_classes);
        for (Eigen::Index r = 0; r < n; ++r) res.y_value(r, res.y_hard[r]) = 1.0;
      }
    } else {
      const std::vector<int>& feats = b.dag.nodes[static_cast<std::size_t>(m.node)].features;
      for (std::size_t k = 0; k < feats.size(); ++k)
        res.x.col(feats[k]) = out.col(static_cast<Eigen::Index>(k));
    }
  }
  if (res.y_value.rows() != n) throw DataError("compose: bundle lacks a Y module");
  return res;
}

struct ComposeGrads {
  std::vector<MlpGrads> module_grads;  // per module
  Vector d_theta;
};

// Reverse sweep through the composed generator. d_x carries gradients on the
// generated feature columns (full-width matrix; non-generated columns are
// ignored), d_y_value on the label block children consumed, d_y_probs on the
// plain softmax. Pass empty matrices for absent terms. In kHard mode the
// sampled label is a constant, so d_y_value contributes nothing.
inline ComposeGrads compose_backward(const GeneratorBundle& b, const ComposeResult& res,
                                     const Matrix& d_x, const Matrix& d_y_value,
                                     const Matrix& d_y_probs) {
  const Eigen::Index n = res.y_value.rows();
  ComposeGrads g;
  g.module_grads.resize(b.modules.size());
  g.d_theta = Vector::Zero(b.n_theta);

  Matrix pend_x = d_x.size() > 0 ? d_x : Matrix::Zero(n, b.feature_width());
  if (pend_x.rows() != n || pend_x.cols() != b.feature_width())
    throw DataError("compose_backward: d_x shape mismatch");
  Matrix pend_y_value =
      d_y_value.size() > 0 ? d_y_value : Matrix::Zero(n, b.dag.n_classes);
  Matrix pend_y_probs =
      d_y_probs.size() > 0 ? d_y_probs : Matrix::Zero(n, b.dag.n_classes);

  for (int j = static_cast<int>(b.modules.size()) - 1; j >= 0; --j) {
    const GeneratorModule& m = b.modules[static_cast<std::size_t>(j)];
    Matrix d_out;
    if (m.discrete) {
      d_out = detail::softmax_vjp(res.y_probs, pend_y_probs);
      if (res.mode == YMode::kRelaxed)
        d_out += detail::softmax_vjp(res.y_value, pend_y_value) / b.config.gumbel_temperature;
    } else {
      const std::vector<int>& feats = b.dag.nodes[static_cast<std::size_t>(m.node)].features;
      d_out.resize(n, static_cast<Eigen::Index>(feats.size()));
      for (std::size_t k = 0; k < feats.size(); ++k)
        d_out.col(static_cast<Eigen::Index>(k)) = pend_x.col(feats[k]);
    }
    auto [grads, d_input] = m.mlp.backward(res.caches[static_cast<std::size_t>(j)], d_out);
    g.module_grads[static_cast<std::size_t>(j)] = std::move(grads);

    Eigen::Index at = 0;
    for (int p : m.parents) {
      const GraphNode& pn = b.dag.nodes[static_cast<std::size_t>(p)];
      if (pn.is_y) {
        pend_y_value += d_input.middleCols(at, b.dag.n_classes);
        at += b.dag.n_classes;
      } else if (b.module_of_node[static_cast<std::size_t>(p)] >= 0) {
        for (int f : pn.features) pend_x.col(f) += d_input.col(at++);
      } else {
        at += static_cast<Eigen::Index>(pn.features.size());  // real conditioning values
      }
    }
    at += b.config.noise_dim;
    if (m.theta_coord >= 0) g.d_theta[m.theta_coord] += d_input.col(at).sum();
  }
  return g;
}

struct DomainSample {
  Matrix x;  // n x feature_width
  IntVector y;
  Matrix y_probs;
};

// Inference-time generation: one theta vector shared by all n rows, labels
// sampled hard, noise fresh per row from the given stream.
inline DomainSample sample_domain(const GeneratorBundle& b, const Vector& theta,
                                  const Matrix& conditioning, int n, const Rng& rng) {
  if (n < 1) throw DataError("sample_domain: n must be >= 1");
  ComposeNoise noise = draw_compose_noise(b, n, rng);
  ComposeResult res = compose(b, theta, conditioning, noise, YMode::kHard);
  DomainSample s;
  s.x = std::move(res.x);
  s.y = std::move(res.y_hard);
  s.y_probs = std::move(res.y_probs);
  return s;
}

// Checkpointing: per-module network blobs next to the dag document.
inline void save_bundle(const GeneratorBundle& b, const std::string& dir) {
  graph_to_json_file(b.dag, dir + "/dag.json");
  nlohmann::json meta{{"n_modules", b.modules.size()},
                      {"n_theta", b.n_theta},
                      {"hidden", b.config.hidden},
                      {"noise_dim", b.config.noise_dim},
                      {"gumbel_temperature", b.config.gumbel_temperature},
                      {"activation", to_string(b.config.activation)}};
  std::ofstream out(dir + "/bundle.json");
  if (!out) throw DataError("cannot write " + dir + "/bundle.json");
  out << meta.dump(2) << "\n";
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    const std::string stem = dir + "/module_" + std::to_string(j);
    save_mlp(b.modules[j].mlp, stem + ".bin", stem + ".json");
  }
}

inline GeneratorBundle load_bundle(const std::string& dir) {
  AugmentedDag dag = graph_from_json_file(dir + "/dag.json");
  std::ifstream in(dir + "/bundle.json");
  if (!in) throw DataError("cannot read " + dir + "/bundle.json");
  nlohmann::json meta = nlohmann::json::parse(in);
  GeneratorConfig cfg;
  cfg.hidden = meta.at("hidden").get<int>();
  cfg.noise_dim = meta.at("noise_dim").get<int>();
  cfg.gumbel_temperature = meta.at("gumbel_temperature").get<double>();
  cfg.activation = activation_from_string(meta.at("activation").get<std::string>());
  GeneratorBundle b = build_bundle(dag, cfg, Rng(0));
  if (b.modules.size() != meta.at("n_modules").get<std::size_t>() ||
      b.n_theta != meta.at("n_theta").get<int>())
    throw DataError("bundle checkpoint does not match its dag");
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    const std::string stem = dir + "/module_" + std::to_string(j);
    b.modules[j].mlp = load_mlp(stem + ".bin", stem + ".json");
  }
  return b;
}

}  // namespace msda
