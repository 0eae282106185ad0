#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "msda/classifier.hpp"
#include "msda/dataset.hpp"
#include "msda/generative.hpp"
#include "msda/kernels.hpp"

namespace msda {

constexpr double kSigmaFloor = 1e-6;

// Diagonal Gaussian over the theta coordinates, one row per source domain
// plus a final row for the target.
struct ThetaPosterior {
  Matrix mu;         // (n_sources + 1) x n_theta
  Matrix log_sigma;  // same shape

  int n_domains() const { return static_cast<int>(mu.rows()); }
  int n_sources() const { return n_domains() - 1; }
  int n_theta() const { return static_cast<int>(mu.cols()); }
  int target_row() const { return n_domains() - 1; }

  // exp(log_sigma) with a floor guarding the sigma -> 0 limit
  Matrix sigma() const {
    return log_sigma.array().exp().max(kSigmaFloor).matrix();
  }
};

inline ThetaPosterior init_posterior(int n_sources, int n_theta, double sigma_init) {
  if (n_sources < 1) throw ConfigError("init_posterior: need at least 1 source");
  if (n_theta < 0) throw ConfigError("init_posterior: negative theta count");
  if (sigma_init <= 0.0) throw ConfigError("init_posterior: sigma_init must be > 0");
  ThetaPosterior p;
  p.mu = Matrix::Zero(n_sources + 1, n_theta);
  p.log_sigma = Matrix::Constant(n_sources + 1, n_theta, std::log(sigma_init));
  return p;
}

// KL( N(mu, diag sigma^2) || N(0, I) ) = 1/2 sum_j (-1 - log s_j^2 + m_j^2 + s_j^2)
inline double kl_gaussian_std_normal(const Vector& mu, const Vector& sigma) {
  if (mu.size() != sigma.size()) throw DataError("kl_gaussian_std_normal: shape mismatch");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double s = sigma[j];
    if (s <= 0.0) throw DataError("kl_gaussian_std_normal: sigma must be positive");
    acc += -1.0 - 2.0 * std::log(s) + mu[j] * mu[j] + s * s;
  }
  return 0.5 * acc;
}

inline Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& eps) {
  if (mu.size() != sigma.size() || mu.size() != eps.size())
    throw DataError("reparameterize: shape mismatch");
  return mu + eps.cwiseProduct(sigma.cwiseMax(kSigmaFloor));
}

struct TrainConfig {
  int batch_size = 128;
  int svi_samples = 1;
  int epochs = 300;
  int steps_per_epoch = 0;  // 0: ceil(largest domain / batch_size)
  AdamConfig adam;
  double sigma_init = 0.1;
  int prediction_samples = 20;  // L in the posterior-averaged prediction
  int synthetic_rows = 2000;
  ClassifierConfig classifier;
  GeneratorConfig generator;
  KernelConfig kernel;

  void validate() const {
    if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
    if (svi_samples < 1) throw ConfigError("TrainConfig: svi_samples must be >= 1");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (steps_per_epoch < 0) throw ConfigError("TrainConfig: steps_per_epoch must be >= 0");
    if (sigma_init <= 0.0) throw ConfigError("TrainConfig: sigma_init must be > 0");
    if (prediction_samples < 1) throw ConfigError("TrainConfig: prediction_samples must be >= 1");
    if (synthetic_rows < 2) throw ConfigError("TrainConfig: synthetic_rows must be >= 2");
    classifier.validate();
    generator.validate();
    kernel.validate();
  }
};

// Quantities fixed for a whole training run: kernel bandwidths resolved once
// on the full data, and the per-domain KL weights 1/m.
struct SviContext {
  std::vector<double> module_bandwidth;  // per bundle module
  double target_bandwidth = 1.0;
  std::vector<double> kl_weight;  // per domain, sources first, target last
  std::vector<int> mb_features;   // feature columns the model observes
};

namespace detail {

// Continuous columns of a module's joint block (node features if the node is
// not Y, then parent features in parent order), read from full-width rows.
inline std::vector<int> module_cont_columns(const GeneratorBundle& b, const GeneratorModule& m) {
  std::vector<int> cols;
  if (!m.discrete)
    for (int f : b.dag.nodes[static_cast<std::size_t>(m.node)].features) cols.push_back(f);
  for (int p : m.parents)
    for (int f : b.dag.nodes[static_cast<std::size_t>(p)].features) cols.push_back(f);
  return cols;
}

inline bool module_uses_labels(const GeneratorBundle& b, const GeneratorModule& m) {
  if (m.discrete) return true;
  for (int p : m.parents)
    if (b.dag.nodes[static_cast<std::size_t>(p)].is_y) return true;
  return false;
}

inline Matrix gather_columns(const Matrix& x, const std::vector<int>& cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
  return out;
}

// Module input from real rows: real parent values (Y as exact one-hot), then
// noise, then the theta coordinate broadcast down the batch.
inline Matrix module_real_input(const GeneratorBundle& b, const GeneratorModule& m, const Matrix& x,
                                const Matrix& y_onehot, const Matrix& noise, double theta) {
  const Eigen::Index n = x.rows();
  int width = b.config.noise_dim + (m.theta_coord >= 0 ? 1 : 0);
  for (int p : m.parents) width += b.node_width(p);
  Matrix input(n, width);
  Eigen::Index at = 0;
  for (int p : m.parents) {
    const GraphNode& pn = b.dag.nodes[static_cast<std::size_t>(p)];
    if (pn.is_y) {
      input.middleCols(at, b.dag.n_classes) = y_onehot;
      at += b.dag.n_classes;
    } else {
      for (int f : pn.features) input.col(at++) = x.col(f);
    }
  }
  input.middleCols(at, b.config.noise_dim) = noise;
  at += b.config.noise_dim;
  if (m.theta_coord >= 0) input.col(at) = Vector::Constant(n, theta);
  return input;
}

}  // namespace detail

inline SviContext make_svi_context(const GeneratorBundle& b, const MultiDomainDataset& ds) {
  SviContext ctx;
  ctx.mb_features = b.observed_features();
  auto [pooled_x, pooled_c] = ds.pooled_sources();
  (void)pooled_c;
  for (const GeneratorModule& m : b.modules) {
    const std::vector<int> cols = detail::module_cont_columns(b, m);
    ctx.module_bandwidth.push_back(
        cols.empty() ? 1.0 : median_heuristic(detail::gather_columns(pooled_x, cols)));
  }
  ctx.target_bandwidth = median_heuristic(detail::gather_columns(ds.target_x, ctx.mb_features));
  for (const DomainData& s : ds.sources)
    ctx.kl_weight.push_back(1.0 / static_cast<double>(s.x.rows()));
  ctx.kl_weight.push_back(1.0 / static_cast<double>(ds.target_x.rows()));
  return ctx;
}

// Equal-size minibatches, one per domain; domains at or below the batch size
// contribute all their rows.
struct SviBatch {
  std::vector<Matrix> source_x;
  std::vector<IntVector> source_y;
  Matrix target_x;
};

inline SviBatch draw_batch(const MultiDomainDataset& ds, int batch_size, const Rng& rng) {
  SviBatch batch;
  auto pick = [&](const Matrix& x, const IntVector* y, std::uint64_t key) {
    const int n = static_cast<int>(x.rows());
    std::pair<Matrix, IntVector> out;
    if (n <= batch_size) {
      out.first = x;
      if (y) out.second = *y;
      return out;
    }
    Rng stream = rng.fork("domain", key);
    std::vector<int> idx = stream.sample_without_replacement(n, batch_size);
    out.first.resize(batch_size, x.cols());
    if (y) out.second.resize(batch_size);
    for (int k = 0; k < batch_size; ++k) {
      out.first.row(k) = x.row(idx[static_cast<std::size_t>(k)]);
      if (y) out.second[k] = (*y)[idx[static_cast<std::size_t>(k)]];
    }
    return out;
  };
  for (std::size_t i = 0; i < ds.sources.size(); ++i) {
    auto [x, y] = pick(ds.sources[i].x, &ds.sources[i].y, static_cast<std::uint64_t>(i));
    batch.source_x.push_back(std::move(x));
    batch.source_y.push_back(std::move(y));
  }
  auto [tx, ty] = pick(ds.target_x, nullptr, static_cast<std::uint64_t>(ds.sources.size()));
  (void)ty;
  batch.target_x = std::move(tx);
  return batch;
}

// All stochastic inputs of one objective evaluation, drawn up front so the
// objective itself is a deterministic function (finite-difference checks
// freeze these draws).
struct SviDraw {
  Matrix eps;                                     // n_domains x n_theta
  std::vector<std::vector<Matrix>> source_noise;  // [source][module]: rows x noise_dim
  ComposeNoise target_noise;
};

struct SviNoise {
  std::vector<SviDraw> draws;
};

inline SviNoise draw_svi_noise(const GeneratorBundle& b, const std::vector<int>& source_rows,
                               int target_rows, int svi_samples, const Rng& rng) {
  SviNoise noise;
  const int n_domains = static_cast<int>(source_rows.size()) + 1;
  for (int s = 0; s < svi_samples; ++s) {
    Rng sub = rng.fork("draw", static_cast<std::uint64_t>(s));
    SviDraw draw;
    draw.eps.resize(n_domains, b.n_theta);
    for (int dom = 0; dom < n_domains; ++dom) {
      Rng es = sub.fork("eps", static_cast<std::uint64_t>(dom));
      for (int c = 0; c < b.n_theta; ++c) draw.eps(dom, c) = es.normal();
    }
    for (std::size_t i = 0; i < source_rows.size(); ++i) {
      std::vector<Matrix> per_module;
      Rng ms = sub.fork("source", static_cast<std::uint64_t>(i));
      for (std::size_t j = 0; j < b.modules.size(); ++j) {
        Rng mj = ms.fork(static_cast<std::uint64_t>(j));
        Matrix e(source_rows[i], b.config.noise_dim);
        for (Eigen::Index r = 0; r < e.rows(); ++r)
          for (int c = 0; c < b.config.noise_dim; ++c) e(r, c) = mj.normal();
        per_module.push_back(std::move(e));
      }
      draw.source_noise.push_back(std::move(per_module));
    }
    draw.target_noise = draw_compose_noise(b, target_rows, sub.fork("target"));
    noise.draws.push_back(std::move(draw));
  }
  return noise;
}

struct SviBreakdown {
  Matrix source_mmd;  // n_sources x n_modules
  Matrix source_kl;   // n_sources x n_modules (zero where the module has no theta)
  double target_mmd = 0.0;
  double target_kl = 0.0;
};

struct SviResult {
  double loss = 0.0;
  SviBreakdown breakdown;
  std::vector<MlpGrads> module_grads;  // per bundle module
  Matrix d_mu;                         // n_domains x n_theta
  Matrix d_log_sigma;
};

// One evidence-bound evaluation: per source domain and module, a KL term
// weighted by 1/m plus a joint MMD between real rows over (node, parents) and
// the module's output conditioned on the real parents; for the target, a KL
// term plus a marginal MMD between target rows and full generator samples
// over the observed features. Gradients cover every module parameter and
// every variational parameter.
inline SviResult svi_objective(const GeneratorBundle& b, const ThetaPosterior& post,
                               const SviBatch& batch, const SviContext& ctx,
                               const TrainConfig& cfg, const SviNoise& noise) {
  const int n_sources = static_cast<int>(batch.source_x.size());
  const int n_modules = static_cast<int>(b.modules.size());
  const int n_domains = n_sources + 1;
  if (post.n_domains() != n_domains) throw DataError("svi_objective: posterior/batch mismatch");
  if (post.n_theta() != b.n_theta) throw DataError("svi_objective: posterior/bundle mismatch");
  if (static_cast<int>(ctx.kl_weight.size()) != n_domains ||
      static_cast<int>(ctx.module_bandwidth.size()) != n_modules)
    throw DataError("svi_objective: context does not match");
  if (noise.draws.empty()) throw DataError("svi_objective: no noise draws");
  for (int i = 0; i < n_sources; ++i)
    if (batch.source_x[static_cast<std::size_t>(i)].rows() == 0)
      throw DataError("svi_objective: empty source minibatch");
  if (batch.target_x.rows() == 0) throw DataError("svi_objective: empty target minibatch");

  const Matrix sigma = post.sigma();
  const int S = static_cast<int>(noise.draws.size());
  const double inv_s = 1.0 / static_cast<double>(S);

  SviResult res;
  res.breakdown.source_mmd = Matrix::Zero(n_sources, n_modules);
  res.breakdown.source_kl = Matrix::Zero(n_sources, n_modules);
  res.module_grads.resize(static_cast<std::size_t>(n_modules));
  res.d_mu = Matrix::Zero(n_domains, b.n_theta);
  res.d_log_sigma = Matrix::Zero(n_domains, b.n_theta);

  // sigma gradient passes through exp(log_sigma) unless the floor is active
  auto add_theta_grad = [&](int dom, int coord, double d_theta, const Matrix& eps) {
    res.d_mu(dom, coord) += d_theta;
    const double s = sigma(dom, coord);
    if (s > kSigmaFloor) res.d_log_sigma(dom, coord) += d_theta * eps(dom, coord) * s;
  };

  // KL terms do not depend on the draws.
  for (int i = 0; i < n_sources; ++i) {
    for (int j = 0; j < n_modules; ++j) {
      const int c = b.modules[static_cast<std::size_t>(j)].theta_coord;
      if (c < 0) continue;
      const double w = ctx.kl_weight[static_cast<std::size_t>(i)];
      const double m = post.mu(i, c), s = sigma(i, c);
      const double kl = 0.5 * (-1.0 - 2.0 * std::log(s) + m * m + s * s);
      res.breakdown.source_kl(i, j) = w * kl;
      res.loss += w * kl;
      res.d_mu(i, c) += w * m;
      if (s > kSigmaFloor) res.d_log_sigma(i, c) += w * (s * s - 1.0);
    }
  }
  {
    const int t = post.target_row();
    const double w = ctx.kl_weight.back();
    for (int c = 0; c < b.n_theta; ++c) {
      const double m = post.mu(t, c), s = sigma(t, c);
      const double kl = 0.5 * (-1.0 - 2.0 * std::log(s) + m * m + s * s);
      res.breakdown.target_kl += w * kl;
      res.loss += w * kl;
      res.d_mu(t, c) += w * m;
      if (s > kSigmaFloor) res.d_log_sigma(t, c) += w * (s * s - 1.0);
    }
  }

  for (const SviDraw& draw : noise.draws) {
    if (draw.eps.rows() != n_domains || draw.eps.cols() != b.n_theta)
      throw DataError("svi_objective: noise draw shape mismatch");
    Matrix theta(n_domains, b.n_theta);
    for (int dom = 0; dom < n_domains; ++dom)
      theta.row(dom) = post.mu.row(dom) + draw.eps.row(dom).cwiseProduct(sigma.row(dom));

    for (int i = 0; i < n_sources; ++i) {
      const Matrix& x = batch.source_x[static_cast<std::size_t>(i)];
      const Matrix y_onehot = one_hot(batch.source_y[static_cast<std::size_t>(i)], b.dag.n_classes);
      for (int j = 0; j < n_modules; ++j) {
        const GeneratorModule& m = b.modules[static_cast<std::size_t>(j)];
        const double th = m.theta_coord >= 0 ? theta(i, m.theta_coord) : 0.0;
        Matrix input = detail::module_real_input(
            b, m, x, y_onehot, draw.source_noise[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], th);
        MlpCache cache;
        Matrix out = m.mlp.forward(input, &cache);

        const std::vector<int> cols = detail::module_cont_columns(b, m);
        const bool labeled = detail::module_uses_labels(b, m);
        Matrix real_x = detail::gather_columns(x, cols);
        Matrix fake_x = real_x;
        Matrix real_label(x.rows(), 0), fake_label(x.rows(), 0);
        Matrix fake_probs;
        if (!m.discrete) fake_x.leftCols(m.output_width) = out;
        if (labeled) {
          real_label = y_onehot;
          if (m.discrete) {
            fake_probs = detail::softmax_rows_local(out);
            fake_label = fake_probs;
          } else {
            fake_label = y_onehot;
          }
        }
        Mmd2Result mmd = mmd2_joint_grad(real_x, real_label, fake_x, fake_label,
                                         ctx.module_bandwidth[static_cast<std::size_t>(j)]);
        res.loss += inv_s * mmd.value;
        res.breakdown.source_mmd(i, j) += inv_s * mmd.value;

        Matrix d_out;
        if (m.discrete) {
          d_out = detail::softmax_vjp(fake_probs, mmd.d_fake_label);
        } else {
          d_out = mmd.d_fake_x.leftCols(m.output_width);
        }
        auto [grads, d_input] = m.mlp.backward(cache, d_out);
        accumulate(res.module_grads[static_cast<std::size_t>(j)], grads, inv_s);
        if (m.theta_coord >= 0) {
          const Eigen::Index theta_col = d_input.cols() - 1;
          add_theta_grad(i, m.theta_coord, inv_s * d_input.col(theta_col).sum(), draw.eps);
        }
      }
    }

    {
      const int t = post.target_row();
      ComposeResult comp = compose(b, theta.row(t).transpose(), batch.target_x,
                                   draw.target_noise, YMode::kRelaxed);
      Matrix real_mb = detail::gather_columns(batch.target_x, ctx.mb_features);
      Matrix fake_mb = detail::gather_columns(comp.x, ctx.mb_features);
      Mmd2Result mmd = mmd2_marginal_grad(real_mb, fake_mb, ctx.target_bandwidth);
      res.loss += inv_s * mmd.value;
      res.breakdown.target_mmd += inv_s * mmd.value;

      Matrix d_x = Matrix::Zero(comp.x.rows(), comp.x.cols());
      for (std::size_t k = 0; k < ctx.mb_features.size(); ++k)
        d_x.col(ctx.mb_features[k]) = mmd.d_fake_x.col(static_cast<Eigen::Index>(k));
      ComposeGrads cg = compose_backward(b, comp, d_x, Matrix(), Matrix());
      for (int j = 0; j < n_modules; ++j)
        accumulate(res.module_grads[static_cast<std::size_t>(j)], cg.module_grads[static_cast<std::size_t>(j)], inv_s);
      for (int c = 0; c < b.n_theta; ++c) add_theta_grad(t, c, inv_s * cg.d_theta[c], draw.eps);
    }
  }
  return res;
}

struct TrainCurveRow {
  int epoch = 0;
  double total = 0.0;
  double source_mmd = 0.0;
  double source_kl = 0.0;
  double target_mmd = 0.0;
  double target_kl = 0.0;
};

struct TrainedModel {
  GeneratorBundle bundle;
  ThetaPosterior posterior;
  SviContext context;
  std::vector<TrainCurveRow> curve;
  bool aborted = false;  // non-finite loss hit; parameters are from the last finite step
};

namespace detail {

struct FlatLayout {
  std::vector<int> module_offset;
  int mu_offset = 0;
  int log_sigma_offset = 0;
  int total = 0;
};

inline FlatLayout flat_layout(const GeneratorBundle& b, const ThetaPosterior& post) {
  FlatLayout lay;
  int at = 0;
  for (const GeneratorModule& m : b.modules) {
    lay.module_offset.push_back(at);
    at += m.mlp.param_count();
  }
  lay.mu_offset = at;
  at += static_cast<int>(post.mu.size());
  lay.log_sigma_offset = at;
  at += static_cast<int>(post.log_sigma.size());
  lay.total = at;
  return lay;
}

inline void pack_params(const GeneratorBundle& b, const ThetaPosterior& post,
                        const FlatLayout& lay, Vector& out) {
  out.resize(lay.total);
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    const Mlp& mlp = b.modules[j].mlp;
    mlp.flatten_params(out.segment(lay.module_offset[j], mlp.param_count()));
  }
  int k = lay.mu_offset;
  for (Eigen::Index i = 0; i < post.mu.rows(); ++i)
    for (Eigen::Index c = 0; c < post.mu.cols(); ++c) out[k++] = post.mu(i, c);
  for (Eigen::Index i = 0; i < post.log_sigma.rows(); ++i)
    for (Eigen::Index c = 0; c < post.log_sigma.cols(); ++c) out[k++] = post.log_sigma(i, c);
}

inline void unpack_params(const Vector& in, const FlatLayout& lay, GeneratorBundle& b,
                          ThetaPosterior& post) {
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    Mlp& mlp = b.modules[j].mlp;
    mlp.unflatten_params(in.segment(lay.module_offset[j], mlp.param_count()));
  }
  int k = lay.mu_offset;
  for (Eigen::Index i = 0; i < post.mu.rows(); ++i)
    for (Eigen::Index c = 0; c < post.mu.cols(); ++c) post.mu(i, c) = in[k++];
  for (Eigen::Index i = 0; i < post.log_sigma.rows(); ++i)
    for (Eigen::Index c = 0; c < post.log_sigma.cols(); ++c) post.log_sigma(i, c) = in[k++];
}

inline void pack_grads(const SviResult& res, const GeneratorBundle& b, const FlatLayout& lay,
                       Vector& out) {
  out.setZero(lay.total);
  for (std::size_t j = 0; j < b.modules.size(); ++j) {
    const Mlp& mlp = b.modules[j].mlp;
    if (!res.module_grads[j].dW.empty())
      Mlp::flatten_grads(res.module_grads[j], out.segment(lay.module_offset[j], mlp.param_count()));
  }
  int k = lay.mu_offset;
  for (Eigen::Index i = 0; i < res.d_mu.rows(); ++i)
    for (Eigen::Index c = 0; c < res.d_mu.cols(); ++c) out[k++] = res.d_mu(i, c);
  for (Eigen::Index i = 0; i < res.d_log_sigma.rows(); ++i)
    for (Eigen::Index c = 0; c < res.d_log_sigma.cols(); ++c) out[k++] = res.d_log_sigma(i, c);
}

}  // namespace detail

// Joint Adam loop over generator parameters and variational parameters.
inline TrainedModel train(const MultiDomainDataset& ds, const AugmentedDag& dag,
                          const TrainConfig& cfg, const Rng& rng) {
  cfg.validate();
  ds.validate();
  TrainedModel model;
  model.bundle = build_bundle(dag, cfg.generator, rng.fork("bundle"));
  model.posterior = init_posterior(ds.n_sources(), model.bundle.n_theta, cfg.sigma_init);
  model.context = make_svi_context(model.bundle, ds);

  std::vector<int> source_batch_rows;
  Eigen::Index largest = ds.target_x.rows();
  for (const DomainData& s : ds.sources) largest = std::max(largest, s.x.rows());
  for (const DomainData& s : ds.sources)
    source_batch_rows.push_back(static_cast<int>(std::min<Eigen::Index>(s.x.rows(), cfg.batch_size)));
  const int target_batch_rows =
      static_cast<int>(std::min<Eigen::Index>(ds.target_x.rows(), cfg.batch_size));
  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((largest + cfg.batch_size - 1) / cfg.batch_size);

  detail::FlatLayout lay = detail::flat_layout(model.bundle, model.posterior);
  Vector params;
  detail::pack_params(model.bundle, model.posterior, lay, params);
  Vector grads(lay.total);
  AdamState opt(lay.total, cfg.adam);
  Vector last_finite = params;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    TrainCurveRow row;
    row.epoch = epoch;
    int finite_steps = 0;
    for (int step = 0; step < steps; ++step) {
      const std::uint64_t gstep = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(steps) +
                                  static_cast<std::uint64_t>(step);
      SviBatch batch = draw_batch(ds, cfg.batch_size, rng.fork("batch", gstep));
      SviNoise noise = draw_svi_noise(model.bundle, source_batch_rows, target_batch_rows,
                                      cfg.svi_samples, rng.fork("noise", gstep));
      SviResult res = svi_objective(model.bundle, model.posterior, batch, model.context, cfg, noise);
      if (!std::isfinite(res.loss)) {
        detail::unpack_params(last_finite, lay, model.bundle, model.posterior);
        model.aborted = true;
        break;
      }
      last_finite = params;
      row.total += res.loss;
      row.source_mmd += res.breakdown.source_mmd.sum();
      row.source_kl += res.breakdown.source_kl.sum();
      row.target_mmd += res.breakdown.target_mmd;
      row.target_kl += res.breakdown.target_kl;
      ++finite_steps;
      detail::pack_grads(res, model.bundle, lay, grads);
      if (adam_step(opt, params, grads))
        detail::unpack_params(params, lay, model.bundle, model.posterior);
    }
    if (finite_steps > 0) {
      const double inv = 1.0 / static_cast<double>(finite_steps);
      row.total *= inv;
      row.source_mmd *= inv;
      row.source_kl *= inv;
      row.target_mmd *= inv;
      row.target_kl *= inv;
      model.curve.push_back(row);
    }
    if (model.aborted) break;
  }
  return model;
}

struct PredictConfig {
  int samples = 20;  // L
  int synthetic_rows = 2000;
  bool mean_theta = false;  // skip the posterior draw, use mu directly
  ClassifierConfig classifier;

  void validate() const {
    if (samples < 1) throw ConfigError("PredictConfig: samples must be >= 1");
    if (synthetic_rows < 2) throw ConfigError("PredictConfig: synthetic_rows must be >= 2");
    classifier.validate();
  }
};

// Posterior-averaged prediction: per theta draw, generate a labeled synthetic
// set conditioned on bootstrapped target rows, train a fresh classifier on the
// observed features, and average the per-row class probabilities over draws.
// The bootstrap pool is the lexicographically sorted copy of the target rows,
// so the output is invariant to target row order.
inline Matrix predict_target(const TrainedModel& model, const Matrix& x_target,
                             const PredictConfig& cfg, const Rng& rng) {
  cfg.validate();
  if (x_target.rows() == 0) throw DataError("predict_target: empty target");
  if (x_target.cols() != model.bundle.feature_width())
    throw DataError("predict_target: feature width mismatch");

  const int m = static_cast<int>(x_target.rows());
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index c = 0; c < x_target.cols(); ++c) {
      if (x_target(a, c) < x_target(b, c)) return true;
      if (x_target(a, c) > x_target(b, c)) return false;
    }
    return false;
  });
  Matrix pool(m, x_target.cols());
  for (int i = 0; i < m; ++i) pool.row(i) = x_target.row(order[static_cast<std::size_t>(i)]);

  const int t = model.posterior.target_row();
  const Vector mu = model.posterior.mu.row(t).transpose();
  const Vector sigma = model.posterior.sigma().row(t).transpose();
  const std::vector<int>& feats = model.context.mb_features;
  Matrix x_eval = detail::gather_columns(x_target, feats);

  Matrix probs = Matrix::Zero(m, model.bundle.dag.n_classes);
  for (int l = 0; l < cfg.samples; ++l) {
    Rng sub = rng.fork("draw", static_cast<std::uint64_t>(l));
    Vector theta = mu;
    if (!cfg.mean_theta) {
      Rng es = sub.fork("eps");
      Vector eps(model.bundle.n_theta);
      for (int c = 0; c < model.bundle.n_theta; ++c) eps[c] = es.normal();
      theta = reparameterize(mu, sigma, eps);
    }
    Rng cs = sub.fork("cond");
    Matrix cond(cfg.synthetic_rows, x_target.cols());
    for (int r = 0; r < cfg.synthetic_rows; ++r) cond.row(r) = pool.row(cs.below(m));
    DomainSample synth =
        sample_domain(model.bundle, theta, cond, cfg.synthetic_rows, sub.fork("sample"));
    SoftmaxClassifier clf =
        train_classifier(detail::gather_columns(synth.x, feats), synth.y,
                         model.bundle.dag.n_classes, cfg.classifier, sub.fork("clf"));
    probs += clf.predict_proba(x_eval);
  }
  probs /= static_cast<double>(cfg.samples);
  return probs;
}

// --- closed-form demo: posterior of a variance-splitting parameter ---

struct DensityGrid {
  Vector grid;
  Vector density;
};

inline double density_mean(const DensityGrid& d) {
  double total = 0.0, first = 0.0;
  for (Eigen::Index k = 0; k + 1 < d.grid.size(); ++k) {
    const double w = d.grid[k + 1] - d.grid[k];
    total += 0.5 * w * (d.density[k] + d.density[k + 1]);
    first += 0.5 * w * (d.grid[k] * d.density[k] + d.grid[k + 1] * d.density[k + 1]);
  }
  return first / total;
}

inline double density_std(const DensityGrid& d) {
  const double mean = density_mean(d);
  double total = 0.0, second = 0.0;
  for (Eigen::Index k = 0; k + 1 < d.grid.size(); ++k) {
    const double w = d.grid[k + 1] - d.grid[k];
    total += 0.5 * w * (d.density[k] + d.density[k + 1]);
    auto sq = [&](Eigen::Index i) {
      return (d.grid[i] - mean) * (d.grid[i] - mean) * d.density[i];
    };
    second += 0.5 * w * (sq(k) + sq(k + 1));
  }
  return std::sqrt(second / total);
}

inline double density_mode(const DensityGrid& d) {
  Eigen::Index arg = 0;
  d.density.maxCoeff(&arg);
  return d.grid[arg];
}

// Posterior of the label-mechanism variance share theta_Y given an observed
// feature variance v, when theta_Y ~ Gamma(shape_y, scale_y), the remaining
// share theta_X ~ Gamma(shape_x, scale_x), and v = theta_Y + theta_X. The
// density lives on (0, v); an interior grid avoids endpoint singularities and
// trapezoidal normalization makes it integrate to one exactly on the grid.
inline DensityGrid gamma_posterior_demo(double observed_var_x, int resolution = 512,
                                        double shape_y = 3.0, double scale_y = 1.0,
                                        double shape_x = 1.5, double scale_x = 1.0) {
  if (observed_var_x <= 0.0) throw ConfigError("gamma_posterior_demo: observed variance must be > 0");
  if (resolution < 8) throw ConfigError("gamma_posterior_demo: resolution must be >= 8");
  if (shape_y <= 0.0 || scale_y <= 0.0 || shape_x <= 0.0 || scale_x <= 0.0)
    throw ConfigError("gamma_posterior_demo: shapes and scales must be > 0");
  const double v = observed_var_x;
  DensityGrid out;
  out.grid.resize(resolution);
  Vector log_density(resolution);
  for (int k = 0; k < resolution; ++k) {
    const double th = v * static_cast<double>(k + 1) / static_cast<double>(resolution + 1);
    out.grid[k] = th;
    log_density[k] = (shape_y - 1.0) * std::log(th) - th / scale_y +
                     (shape_x - 1.0) * std::log(v - th) - (v - th) / scale_x;
  }
  const double peak = log_density.maxCoeff();
  out.density = (log_density.array() - peak).exp().matrix();
  double integral = 0.0;
  for (int k = 0; k + 1 < resolution; ++k)
    integral += 0.5 * (out.grid[k + 1] - out.grid[k]) * (out.density[k] + out.density[k + 1]);
  if (integral <= 0.0 || !std::isfinite(integral))
    throw NumericError("gamma_posterior_demo: degenerate density");
  out.density /= integral;
  return out;
}

// Exact Gamma(shape, scale) pdf sampled on [0, hi]; the prior the demo
// conditions away from.
inline DensityGrid gamma_prior_pdf(double hi, int resolution = 512, double shape = 3.0,
                                   double scale = 1.0) {
  if (hi <= 0.0) throw ConfigError("gamma_prior_pdf: grid limit must be > 0");
  if (resolution < 8) throw ConfigError("gamma_prior_pdf: resolution must be >= 8");
  if (shape <= 0.0 || scale <= 0.0) throw ConfigError("gamma_prior_pdf: bad parameters");
  DensityGrid out;
  out.grid.resize(resolution);
  out.density.resize(resolution);
  const double norm = std::tgamma(shape) * std::pow(scale, shape);
  for (int k = 0; k < resolution; ++k) {
    const double th = hi * static_cast<double>(k) / static_cast<double>(resolution - 1);
    out.grid[k] = th;
    out.density[k] =
        th <= 0.0 ? (shape > 1.0 ? 0.0 : (shape == 1.0 ? 1.0 / norm : 0.0))
                  : std::pow(th, shape - 1.0) * std::exp(-th / scale) / norm;
  }
  return out;
}

}  // namespace msda
