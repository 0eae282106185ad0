#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "msda/graph.hpp"
#include "msda/inference.hpp"

using msda::AugmentedDag;
using msda::GeneratorBundle;
using msda::GeneratorConfig;
using msda::IntVector;
using msda::Matrix;
using msda::MultiDomainDataset;
using msda::Rng;
using msda::ThetaPosterior;
using msda::TrainConfig;
using msda::Vector;

namespace {

// KL(N(mu, sigma^2) || N(0,1)) by Simpson quadrature, no closed form.
double kl_quadrature(double mu, double sigma) {
  auto log_q = [&](double t) {
    const double z = (t - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
  };
  auto f = [&](double t) {
    const double lq = log_q(t);
    const double lp = -0.5 * t * t - 0.5 * std::log(2.0 * M_PI);
    return std::exp(lq) * (lq - lp);
  };
  const double lo = mu - 14.0 * sigma - 1.0, hi = mu + 14.0 * sigma + 1.0;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int k = 1; k < n; ++k) acc += f(lo + k * h) * (k % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

Matrix gather(const Matrix& x, const std::vector<int>& cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
  return out;
}

// X1 -> Y -> X2 with both generated mechanisms shifting across domains.
AugmentedDag chain_dag() {
  AugmentedDag g = msda::make_dag(2);
  g.set_directed(0, 2);
  g.set_directed(2, 1);
  g.nodes[1].changing = true;
  g.nodes[2].changing = true;
  msda::assign_singleton_theta_groups(g);
  g.validate();
  return g;
}

// y ~ Bernoulli(sigmoid(1.5 x0 + a_d)), x1 = 2y - 1 + b_d + 0.5 eps
MultiDomainDataset chain_dataset(int n_sources, int n, Rng rng) {
  MultiDomainDataset ds;
  ds.feature_names = {"x1", "x2"};
  ds.n_classes = 2;
  for (int d = 0; d <= n_sources; ++d) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(d));
    const double a = 0.4 * (d - 1), b = 0.3 * d;
    Matrix x(n, 2);
    IntVector y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = stream.normal();
      const double p = 1.0 / (1.0 + std::exp(-(1.5 * x(i, 0) + a)));
      y[i] = stream.uniform() < p ? 1 : 0;
      x(i, 1) = 2.0 * y[i] - 1.0 + b + 0.5 * stream.normal();
    }
    if (d == n_sources) {
      ds.target_x = x;
    } else {
      ds.sources.push_back({std::move(x), std::move(y)});
    }
  }
  return ds;
}

// Y -> X1 only; the label frequency is the single per-domain dial.
AugmentedDag label_shift_dag() {
  AugmentedDag g = msda::make_dag(1);
  g.set_directed(1, 0);
  g.nodes[1].changing = true;
  msda::assign_singleton_theta_groups(g);
  g.validate();
  return g;
}

// y ~ Bernoulli(sigmoid(shift_d)), x = 2y - 1 + 0.3 eps; last entry is the
// unlabeled target.
MultiDomainDataset label_shift_dataset(const std::vector<double>& shift, int n, Rng rng) {
  MultiDomainDataset ds;
  ds.feature_names = {"x1"};
  ds.n_classes = 2;
  for (std::size_t d = 0; d < shift.size(); ++d) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(d));
    const double p = 1.0 / (1.0 + std::exp(-shift[d]));
    Matrix x(n, 1);
    IntVector y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = stream.uniform() < p ? 1 : 0;
      x(i, 0) = 2.0 * y[i] - 1.0 + 0.3 * stream.normal();
    }
    if (d + 1 == shift.size()) {
      ds.target_x = x;
    } else {
      ds.sources.push_back({std::move(x), std::move(y)});
    }
  }
  return ds;
}

msda::SviBatch full_batch(const MultiDomainDataset& ds) {
  msda::SviBatch batch;
  for (const msda::DomainData& s : ds.sources) {
    batch.source_x.push_back(s.x);
    batch.source_y.push_back(s.y);
  }
  batch.target_x = ds.target_x;
  return batch;
}

// A module's discrepancy rebuilt outside the objective: assemble the input
// (parent blocks, noise, theta column), push it through the network, and
// score the joint match with the generic estimator.
double module_mmd_oracle(const GeneratorBundle& b, const msda::GeneratorModule& m,
                         const Matrix& x, const IntVector& y, const Matrix& noise,
                         double theta, double bandwidth) {
  const Eigen::Index n = x.rows();
  const Matrix y1h = msda::one_hot(y, b.dag.n_classes);
  int width = b.config.noise_dim + (m.theta_coord >= 0 ? 1 : 0);
  for (int p : m.parents) width += b.node_width(p);
  Matrix input(n, width);
  Eigen::Index at = 0;
  bool labeled = m.discrete;
  for (int p : m.parents) {
    const msda::GraphNode& pn = b.dag.nodes[static_cast<std::size_t>(p)];
    if (pn.is_y) {
      input.middleCols(at, b.dag.n_classes) = y1h;
      at += b.dag.n_classes;
      labeled = true;
    } else {
      for (int f : pn.features) input.col(at++) = x.col(f);
    }
  }
  input.middleCols(at, b.config.noise_dim) = noise;
  at += b.config.noise_dim;
  if (m.theta_coord >= 0) input.col(at) = Vector::Constant(n, theta);
  Matrix out = m.mlp.forward(input);

  std::vector<int> cols;
  if (!m.discrete)
    for (int f : b.dag.nodes[static_cast<std::size_t>(m.node)].features) cols.push_back(f);
  for (int p : m.parents)
    for (int f : b.dag.nodes[static_cast<std::size_t>(p)].features) cols.push_back(f);
  Matrix real_x = gather(x, cols);
  Matrix fake_x = real_x;
  if (!m.discrete) fake_x.leftCols(m.output_width) = out;
  Matrix real_label(n, 0), fake_label(n, 0);
  if (labeled) {
    real_label = y1h;
    fake_label = m.discrete ? msda::softmax_rows(out) : y1h;
  }
  return msda::mmd2_joint_grad(real_x, real_label, fake_x, fake_label, bandwidth, false).value;
}

double label_frequency(const GeneratorBundle& b, const Vector& theta, int n, Rng rng) {
  Matrix cond = Matrix::Zero(n, b.feature_width());
  msda::DomainSample s = msda::sample_domain(b, theta, cond, n, rng);
  double ones = 0.0;
  for (Eigen::Index i = 0; i < s.y.size(); ++i) ones += s.y[i] == 1 ? 1.0 : 0.0;
  return ones / static_cast<double>(n);
}

}  // namespace

TEST_CASE("the gaussian divergence penalty matches numerical integration") {
  REQUIRE(msda::kl_gaussian_std_normal(Vector::Zero(3), Vector::Ones(3)) ==
          Catch::Approx(0.0).margin(1e-12));
  Vector mu1 = Vector::Ones(1), s1 = Vector::Ones(1);
  REQUIRE(msda::kl_gaussian_std_normal(mu1, s1) == Catch::Approx(0.5).margin(1e-12));

  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const double mu = rng.uniform(-2.0, 2.0);
    const double sigma = rng.uniform(0.3, 2.5);
    Vector m(1), s(1);
    m << mu;
    s << sigma;
    REQUIRE(msda::kl_gaussian_std_normal(m, s) ==
            Catch::Approx(kl_quadrature(mu, sigma)).margin(1e-6));
  }

  // vector input sums the per-coordinate terms
  Vector mv(3), sv(3);
  mv << 0.5, -1.2, 2.0;
  sv << 0.4, 1.7, 0.9;
  double want = 0.0;
  for (int j = 0; j < 3; ++j) want += kl_quadrature(mv[j], sv[j]);
  REQUIRE(msda::kl_gaussian_std_normal(mv, sv) == Catch::Approx(want).margin(1e-6));

  Vector bad(2);
  bad << 1.0, -0.5;
  REQUIRE_THROWS_AS(msda::kl_gaussian_std_normal(mv, bad), msda::DataError);
  Vector zero_sigma(3);
  zero_sigma << 1.0, 0.0, 1.0;
  REQUIRE_THROWS_AS(msda::kl_gaussian_std_normal(mv, zero_sigma), msda::DataError);
}

TEST_CASE("reparameterized draws are an affine function of the noise") {
  Vector mu(3), sigma(3), eps(3);
  mu << 0.2, -1.0, 3.0;
  sigma << 0.5, 2.0, 0.1;
  eps << 0.0, 0.0, 0.0;
  REQUIRE((msda::reparameterize(mu, sigma, eps) - mu).cwiseAbs().maxCoeff() == 0.0);

  eps << 1.5, -0.3, 2.0;
  Vector got = msda::reparameterize(mu, sigma, eps);
  for (int j = 0; j < 3; ++j)
    REQUIRE(got[j] == Catch::Approx(mu[j] + eps[j] * sigma[j]).margin(1e-15));

  // a collapsed scale is floored, not zeroed
  Vector tiny = Vector::Constant(3, 1e-12);
  got = msda::reparameterize(mu, tiny, eps);
  for (int j = 0; j < 3; ++j)
    REQUIRE(got[j] == Catch::Approx(mu[j] + eps[j] * msda::kSigmaFloor).margin(1e-18));

  Vector short_eps(2);
  REQUIRE_THROWS_AS(msda::reparameterize(mu, sigma, short_eps), msda::DataError);

  ThetaPosterior post = msda::init_posterior(3, 2, 0.1);
  REQUIRE(post.n_domains() == 4);
  REQUIRE(post.target_row() == 3);
  REQUIRE(post.mu.isZero());
  post.log_sigma.setConstant(-50.0);
  REQUIRE(post.sigma().maxCoeff() == msda::kSigmaFloor);
}

TEST_CASE("a model without shifting mechanisms carries no divergence penalty") {
  AugmentedDag dag = msda::make_dag(1);
  dag.set_directed(0, 1);
  dag.validate();
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  GeneratorBundle b = msda::build_bundle(dag, gcfg, Rng(3));
  REQUIRE(b.n_theta == 0);

  MultiDomainDataset ds;
  ds.feature_names = {"x1"};
  ds.n_classes = 2;
  Rng data(4);
  for (int d = 0; d < 3; ++d) {
    Matrix x(60, 1);
    IntVector y(60);
    for (int i = 0; i < 60; ++i) {
      x(i, 0) = data.normal();
      y[i] = x(i, 0) + 0.3 * data.normal() > 0.0 ? 1 : 0;
    }
    if (d == 2) {
      ds.target_x = x;
    } else {
      ds.sources.push_back({std::move(x), std::move(y)});
    }
  }

  ThetaPosterior post = msda::init_posterior(2, 0, 0.1);
  msda::SviContext ctx = msda::make_svi_context(b, ds);
  msda::SviBatch batch = full_batch(ds);
  msda::SviNoise noise = msda::draw_svi_noise(b, {60, 60}, 60, 1, Rng(5));
  msda::SviResult res = msda::svi_objective(b, post, batch, ctx, TrainConfig{}, noise);

  REQUIRE(res.breakdown.source_kl.sum() == 0.0);
  REQUIRE(res.breakdown.target_kl == 0.0);
  REQUIRE(res.d_mu.cols() == 0);
  REQUIRE(res.loss >= 0.0);
  // the only feature is real on both sides, so the marginal term vanishes
  REQUIRE(res.breakdown.target_mmd == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(res.loss == Catch::Approx(res.breakdown.source_mmd.sum()).margin(1e-12));
}

TEST_CASE("the objective equals the sum of its reported parts") {
  AugmentedDag dag = chain_dag();
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  GeneratorBundle b = msda::build_bundle(dag, gcfg, Rng(21));
  REQUIRE(b.n_theta == 2);

  const int n = 80;
  MultiDomainDataset ds = chain_dataset(2, n, Rng(22));
  ThetaPosterior post = msda::init_posterior(2, 2, 0.3);
  post.mu << 0.4, -0.7, -0.3, 0.8, 0.6, 0.2;

  msda::SviContext ctx = msda::make_svi_context(b, ds);
  msda::SviBatch batch = full_batch(ds);
  msda::SviNoise noise = msda::draw_svi_noise(b, {n, n}, n, 1, Rng(23));
  msda::SviResult res = msda::svi_objective(b, post, batch, ctx, TrainConfig{}, noise);

  const double total = res.breakdown.source_mmd.sum() + res.breakdown.source_kl.sum() +
                       res.breakdown.target_mmd + res.breakdown.target_kl;
  REQUIRE(res.loss == Catch::Approx(total).margin(1e-10));

  // every reported cell against a standalone recomputation from the same draws
  const Matrix sigma = post.sigma();
  const msda::SviDraw& draw = noise.draws[0];
  for (int i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < b.modules.size(); ++j) {
      const msda::GeneratorModule& m = b.modules[j];
      const double th =
          m.theta_coord >= 0
              ? post.mu(i, m.theta_coord) + draw.eps(i, m.theta_coord) * sigma(i, m.theta_coord)
              : 0.0;
      const double want =
          module_mmd_oracle(b, m, ds.sources[static_cast<std::size_t>(i)].x,
                            ds.sources[static_cast<std::size_t>(i)].y, draw.source_noise[i][j],
                            th, ctx.module_bandwidth[j]);
      REQUIRE(res.breakdown.source_mmd(i, static_cast<int>(j)) ==
              Catch::Approx(want).margin(1e-9));
      if (m.theta_coord >= 0) {
        const double mu_ = post.mu(i, m.theta_coord), s_ = sigma(i, m.theta_coord);
        const double kl = 0.5 * (-1.0 - 2.0 * std::log(s_) + mu_ * mu_ + s_ * s_) / n;
        REQUIRE(res.breakdown.source_kl(i, static_cast<int>(j)) ==
                Catch::Approx(kl).margin(1e-12));
      } else {
        REQUIRE(res.breakdown.source_kl(i, static_cast<int>(j)) == 0.0);
      }
    }
  }
  {
    Vector theta_t(2);
    for (int c = 0; c < 2; ++c)
      theta_t[c] = post.mu(2, c) + draw.eps(2, c) * sigma(2, c);
    msda::ComposeResult comp =
        msda::compose(b, theta_t, ds.target_x, draw.target_noise, msda::YMode::kRelaxed);
    const double want = msda::mmd2_marginal(gather(ds.target_x, ctx.mb_features),
                                            gather(comp.x, ctx.mb_features),
                                            ctx.target_bandwidth);
    REQUIRE(res.breakdown.target_mmd == Catch::Approx(want).margin(1e-9));
    double kl_t = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double mu_ = post.mu(2, c), s_ = sigma(2, c);
      kl_t += 0.5 * (-1.0 - 2.0 * std::log(s_) + mu_ * mu_ + s_ * s_) / n;
    }
    REQUIRE(res.breakdown.target_kl == Catch::Approx(kl_t).margin(1e-12));
  }
}

TEST_CASE("a generator that already matches the data scores near zero") {
  AugmentedDag dag = chain_dag();
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  GeneratorBundle b = msda::build_bundle(dag, gcfg, Rng(31));

  // pin the label module: logits = (20, -20) * tanh(50 x0), noise and theta ignored
  msda::GeneratorModule& my = b.modules[static_cast<std::size_t>(b.y_module())];
  my.mlp.weights()[0].setZero();
  my.mlp.weights()[0](0, 0) = 50.0;
  my.mlp.biases()[0].setZero();
  my.mlp.weights()[1].setZero();
  my.mlp.weights()[1](0, 0) = 20.0;
  my.mlp.weights()[1](1, 0) = -20.0;
  my.mlp.biases()[1].setZero();

  const msda::GeneratorModule* mx = nullptr;
  for (const msda::GeneratorModule& m : b.modules)
    if (m.node == 1) mx = &m;
  REQUIRE(mx != nullptr);
  REQUIRE(my.theta_coord >= 0);
  REQUIRE(mx->theta_coord >= 0);

  ThetaPosterior post = msda::init_posterior(2, 2, 1.0);
  post.mu << 0.4, -0.7, -0.3, 0.8, 0.6, 0.2;
  post.log_sigma.setConstant(std::log(msda::kSigmaFloor));

  const int n = 200;
  msda::SviNoise noise = msda::draw_svi_noise(b, {n, n}, n, 1, Rng(32));
  const msda::SviDraw& draw = noise.draws[0];

  // the observed domains are the generator's own outputs under those draws
  MultiDomainDataset ds;
  ds.feature_names = {"x1", "x2"};
  ds.n_classes = 2;
  const std::size_t jy = static_cast<std::size_t>(b.y_module());
  std::size_t jx = 0;
  for (std::size_t j = 0; j < b.modules.size(); ++j)
    if (b.modules[j].node == 1) jx = j;
  for (int i = 0; i < 2; ++i) {
    Rng stream(static_cast<std::uint64_t>(40 + i));
    Matrix x(n, 2);
    for (int r = 0; r < n; ++r) {
      const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
      x(r, 0) = sign * (0.25 + std::abs(stream.normal()));
    }
    Matrix input_y(n, 3);
    input_y.col(0) = x.col(0);
    input_y.col(1) = draw.source_noise[static_cast<std::size_t>(i)][jy].col(0);
    input_y.col(2) = Vector::Constant(n, post.mu(i, my.theta_coord));
    Matrix logits = my.mlp.forward(input_y);
    IntVector y(n);
    for (int r = 0; r < n; ++r) {
      y[r] = logits(r, 0) >= logits(r, 1) ? 0 : 1;
      REQUIRE(std::abs(logits(r, 0) - logits(r, 1)) > 10.0);
    }
    Matrix input_x(n, 4);
    input_x.leftCols(2) = msda::one_hot(y, 2);
    input_x.col(2) = draw.source_noise[static_cast<std::size_t>(i)][jx].col(0);
    input_x.col(3) = Vector::Constant(n, post.mu(i, mx->theta_coord));
    x.col(1) = mx->mlp.forward(input_x);
    ds.sources.push_back({std::move(x), std::move(y)});
  }
  {
    Rng stream(50);
    Matrix seed = Matrix::Zero(n, 2);
    for (int r = 0; r < n; ++r) {
      const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
      seed(r, 0) = sign * (0.25 + std::abs(stream.normal()));
    }
    msda::ComposeResult comp = msda::compose(b, post.mu.row(2).transpose(), seed,
                                             draw.target_noise, msda::YMode::kRelaxed);
    ds.target_x = comp.x;
  }

  msda::SviContext ctx = msda::make_svi_context(b, ds);
  msda::SviResult res =
      msda::svi_objective(b, post, full_batch(ds), ctx, TrainConfig{}, noise);

  REQUIRE(res.breakdown.source_mmd.maxCoeff() < 1e-6);
  REQUIRE(res.breakdown.target_mmd < 1e-6);
  const double kl_floor = res.breakdown.source_kl.sum() + res.breakdown.target_kl;
  REQUIRE(kl_floor > 0.0);
  REQUIRE(res.loss - kl_floor < 1e-5);
  REQUIRE(res.breakdown.source_mmd.minCoeff() > -1e-12);
}

TEST_CASE("objective gradients agree with finite differences") {
  AugmentedDag dag = chain_dag();
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  GeneratorBundle b = msda::build_bundle(dag, gcfg, Rng(41));

  const int n = 24;
  MultiDomainDataset ds = chain_dataset(2, n, Rng(42));
  ThetaPosterior post = msda::init_posterior(2, 2, 0.3);
  post.mu << 0.1, -0.2, 0.3, 0.15, -0.25, 0.05;

  msda::SviContext ctx = msda::make_svi_context(b, ds);
  msda::SviBatch batch = full_batch(ds);
  msda::SviNoise noise = msda::draw_svi_noise(b, {n, n}, n, 2, Rng(43));
  TrainConfig cfg;

  msda::detail::FlatLayout lay = msda::detail::flat_layout(b, post);
  Vector p0;
  msda::detail::pack_params(b, post, lay, p0);
  msda::SviResult res = msda::svi_objective(b, post, batch, ctx, cfg, noise);
  Vector analytic(lay.total);
  msda::detail::pack_grads(res, b, lay, analytic);

  auto eval = [&](const Vector& p) {
    GeneratorBundle bb = b;
    ThetaPosterior pp = post;
    msda::detail::unpack_params(p, lay, bb, pp);
    return msda::svi_objective(bb, pp, batch, ctx, cfg, noise).loss;
  };

  std::vector<int> coords;
  for (int k = 0; k < lay.mu_offset; k += 7) coords.push_back(k);
  for (int k = lay.mu_offset; k < lay.total; ++k) coords.push_back(k);

  const double h = 1e-5;
  for (int k : coords) {
    Vector p = p0;
    p[k] = p0[k] + h;
    const double up = eval(p);
    p[k] = p0[k] - h;
    const double down = eval(p);
    const double fd = (up - down) / (2.0 * h);
    REQUIRE(analytic[k] == Catch::Approx(fd).margin(1e-6).epsilon(1e-3));
  }
}

TEST_CASE("two shifted sources are enough to pin the target label rate") {
  MultiDomainDataset ds = label_shift_dataset({-1.0, 1.0, 1.5}, 400, Rng(61));
  AugmentedDag dag = label_shift_dag();
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.generator.hidden = 16;
  cfg.adam.learning_rate = 5e-3;
  msda::TrainedModel model = msda::train(ds, dag, cfg, Rng(62));
  REQUIRE(!model.aborted);
  REQUIRE(model.curve.size() == 300);
  REQUIRE(model.curve.back().total < model.curve.front().total);

  auto freq_at = [&](int row, Rng rng) {
    return label_frequency(model.bundle, model.posterior.mu.row(row).transpose(), 4000, rng);
  };
  const double sig = [](double t) { return 1.0 / (1.0 + std::exp(-t)); }(1.5);
  REQUIRE(std::abs(freq_at(2, Rng(63)) - sig) < 0.1);
  // the source fits bracket the target
  REQUIRE(std::abs(freq_at(0, Rng(64)) - 1.0 / (1.0 + std::exp(1.0))) < 0.12);
  REQUIRE(std::abs(freq_at(1, Rng(65)) - 1.0 / (1.0 + std::exp(-1.0))) < 0.12);
}

TEST_CASE("identical domains keep the inferred shifts together") {
  AugmentedDag dag = label_shift_dag();
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.generator.hidden = 16;
  cfg.adam.learning_rate = 5e-3;

  MultiDomainDataset flat = label_shift_dataset({0.0, 0.0, 0.0, 0.0}, 300, Rng(71));
  MultiDomainDataset split = label_shift_dataset({-1.5, 0.0, 1.5, 1.0}, 300, Rng(71));
  msda::TrainedModel m_flat = msda::train(flat, dag, cfg, Rng(72));
  msda::TrainedModel m_split = msda::train(split, dag, cfg, Rng(72));
  REQUIRE(!m_flat.aborted);
  REQUIRE(!m_split.aborted);

  auto spread = [](const msda::TrainedModel& m) {
    double worst = 0.0;
    const int n_src = m.posterior.n_sources();
    for (int i = 0; i < n_src; ++i)
      for (int j = i + 1; j < n_src; ++j)
        worst = std::max(worst, (m.posterior.mu.row(i) - m.posterior.mu.row(j)).norm());
    return worst;
  };
  REQUIRE(spread(m_flat) < 0.75);
  REQUIRE(spread(m_flat) < spread(m_split));
}

TEST_CASE("training and prediction are reproducible run to run") {
  MultiDomainDataset ds = label_shift_dataset({-0.8, 0.8, 0.4}, 150, Rng(81));
  AugmentedDag dag = label_shift_dag();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.generator.hidden = 8;

  msda::TrainedModel a = msda::train(ds, dag, cfg, Rng(91));
  msda::TrainedModel b = msda::train(ds, dag, cfg, Rng(91));
  REQUIRE((a.posterior.mu - b.posterior.mu).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.posterior.log_sigma - b.posterior.log_sigma).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t e = 0; e < a.curve.size(); ++e)
    REQUIRE(a.curve[e].total == b.curve[e].total);

  msda::PredictConfig pc;
  pc.samples = 2;
  pc.synthetic_rows = 200;
  pc.classifier.steps = 80;
  Matrix p1 = msda::predict_target(a, ds.target_x, pc, Rng(92));
  Matrix p2 = msda::predict_target(a, ds.target_x, pc, Rng(92));
  REQUIRE((p1 - p2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the averaged objective goes down over training") {
  AugmentedDag dag = label_shift_dag();
  int improved = 0;
  for (int seed = 0; seed < 10; ++seed) {
    MultiDomainDataset ds =
        label_shift_dataset({-1.0, 1.0, 0.5}, 200, Rng(static_cast<std::uint64_t>(100 + seed)));
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.generator.hidden = 16;
    cfg.adam.learning_rate = 5e-3;
    msda::TrainedModel m = msda::train(ds, dag, cfg, Rng(static_cast<std::uint64_t>(130 + seed)));
    if (!m.aborted && m.curve.back().total < m.curve.front().total) ++improved;
  }
  REQUIRE(improved >= 9);
}

TEST_CASE("predicted class probabilities form proper distributions") {
  MultiDomainDataset ds = label_shift_dataset({-1.0, 1.0, 0.8}, 150, Rng(201));
  msda::TrainedModel model;
  {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.generator.hidden = 8;
    cfg.adam.learning_rate = 5e-3;
    model = msda::train(ds, label_shift_dag(), cfg, Rng(202));
  }
  msda::PredictConfig pc;
  pc.samples = 3;
  pc.synthetic_rows = 300;
  pc.classifier.steps = 100;
  Matrix probs = msda::predict_target(model, ds.target_x, pc, Rng(203));
  REQUIRE(probs.rows() == ds.target_x.rows());
  REQUIRE(probs.cols() == 2);
  REQUIRE(probs.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    REQUIRE(probs.row(i).sum() == Catch::Approx(1.0).margin(1e-9));

  Matrix wide(3, 4);
  REQUIRE_THROWS_AS(msda::predict_target(model, wide, pc, Rng(1)), msda::DataError);
  Matrix empty(0, 1);
  REQUIRE_THROWS_AS(msda::predict_target(model, empty, pc, Rng(1)), msda::DataError);
}

TEST_CASE("a single mean-value draw reduces to the plain generate-and-classify pipeline") {
  MultiDomainDataset ds = label_shift_dataset({-0.6, 0.9, 0.3}, 120, Rng(211));
  msda::TrainedModel model;
  {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.generator.hidden = 8;
    model = msda::train(ds, label_shift_dag(), cfg, Rng(212));
  }
  msda::PredictConfig pc;
  pc.samples = 1;
  pc.mean_theta = true;
  pc.synthetic_rows = 250;
  pc.classifier.steps = 90;
  Matrix got = msda::predict_target(model, ds.target_x, pc, Rng(77));

  // the documented single-draw path, replayed by hand
  const Matrix& tx = ds.target_x;
  const int m = static_cast<int>(tx.rows());
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index c = 0; c < tx.cols(); ++c) {
      if (tx(a, c) < tx(b, c)) return true;
      if (tx(a, c) > tx(b, c)) return false;
    }
    return false;
  });
  Matrix pool(m, tx.cols());
  for (int i = 0; i < m; ++i) pool.row(i) = tx.row(order[static_cast<std::size_t>(i)]);

  Rng sub = Rng(77).fork("draw", 0);
  Vector theta = model.posterior.mu.row(model.posterior.target_row()).transpose();
  Rng cs = sub.fork("cond");
  Matrix cond(pc.synthetic_rows, tx.cols());
  for (int r = 0; r < pc.synthetic_rows; ++r) cond.row(r) = pool.row(cs.below(m));
  msda::DomainSample synth =
      msda::sample_domain(model.bundle, theta, cond, pc.synthetic_rows, sub.fork("sample"));
  msda::SoftmaxClassifier clf =
      msda::train_classifier(gather(synth.x, model.context.mb_features), synth.y, 2,
                             pc.classifier, sub.fork("clf"));
  Matrix want = clf.predict_proba(gather(tx, model.context.mb_features));
  REQUIRE((got - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prediction ignores the order of the target rows") {
  MultiDomainDataset ds = label_shift_dataset({-1.0, 0.7, 0.5}, 140, Rng(221));
  msda::TrainedModel model;
  {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.generator.hidden = 8;
    model = msda::train(ds, label_shift_dag(), cfg, Rng(222));
  }
  msda::PredictConfig pc;
  pc.samples = 2;
  pc.synthetic_rows = 220;
  pc.classifier.steps = 80;

  Matrix probs = msda::predict_target(model, ds.target_x, pc, Rng(223));
  std::vector<int> perm = Rng(224).permutation(static_cast<int>(ds.target_x.rows()));
  Matrix shuffled(ds.target_x.rows(), ds.target_x.cols());
  for (Eigen::Index i = 0; i < shuffled.rows(); ++i)
    shuffled.row(i) = ds.target_x.row(perm[static_cast<std::size_t>(i)]);
  Matrix probs_shuffled = msda::predict_target(model, shuffled, pc, Rng(223));
  for (Eigen::Index i = 0; i < shuffled.rows(); ++i)
    REQUIRE((probs_shuffled.row(i) - probs.row(perm[static_cast<std::size_t>(i)]))
                .cwiseAbs()
                .maxCoeff() == 0.0);
}

TEST_CASE("averaging more posterior draws stabilizes the prediction") {
  MultiDomainDataset ds = label_shift_dataset({-1.2, 1.2, 0.6}, 60, Rng(231));
  msda::TrainedModel model;
  {
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.generator.hidden = 16;
    cfg.adam.learning_rate = 5e-3;
    model = msda::train(ds, label_shift_dag(), cfg, Rng(232));
  }
  msda::PredictConfig one, many;
  one.samples = 1;
  many.samples = 20;
  one.synthetic_rows = many.synthetic_rows = 400;
  one.classifier.steps = many.classifier.steps = 150;
  one.classifier.hidden = many.classifier.hidden = 16;

  const int runs = 5;
  const Eigen::Index m = ds.target_x.rows();
  Matrix col_one(m, runs), col_many(m, runs);
  for (int r = 0; r < runs; ++r) {
    col_one.col(r) =
        msda::predict_target(model, ds.target_x, one, Rng(static_cast<std::uint64_t>(500 + r)))
            .col(1);
    col_many.col(r) =
        msda::predict_target(model, ds.target_x, many, Rng(static_cast<std::uint64_t>(600 + r)))
            .col(1);
  }
  auto mean_row_std = [&](const Matrix& cols) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < cols.rows(); ++i) {
      const double mean = cols.row(i).mean();
      double var = 0.0;
      for (int r = 0; r < runs; ++r) var += (cols(i, r) - mean) * (cols(i, r) - mean);
      acc += std::sqrt(var / (runs - 1));
    }
    return acc / static_cast<double>(cols.rows());
  };
  const double s_one = mean_row_std(col_one);
  const double s_many = mean_row_std(col_many);
  REQUIRE(s_one > 0.0);
  REQUIRE(s_many < s_one);
}

TEST_CASE("invalid setups are rejected up front") {
  REQUIRE_THROWS_AS(msda::init_posterior(0, 2, 0.1), msda::ConfigError);
  REQUIRE_THROWS_AS(msda::init_posterior(2, -1, 0.1), msda::ConfigError);
  REQUIRE_THROWS_AS(msda::init_posterior(2, 2, 0.0), msda::ConfigError);

  TrainConfig cfg;
  cfg.batch_size = 1;
  REQUIRE_THROWS_AS(cfg.validate(), msda::ConfigError);
  cfg = TrainConfig{};
  cfg.synthetic_rows = 1;
  REQUIRE_THROWS_AS(cfg.validate(), msda::ConfigError);

  msda::PredictConfig pc;
  pc.samples = 0;
  REQUIRE_THROWS_AS(pc.validate(), msda::ConfigError);

  REQUIRE_THROWS_AS(msda::gamma_posterior_demo(-1.0), msda::ConfigError);
  REQUIRE_THROWS_AS(msda::gamma_posterior_demo(1.0, 4), msda::ConfigError);
  REQUIRE_THROWS_AS(msda::gamma_posterior_demo(1.0, 512, 0.0), msda::ConfigError);
  REQUIRE_THROWS_AS(msda::gamma_prior_pdf(0.0), msda::ConfigError);
}

TEST_CASE("the variance-split posterior matches its closed form") {
  // With equal scales the share theta/v is Beta(shape_y, shape_x) regardless
  // of v, so every summary has an exact reference value.
  const double a = 3.0, c = 1.5;
  const double log_beta = std::lgamma(a) + std::lgamma(c) - std::lgamma(a + c);

  for (double v : {0.5, 1.0, 4.0, 8.0}) {
    msda::DensityGrid d = msda::gamma_posterior_demo(v, 4096);
    REQUIRE(d.grid.minCoeff() > 0.0);
    REQUIRE(d.grid.maxCoeff() < v);

    double integral = 0.0;
    for (Eigen::Index k = 0; k + 1 < d.grid.size(); ++k)
      integral += 0.5 * (d.grid[k + 1] - d.grid[k]) * (d.density[k] + d.density[k + 1]);
    REQUIRE(integral == Catch::Approx(1.0).margin(1e-9));

    REQUIRE(msda::density_mean(d) == Catch::Approx(v * a / (a + c)).epsilon(1e-4));
    const double beta_std = std::sqrt(a * c / ((a + c) * (a + c) * (a + c + 1.0)));
    REQUIRE(msda::density_std(d) == Catch::Approx(v * beta_std).epsilon(1e-3));
    REQUIRE(msda::density_mode(d) ==
            Catch::Approx(v * (a - 1.0) / (a + c - 2.0)).margin(2.0 * v / 4097.0));

    // pointwise agreement with the scaled Beta density away from the edges
    for (Eigen::Index k = d.grid.size() / 8; k < 7 * d.grid.size() / 8; k += 97) {
      const double t = d.grid[k] / v;
      const double want =
          std::exp((a - 1.0) * std::log(t) + (c - 1.0) * std::log(1.0 - t) - log_beta) / v;
      REQUIRE(d.density[k] == Catch::Approx(want).epsilon(1e-4));
    }
  }

  // a coarse grid finds the same peak as a very fine one
  msda::DensityGrid coarse = msda::gamma_posterior_demo(0.5, 64);
  msda::DensityGrid fine = msda::gamma_posterior_demo(0.5, 100000);
  REQUIRE(std::abs(msda::density_mode(coarse) - msda::density_mode(fine)) < 0.5 / 64.0);

  // spread grows with the observed variance
  double last = 0.0;
  for (double v : {1.0, 2.0, 4.0, 8.0}) {
    const double s = msda::density_std(msda::gamma_posterior_demo(v, 2048));
    REQUIRE(s > last);
    last = s;
  }

  // the unconditioned curve is the plain gamma density
  msda::DensityGrid prior = msda::gamma_prior_pdf(6.0, 512);
  for (Eigen::Index k = 0; k < prior.grid.size(); ++k) {
    const double t = prior.grid[k];
    const double want = t <= 0.0 ? 0.0 : 0.5 * t * t * std::exp(-t);
    REQUIRE(prior.density[k] == Catch::Approx(want).margin(1e-12));
  }
  REQUIRE(msda::density_mode(msda::gamma_posterior_demo(1.0, 2048)) <
          msda::density_mode(msda::gamma_posterior_demo(8.0, 2048)));
}
