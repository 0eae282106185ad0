#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "msda/common.hpp"
#include "msda/rng.hpp"

namespace msda {

struct KernelConfig {
  enum class BandwidthRule { kMedianHeuristic, kFixed };
  BandwidthRule bandwidth_rule = BandwidthRule::kMedianHeuristic;
  double fixed_bandwidth = 1.0;
  double ridge_eps = 1e-3;  // regularization for CI-test matrix inversions

  void validate() const {
    if (bandwidth_rule == BandwidthRule::kFixed && fixed_bandwidth <= 0.0)
      throw ConfigError("fixed kernel bandwidth must be > 0");
    if (ridge_eps <= 0.0) throw ConfigError("kernel ridge epsilon must be > 0");
  }
};

inline Matrix pairwise_sqdist(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DataError("pairwise_sqdist: dimension mismatch");
  Matrix d = -2.0 * a * b.transpose();
  d.colwise() += a.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

// Median of pairwise Euclidean distances. Rows beyond 1000 are thinned by a
// deterministic stride so the result is a pure function of the input.
inline double median_heuristic(const Matrix& samples) {
  if (samples.rows() < 2) throw DataError("median_heuristic needs at least 2 rows");
  Matrix sub;
  if (samples.rows() > 1000) {
    const Eigen::Index step = (samples.rows() + 999) / 1000;
    const Eigen::Index n = (samples.rows() + step - 1) / step;
    sub.resize(n, samples.cols());
    for (Eigen::Index i = 0; i < n; ++i) sub.row(i) = samples.row(i * step);
  } else {
    sub = samples;
  }
  const Eigen::Index n = sub.rows();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dist.push_back((sub.row(i) - sub.row(j)).norm());
  std::sort(dist.begin(), dist.end());
  const std::size_t m = dist.size();
  const double med = (m % 2 == 1) ? dist[m / 2] : 0.5 * (dist[m / 2 - 1] + dist[m / 2]);
  return med > 0.0 ? med : 1.0;
}

inline double resolve_bandwidth(const KernelConfig& cfg, const Matrix& real_samples) {
  cfg.validate();
  if (cfg.bandwidth_rule == KernelConfig::BandwidthRule::kFixed) return cfg.fixed_bandwidth;
  return median_heuristic(real_samples);
}

// k(x, x') = exp(-||x - x'||^2 / (2 h^2))
inline Matrix rbf_gram(const Matrix& a, const Matrix& b, double bandwidth) {
  if (bandwidth <= 0.0) throw ConfigError("bandwidth must be > 0");
  return (pairwise_sqdist(a, b) / (-2.0 * bandwidth * bandwidth)).array().exp().matrix();
}

inline Matrix delta_gram(const IntVector& a, const IntVector& b) {
  Matrix g(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) g(i, j) = (a[i] == b[j]) ? 1.0 : 0.0;
  return g;
}

inline Matrix one_hot(const IntVector& labels, int n_classes) {
  Matrix m = Matrix::Zero(labels.size(), n_classes);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw DataError("label out of range");
    m(i, labels[i]) = 1.0;
  }
  return m;
}

struct Mmd2Result {
  double value = 0.0;
  Matrix d_fake_x;      // gradient w.r.t. fake continuous inputs
  Matrix d_fake_label;  // gradient w.r.t. fake label rows (empty for marginal MMD)
};

// Biased (V-statistic) squared MMD under the product kernel k * l, where k is
// RBF on the continuous block and l is the dot product of label rows. Exact
// one-hot rows make l the delta kernel on labels; rows of class probabilities
// give its expectation under sampling, which keeps the estimator
// differentiable when the fake labels are generated.
inline Mmd2Result mmd2_joint_grad(const Matrix& real_x, const Matrix& real_label,
                                  const Matrix& fake_x, const Matrix& fake_label,
                                  double bandwidth, bool want_grad = true) {
  const Eigen::Index n = real_x.rows(), m = fake_x.rows();
  if (n == 0 || m == 0) throw DataError("mmd2: empty sample");
  if (real_x.cols() != fake_x.cols()) throw DataError("mmd2: feature dimension mismatch");
  const bool labeled = real_label.cols() > 0;
  if (labeled && (real_label.rows() != n || fake_label.rows() != m ||
                  real_label.cols() != fake_label.cols()))
    throw DataError("mmd2: label block mismatch");

  const double h2 = bandwidth * bandwidth;
  Matrix k_rr = rbf_gram(real_x, real_x, bandwidth);
  Matrix k_rf = rbf_gram(real_x, fake_x, bandwidth);
  Matrix k_ff = rbf_gram(fake_x, fake_x, bandwidth);
  Matrix g_rr = k_rr, g_rf = k_rf, g_ff = k_ff;
  if (labeled) {
    g_rr = k_rr.cwiseProduct(real_label * real_label.transpose());
    g_rf = k_rf.cwiseProduct(real_label * fake_label.transpose());
    g_ff = k_ff.cwiseProduct(fake_label * fake_label.transpose());
  }
  Mmd2Result res;
  res.value = g_rr.sum() / static_cast<double>(n * n) -
              2.0 * g_rf.sum() / static_cast<double>(n * m) +
              g_ff.sum() / static_cast<double>(m * m);
  if (!want_grad) return res;

  // d/dx_q of exp(-||x_a - x_q||^2 / 2h^2) = k_aq (x_a - x_q) / h^2
  const double inv_m2 = 1.0 / static_cast<double>(m * m);
  const double inv_nm = 1.0 / static_cast<double>(n * m);
  Matrix dx = 2.0 * inv_m2 / h2 *
              (g_ff.transpose() * fake_x - g_ff.colwise().sum().transpose().asDiagonal() * fake_x);
  dx -= 2.0 * inv_nm / h2 *
        (g_rf.transpose() * real_x - g_rf.colwise().sum().transpose().asDiagonal() * fake_x);
  res.d_fake_x = std::move(dx);
  if (labeled) {
    res.d_fake_label = 2.0 * inv_m2 * (k_ff * fake_label).eval();  // diagonal included: d(p.p)/dp = 2p
    res.d_fake_label -= 2.0 * inv_nm * (k_rf.transpose() * real_label);
  }
  return res;
}

inline double mmd2_joint(const Matrix& real_x, const IntVector& real_y, const Matrix& fake_x,
                         const IntVector& fake_y, double bandwidth) {
  int n_classes = 0;
  for (Eigen::Index i = 0; i < real_y.size(); ++i) n_classes = std::max(n_classes, real_y[i] + 1);
  for (Eigen::Index i = 0; i < fake_y.size(); ++i) n_classes = std::max(n_classes, fake_y[i] + 1);
  return mmd2_joint_grad(real_x, one_hot(real_y, n_classes), fake_x, one_hot(fake_y, n_classes),
                         bandwidth, false)
      .value;
}

inline double mmd2_joint(const Matrix& real_x, const IntVector& real_y, const Matrix& fake_x,
                         const IntVector& fake_y, const KernelConfig& cfg) {
  return mmd2_joint(real_x, real_y, fake_x, fake_y, resolve_bandwidth(cfg, real_x));
}

inline Mmd2Result mmd2_marginal_grad(const Matrix& real_x, const Matrix& fake_x, double bandwidth,
                                     bool want_grad = true) {
  return mmd2_joint_grad(real_x, Matrix(real_x.rows(), 0), fake_x, Matrix(fake_x.rows(), 0),
                         bandwidth, want_grad);
}

inline double mmd2_marginal(const Matrix& real_x, const Matrix& fake_x, double bandwidth) {
  return mmd2_marginal_grad(real_x, fake_x, bandwidth, false).value;
}

inline double mmd2_marginal(const Matrix& real_x, const Matrix& fake_x, const KernelConfig& cfg) {
  return mmd2_marginal(real_x, fake_x, resolve_bandwidth(cfg, real_x));
}

}  // namespace msda
