#pragma once

#include <vector>

#include "msda/common.hpp"
#include "msda/kernels.hpp"
#include "msda/rng.hpp"

namespace msda {

// A block of columns entering a kernel test. Continuous columns share one RBF
// kernel; each discrete column contributes a delta factor to the product.
struct KernelData {
  Matrix values;               // n x k
  std::vector<bool> discrete;  // size k

  static KernelData continuous(Matrix v) {
    KernelData d;
    d.discrete.assign(static_cast<std::size_t>(v.cols()), false);
    d.values = std::move(v);
    return d;
  }
  static KernelData discrete_column(const IntVector& v) {
    KernelData d;
    d.values.resize(v.size(), 1);
    for (Eigen::Index i = 0; i < v.size(); ++i) d.values(i, 0) = v[i];
    d.discrete.assign(1, true);
    return d;
  }
  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  void append(const KernelData& other) {
    if (cols() == 0) {
      *this = other;
      return;
    }
    if (other.cols() == 0) return;
    if (other.rows() != rows()) throw DataError("KernelData::append: row mismatch");
    Matrix merged(rows(), cols() + other.cols());
    merged << values, other.values;
    values = std::move(merged);
    discrete.insert(discrete.end(), other.discrete.begin(), other.discrete.end());
  }
};

inline Matrix product_gram(const KernelData& d, const KernelConfig& cfg) {
  const Eigen::Index n = d.rows();
  Matrix g = Matrix::Ones(n, n);
  std::vector<Eigen::Index> cont;
  for (Eigen::Index c = 0; c < d.cols(); ++c) {
    if (d.discrete[static_cast<std::size_t>(c)]) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (d.values(i, c) != d.values(j, c)) g(i, j) = 0.0;
    } else {
      cont.push_back(c);
    }
  }
  if (!cont.empty()) {
    Matrix x(n, static_cast<Eigen::Index>(cont.size()));
    for (std::size_t k = 0; k < cont.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = d.values.col(cont[k]);
    g = g.cwiseProduct(rbf_gram(x, x, resolve_bandwidth(cfg, x)));
  }
  return g;
}

inline Matrix center_gram(const Matrix& k) {
  const Eigen::Index n = k.rows();
  Vector row_mean = k.rowwise().mean();
  const double total_mean = row_mean.mean();
  Matrix c = k;
  c.colwise() -= row_mean;
  c.rowwise() -= row_mean.transpose();
  c.array() += total_mean;
  return c;
}

struct CiTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool independent = true;
};

namespace detail {

// Normalized Hilbert-Schmidt statistic between two centered (and, when a
// conditioning set is present, kernel-residualized) Gram matrices, with a
// permutation null. The permutation stream for permutation t is forked from
// the caller's stream by t, so p-values are reproducible and independent of
// evaluation order.
inline CiTestResult kernel_ci_impl(const KernelData& x, const KernelData& y, const KernelData& z,
                                   const KernelConfig& cfg, int n_permutations, double alpha,
                                   const Rng& rng, Eigen::Index min_rows) {
  const Eigen::Index n = x.rows();
  if (y.rows() != n || (z.cols() > 0 && z.rows() != n))
    throw DataError("kci_test: sample size mismatch");
  if (n < min_rows) throw DataError("kci_test: insufficient data (need at least " +
                                    std::to_string(min_rows) + " rows)");
  if (n_permutations < 1) throw ConfigError("kci_test: n_permutations must be >= 1");
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("kci_test: alpha must be in (0, 1)");

  Matrix a = center_gram(product_gram(x, cfg));
  Matrix b = center_gram(product_gram(y, cfg));
  if (z.cols() > 0) {
    Matrix kz = center_gram(product_gram(z, cfg));
    kz.diagonal().array() += cfg.ridge_eps;
    Eigen::LDLT<Matrix> solver(kz);
    // R = eps * (Kz~ + eps I)^-1 maps each Gram onto the part not explained by z
    Matrix r = cfg.ridge_eps * solver.solve(Matrix::Identity(n, n));
    a = (r * a * r).eval();
    b = (r * b * r).eval();
  }

  const double norm_a = a.cwiseProduct(a).sum();
  const double norm_b = b.cwiseProduct(b).sum();
  const double denom = std::sqrt(norm_a * norm_b);
  CiTestResult res;
  if (denom <= 0.0 || !std::isfinite(denom)) {
    res.statistic = 0.0;
    res.p_value = 1.0;
    res.independent = true;
    return res;
  }
  res.statistic = a.cwiseProduct(b).sum() / denom;

  int exceed = 0;
  Matrix bp(n, n);
  for (int t = 0; t < n_permutations; ++t) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(t));
    std::vector<int> perm = stream.permutation(static_cast<int>(n));
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        bp(i, j) = b(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    if (a.cwiseProduct(bp).sum() / denom >= res.statistic) ++exceed;
  }
  res.p_value = (1.0 + exceed) / (1.0 + n_permutations);
  res.independent = res.p_value > alpha;
  return res;
}

}  // namespace detail

inline CiTestResult kci_test(const KernelData& x, const KernelData& y, const KernelData& z,
                             const KernelConfig& cfg, int n_permutations, double alpha,
                             const Rng& rng) {
  return detail::kernel_ci_impl(x, y, z, cfg, n_permutations, alpha, rng, 10);
}

// Unconditional variant without the minimum-sample refusal, for statistics
// computed across domains where only a handful of points exist. Callers own
// the interpretation risk at such sizes.
inline CiTestResult hsic_test_small_sample(const KernelData& x, const KernelData& y,
                                           const KernelConfig& cfg, int n_permutations,
                                           double alpha, const Rng& rng) {
  KernelData empty;
  return detail::kernel_ci_impl(x, y, empty, cfg, n_permutations, alpha, rng, 3);
}

}  // namespace msda
