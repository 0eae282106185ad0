#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "msda/common.hpp"
#include "msda/kernels.hpp"
#include "msda/neural.hpp"
#include "msda/rng.hpp"

namespace msda {

struct ClassifierConfig {
  int hidden = 32;
  int steps = 500;
  int batch = 256;
  AdamConfig adam;

  void validate() const {
    if (hidden < 1) throw ConfigError("ClassifierConfig: hidden must be >= 1");
    if (steps < 1) throw ConfigError("ClassifierConfig: steps must be >= 1");
    if (batch < 1) throw ConfigError("ClassifierConfig: batch must be >= 1");
  }
};

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

class SoftmaxClassifier {
 public:
  SoftmaxClassifier() = default;
  SoftmaxClassifier(Mlp net, int n_classes) : net_(std::move(net)), n_classes_(n_classes) {}

  Matrix predict_proba(const Matrix& x) const { return softmax_rows(net_.forward(x)); }

  IntVector predict(const Matrix& x) const {
    Matrix p = predict_proba(x);
    IntVector out(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::Index arg = 0;
      p.row(i).maxCoeff(&arg);
      out[i] = static_cast<int>(arg);
    }
    return out;
  }

  int n_classes() const { return n_classes_; }
  const Mlp& network() const { return net_; }

 private:
  Mlp net_;
  int n_classes_ = 0;
};

// Minibatch cross-entropy training of a one-hidden-layer softmax network.
inline SoftmaxClassifier train_classifier(const Matrix& x, const IntVector& y, int n_classes,
                                          const ClassifierConfig& cfg, const Rng& rng) {
  cfg.validate();
  const Eigen::Index n = x.rows();
  if (n == 0) throw DataError("train_classifier: empty training set");
  if (y.size() != n) throw DataError("train_classifier: feature/label row mismatch");
  if (n_classes < 2) throw ConfigError("train_classifier: need at least 2 classes");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[i] < 0 || y[i] >= n_classes) throw DataError("train_classifier: label out of range");

  Mlp net({static_cast<int>(x.cols()), cfg.hidden, n_classes}, Activation::kTanh, rng.fork("init"));
  AdamState opt(net.param_count(), cfg.adam);
  Vector params(net.param_count());
  net.flatten_params(params);
  Vector g(net.param_count());
  Rng batches = rng.fork("batches");
  const Matrix targets = one_hot(y, n_classes);

  for (int step = 0; step < cfg.steps; ++step) {
    Matrix bx;
    Matrix bt;
    if (n <= cfg.batch) {
      bx = x;
      bt = targets;
    } else {
      Rng stream = batches.fork(static_cast<std::uint64_t>(step));
      std::vector<int> idx = stream.sample_without_replacement(static_cast<int>(n), cfg.batch);
      bx.resize(cfg.batch, x.cols());
      bt.resize(cfg.batch, n_classes);
      for (int k = 0; k < cfg.batch; ++k) {
        bx.row(k) = x.row(idx[static_cast<std::size_t>(k)]);
        bt.row(k) = targets.row(idx[static_cast<std::size_t>(k)]);
      }
    }
    MlpCache cache;
    Matrix logits = net.forward(bx, &cache);
    Matrix d_logits = (softmax_rows(logits) - bt) / static_cast<double>(bx.rows());
    auto [grads, d_input] = net.backward(cache, d_logits);
    (void)d_input;
    Mlp::flatten_grads(grads, g);
    if (!adam_step(opt, params, g)) continue;
    net.unflatten_params(params);
  }
  return SoftmaxClassifier(std::move(net), n_classes);
}

inline double accuracy(const IntVector& predicted, const IntVector& truth) {
  if (predicted.size() != truth.size()) throw DataError("accuracy: size mismatch");
  if (predicted.size() == 0) throw DataError("accuracy: empty inputs");
  double hits = 0.0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) hits += 1.0;
  return hits / static_cast<double>(predicted.size());
}

}  // namespace msda
