#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msda/common.hpp"
#include "msda/rng.hpp"

namespace msda {

enum class Activation { kTanh, kRelu };

inline std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }
inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation: " + s);
}

struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // activations per layer; back() is the output
};

struct MlpGrads {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
};

// Fully connected net, tanh/relu hidden layers, identity output.
// Batches are row-major: one sample per row.
class Mlp {
 public:
  Mlp() = default;

  // weights ~ N(0, 1/fan_in), biases zero
  Mlp(std::vector<int> layer_sizes, Activation act, Rng rng)
      : sizes_(std::move(layer_sizes)), act_(act) {
    if (sizes_.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int fan_in = sizes_[l];
      const int fan_out = sizes_[l + 1];
      Matrix w(fan_out, fan_in);
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) w(r, c) = scale * rng.normal();
      W_.push_back(std::move(w));
      b_.push_back(Vector::Zero(fan_out));
    }
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Activation activation() const { return act_; }
  std::vector<Matrix>& weights() { return W_; }
  std::vector<Vector>& biases() { return b_; }
  const std::vector<Matrix>& weights() const { return W_; }
  const std::vector<Vector>& biases() const { return b_; }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const {
    if (x.cols() != sizes_.front())
      throw DataError("mlp forward: input width " + std::to_string(x.cols()) +
                      " != " + std::to_string(sizes_.front()));
    if (!x.allFinite()) throw NumericError("mlp forward: non-finite input");
    Matrix a = x;
    if (cache) {
      cache->input = x;
      cache->pre.clear();
      cache->post.clear();
    }
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = a * W_[l].transpose();
      z.rowwise() += b_[l].transpose();
      const bool hidden = l + 1 < W_.size();
      if (hidden) {
        if (act_ == Activation::kTanh)
          a = z.array().tanh().matrix();
        else
          a = z.cwiseMax(0.0);
      } else {
        a = z;
      }
      if (cache) {
        cache->pre.push_back(std::move(z));
        cache->post.push_back(a);
      }
    }
    return a;
  }

  // Exact reverse-mode gradients for the batch that produced `cache`.
  std::pair<MlpGrads, Matrix> backward(const MlpCache& cache, const Matrix& d_output) const {
    if (cache.pre.size() != W_.size() || cache.input.cols() != sizes_.front())
      throw DataError("mlp backward: cache does not match this network");
    if (d_output.rows() != cache.input.rows() || d_output.cols() != sizes_.back())
      throw DataError("mlp backward: output gradient shape mismatch");
    MlpGrads g;
    g.dW.resize(W_.size());
    g.db.resize(W_.size());
    Matrix dz = d_output;  // identity output layer
    for (int l = static_cast<int>(W_.size()) - 1; l >= 0; --l) {
      const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
      g.dW[l] = dz.transpose() * below;
      g.db[l] = dz.colwise().sum().transpose();
      if (l == 0) {
        return {std::move(g), dz * W_[0]};
      }
      Matrix da = dz * W_[l];
      if (act_ == Activation::kTanh) {
        dz = (da.array() * (1.0 - cache.post[l - 1].array().square())).matrix();
      } else {
        dz = (da.array() * (cache.pre[l - 1].array() > 0.0).cast<double>()).matrix();
      }
    }
    throw NumericError("unreachable");
  }

  int param_count() const {
    int n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l)
      n += static_cast<int>(W_[l].size() + b_[l].size());
    return n;
  }

  void flatten_params(Eigen::Ref<Vector> out) const {
    int k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      std::memcpy(out.data() + k, W_[l].data(), sizeof(double) * W_[l].size());
      k += static_cast<int>(W_[l].size());
      std::memcpy(out.data() + k, b_[l].data(), sizeof(double) * b_[l].size());
      k += static_cast<int>(b_[l].size());
    }
  }

  void unflatten_params(const Eigen::Ref<const Vector>& in) {
    int k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      std::memcpy(W_[l].data(), in.data() + k, sizeof(double) * W_[l].size());
      k += static_cast<int>(W_[l].size());
      std::memcpy(b_[l].data(), in.data() + k, sizeof(double) * b_[l].size());
      k += static_cast<int>(b_[l].size());
    }
  }

  static void flatten_grads(const MlpGrads& g, Eigen::Ref<Vector> out) {
    int k = 0;
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
      std::memcpy(out.data() + k, g.dW[l].data(), sizeof(double) * g.dW[l].size());
      k += static_cast<int>(g.dW[l].size());
      std::memcpy(out.data() + k, g.db[l].data(), sizeof(double) * g.db[l].size());
      k += static_cast<int>(g.db[l].size());
    }
  }

 private:
  std::vector<int> sizes_;
  Activation act_ = Activation::kTanh;
  std::vector<Matrix> W_;
  std::vector<Vector> b_;
};

inline void accumulate(MlpGrads& acc, const MlpGrads& g, double scale = 1.0) {
  if (acc.dW.empty()) {
    acc.dW.resize(g.dW.size());
    acc.db.resize(g.db.size());
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
      acc.dW[l] = scale * g.dW[l];
      acc.db[l] = scale * g.db[l];
    }
    return;
  }
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    acc.dW[l] += scale * g.dW[l];
    acc.db[l] += scale * g.db[l];
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  Vector m;
  Vector v;
  explicit AdamState(int n, AdamConfig c = {}) : cfg(c), m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

// Standard Adam with bias correction. Returns false and leaves params and
// state untouched when the gradient contains non-finite values.
inline bool adam_step(AdamState& st, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads) {
  if (params.size() != st.m.size() || grads.size() != st.m.size())
    throw DataError("adam_step: shape mismatch");
  if (!grads.allFinite()) return false;
  st.step += 1;
  st.m = st.cfg.beta1 * st.m + (1.0 - st.cfg.beta1) * grads;
  st.v = st.cfg.beta2 * st.v.array().matrix() + (1.0 - st.cfg.beta2) * grads.array().square().matrix();
  const double c1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
  params -= (st.cfg.learning_rate * (st.m / c1).array() / ((st.v / c2).array().sqrt() + st.cfg.eps))
                .matrix();
  return true;
}

// Checkpoint = flat little-endian float64 blob + JSON shape manifest.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline void save_mlp(const Mlp& mlp, const std::string& bin_path, const std::string& json_path) {
  Vector flat(mlp.param_count());
  mlp.flatten_params(flat);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot write " + bin_path);
  bin.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(double) * flat.size()));
  nlohmann::json manifest{{"layer_sizes", mlp.layer_sizes()},
                          {"activation", to_string(mlp.activation())},
                          {"param_count", mlp.param_count()},
                          {"dtype", "float64-le"}};
  std::ofstream js(json_path);
  if (!js) throw DataError("cannot write " + json_path);
  js << manifest.dump(2) << "\n";
}

inline Mlp load_mlp(const std::string& bin_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw DataError("cannot read " + json_path);
  nlohmann::json manifest = nlohmann::json::parse(js);
  std::vector<int> sizes = manifest.at("layer_sizes").get<std::vector<int>>();
  Mlp mlp(sizes, activation_from_string(manifest.at("activation").get<std::string>()), Rng(0));
  Vector flat(mlp.param_count());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot read " + bin_path);
  bin.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(sizeof(double) * flat.size()));
  if (bin.gcount() != static_cast<std::streamsize>(sizeof(double) * flat.size()))
    throw DataError("checkpoint truncated: " + bin_path);
  mlp.unflatten_params(flat);
  return mlp;
}

}  // namespace msda
