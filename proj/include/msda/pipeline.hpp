#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msda/classifier.hpp"
#include "msda/csv.hpp"
#include "msda/dataset.hpp"
#include "msda/graph_learn.hpp"
#include "msda/inference.hpp"
#include "msda/simulate.hpp"

namespace msda {

struct PipelineConfig {
  SimulationSpec sim;
  TrainConfig train;
  GraphLearnOptions graph;
  ClassifierConfig pooled_classifier;  // baseline trained once per replicate
  bool use_learned_graph = false;
  int replicates = 10;

  PipelineConfig() { pooled_classifier.steps = 2000; }

  void validate() const {
    sim.validate();
    train.validate();
    pooled_classifier.validate();
    if (replicates < 1) throw ConfigError("PipelineConfig: replicates must be >= 1");
  }
};

struct ReplicateOutcome {
  double infer_accuracy = 0.0;
  double pool_accuracy = 0.0;
  Matrix probabilities;  // target rows x classes, posterior-averaged
  IntVector predicted;
  IntVector truth;
};

inline IntVector argmax_rows(const Matrix& probs) {
  IntVector out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

// One end-to-end run: simulate, standardize, pick the graph (planted truth
// restricted to Y's Markov blanket, or learned from the data), train the
// generator with variational posteriors, predict target labels, and score
// against the pooled-source classifier baseline on the same data.
inline ReplicateOutcome run_replicate(const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SimulationSpec spec = cfg.sim;
  spec.seed = seed;
  SimulationResult sim = simulate(spec);
  MultiDomainDataset ds = sim.dataset;
  standardize(ds);
  Rng root(seed);

  AugmentedDag dag = cfg.use_learned_graph
                         ? learn_graph(ds, cfg.graph, root.fork("graph")).dag
                         : instantiate_dag(spec.dag);

  TrainedModel model = train(ds, dag, cfg.train, root.fork("train"));

  PredictConfig pc;
  pc.samples = cfg.train.prediction_samples;
  pc.synthetic_rows = cfg.train.synthetic_rows;
  pc.classifier = cfg.train.classifier;
  ReplicateOutcome out;
  out.probabilities = predict_target(model, ds.target_x, pc, root.fork("predict"));
  out.predicted = argmax_rows(out.probabilities);
  out.truth = sim.target_labels;
  out.infer_accuracy = accuracy(out.predicted, out.truth);

  auto [pooled_x, pooled_c] = ds.pooled_sources();
  (void)pooled_c;
  IntVector pooled_y = ds.pooled_labels();
  SoftmaxClassifier pool = train_classifier(pooled_x, pooled_y, ds.n_classes,
                                            cfg.pooled_classifier, root.fork("pool"));
  out.pool_accuracy = accuracy(pool.predict(ds.target_x), out.truth);
  return out;
}

struct EvaluateResult {
  std::vector<ReplicateOutcome> replicates;
  double infer_mean = 0.0, infer_std = 0.0;
  double pool_mean = 0.0, pool_std = 0.0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

inline EvaluateResult evaluate(const PipelineConfig& cfg, std::uint64_t master_seed) {
  cfg.validate();
  EvaluateResult res;
  Rng root(master_seed);
  std::vector<double> infer, pool;
  for (int r = 0; r < cfg.replicates; ++r) {
    const std::uint64_t seed = root.fork("replicate", static_cast<std::uint64_t>(r)).next_u64();
    ReplicateOutcome out = run_replicate(cfg, seed);
    infer.push_back(out.infer_accuracy);
    pool.push_back(out.pool_accuracy);
    res.replicates.push_back(std::move(out));
  }
  std::tie(res.infer_mean, res.infer_std) = mean_std(infer);
  std::tie(res.pool_mean, res.pool_std) = mean_std(pool);
  return res;
}

// --- artifact serialization shared by the command-line tool and tests ---

inline nlohmann::json posterior_to_json(const ThetaPosterior& post) {
  nlohmann::json j;
  j["n_theta"] = post.n_theta();
  j["domains"] = nlohmann::json::array();
  const Matrix sigma = post.sigma();
  for (int dom = 0; dom < post.n_domains(); ++dom) {
    std::vector<double> mu(static_cast<std::size_t>(post.n_theta()));
    std::vector<double> sg(static_cast<std::size_t>(post.n_theta()));
    std::vector<double> ls(static_cast<std::size_t>(post.n_theta()));
    for (int c = 0; c < post.n_theta(); ++c) {
      mu[static_cast<std::size_t>(c)] = post.mu(dom, c);
      sg[static_cast<std::size_t>(c)] = sigma(dom, c);
      ls[static_cast<std::size_t>(c)] = post.log_sigma(dom, c);
    }
    j["domains"].push_back({{"role", dom == post.n_domains() - 1 ? "target" : "source"},
                            {"mu", mu},
                            {"sigma", sg},
                            {"log_sigma", ls}});
  }
  return j;
}

inline ThetaPosterior posterior_from_json(const nlohmann::json& j) {
  ThetaPosterior post;
  try {
    const int n_theta = j.at("n_theta").get<int>();
    const auto& domains = j.at("domains");
    post.mu.resize(static_cast<Eigen::Index>(domains.size()), n_theta);
    post.log_sigma.resize(static_cast<Eigen::Index>(domains.size()), n_theta);
    for (Eigen::Index dom = 0; dom < post.mu.rows(); ++dom) {
      auto mu = domains[static_cast<std::size_t>(dom)].at("mu").get<std::vector<double>>();
      auto ls = domains[static_cast<std::size_t>(dom)].at("log_sigma").get<std::vector<double>>();
      for (int c = 0; c < n_theta; ++c) {
        post.mu(dom, c) = mu[static_cast<std::size_t>(c)];
        post.log_sigma(dom, c) = ls[static_cast<std::size_t>(c)];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("posterior json: ") + e.what());
  }
  return post;
}

inline nlohmann::json standardize_to_json(const StandardizeStats& st) {
  std::vector<double> mean(st.mean.data(), st.mean.data() + st.mean.size());
  std::vector<double> stdev(st.std.data(), st.std.data() + st.std.size());
  return {{"mean", mean}, {"std", stdev}};
}

inline StandardizeStats standardize_from_json(const nlohmann::json& j) {
  StandardizeStats st;
  try {
    auto mean = j.at("mean").get<std::vector<double>>();
    auto stdev = j.at("std").get<std::vector<double>>();
    st.mean = Eigen::Map<Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    st.std = Eigen::Map<Vector>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("standardize json: ") + e.what());
  }
  return st;
}

inline void write_training_curve(const std::vector<TrainCurveRow>& curve, const std::string& path) {
  Matrix values(static_cast<Eigen::Index>(curve.size()), 6);
  for (std::size_t r = 0; r < curve.size(); ++r) {
    const TrainCurveRow& row = curve[r];
    values.row(static_cast<Eigen::Index>(r)) << static_cast<double>(row.epoch), row.total,
        row.source_mmd, row.source_kl, row.target_mmd, row.target_kl;
  }
  write_csv(path, {"epoch", "total", "source_mmd", "source_kl", "target_mmd", "target_kl"}, values);
}

inline void write_predictions_csv(const Matrix& probs, const std::string& path) {
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) header.push_back("prob_" + std::to_string(c));
  header.push_back("label");
  Matrix values(probs.rows(), probs.cols() + 1);
  IntVector labels = argmax_rows(probs);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    values.block(r, 0, 1, probs.cols()) = probs.row(r);
    values(r, probs.cols()) = static_cast<double>(labels[r]);
  }
  write_csv(path, header, values);
}

inline void write_density_csv(const DensityGrid& d, const std::string& path) {
  Matrix values(d.grid.size(), 2);
  values.col(0) = d.grid;
  values.col(1) = d.density;
  write_csv(path, {"theta", "density"}, values);
}

// FNV-1a over file bytes; the manifest fingerprint for artifacts.
inline std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

}  // namespace msda
