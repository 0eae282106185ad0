#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msda/graph.hpp"
#include "msda/graph_learn.hpp"
#include "msda/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every command drops its artifacts plus a manifest into one directory. The
// manifest echoes the configuration, records the seed, and fingerprints each
// artifact; no artifact contains a timestamp, so reruns are byte-identical.
class RunDir {
 public:
  RunDir(const std::string& chosen, const std::string& command, std::uint64_t seed) {
    if (chosen.empty()) {
      char stamp[32];
      std::time_t now = std::time(nullptr);
      std::tm tm{};
      gmtime_r(&now, &tm);
      std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
      dir_ = fs::path("run-" + std::string(stamp) + "-seed" + std::to_string(seed));
    } else {
      dir_ = fs::path(chosen);
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw msda::DataError("cannot create run directory " + dir_.string());
    manifest_["command"] = command;
    manifest_["seed"] = seed;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  const fs::path& dir() const { return dir_; }
  void set_config(json cfg) { manifest_["config"] = std::move(cfg); }
  json& manifest() { return manifest_; }

  // hash everything written so far, then write the manifest itself
  void finish() const {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
      if (!entry.is_regular_file()) continue;
      std::string rel = fs::relative(entry.path(), dir_).generic_string();
      if (rel == "manifest.json") continue;
      files.push_back(std::move(rel));
    }
    std::sort(files.begin(), files.end());
    json hashes = json::object();
    for (const std::string& rel : files) hashes[rel] = msda::fnv1a_file((dir_ / rel).string());
    json full = manifest_;
    full["artifacts"] = hashes;
    std::ofstream out(dir_ / "manifest.json");
    if (!out) throw msda::DataError("cannot write manifest in " + dir_.string());
    out << full.dump(2) << "\n";
    std::printf("artifacts in %s\n", dir_.string().c_str());
  }

 private:
  fs::path dir_;
  json manifest_;
};

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw msda::DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw msda::DataError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw msda::DataError(path + ": " + e.what());
  }
}

// --- simulate ---

struct SimulateOpts {
  int sources = 2;
  int rows = 500;
  double theta_scale = 1.0;
  double theta_gain = 4.0;
  int module_width = 32;
  std::string y_link = "bernoulli";
  std::uint64_t seed = 0;
  std::string run_dir;
};

void run_simulate(const SimulateOpts& o) {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = o.sources;
  spec.n_per_domain = o.rows;
  spec.theta_scale = o.theta_scale;
  spec.theta_gain = o.theta_gain;
  spec.module_width = o.module_width;
  spec.y_link = o.y_link;
  spec.seed = o.seed;
  msda::SimulationResult sim = msda::simulate(spec);
  const msda::MultiDomainDataset& ds = sim.dataset;
  const int d = ds.d();

  RunDir run(o.run_dir, "simulate", o.seed);
  std::vector<std::string> header = ds.feature_names;
  header.push_back("Y");
  for (std::size_t i = 0; i < ds.sources.size(); ++i) {
    const msda::DomainData& s = ds.sources[i];
    msda::Matrix m(s.x.rows(), d + 1);
    m.leftCols(d) = s.x;
    for (Eigen::Index r = 0; r < s.x.rows(); ++r) m(r, d) = static_cast<double>(s.y[r]);
    msda::write_csv(run.path("source_" + std::to_string(i + 1) + ".csv"), header, m);
  }
  msda::write_csv(run.path("target.csv"), ds.feature_names, ds.target_x);
  {
    msda::Matrix labels(sim.target_labels.size(), 1);
    for (Eigen::Index r = 0; r < labels.rows(); ++r)
      labels(r, 0) = static_cast<double>(sim.target_labels[r]);
    msda::write_csv(run.path("target_labels.csv"), {"Y"}, labels);
  }
  msda::graph_to_json_file(spec.dag, run.path("truth_graph.json"));

  json meta = msda::dataset_metadata(ds, nullptr, nullptr);
  meta["seed"] = o.seed;
  meta["theta_scale"] = o.theta_scale;
  meta["theta_gain"] = o.theta_gain;
  meta["y_link"] = o.y_link;
  meta["attempts"] = sim.attempts;
  write_json_file(meta, run.path("metadata.json"));

  run.set_config({{"sources", o.sources},
                  {"rows", o.rows},
                  {"theta_scale", o.theta_scale},
                  {"theta_gain", o.theta_gain},
                  {"module_width", o.module_width},
                  {"y_link", o.y_link}});
  run.finish();
}

// --- learn-graph ---

struct LearnGraphOpts {
  std::vector<std::string> sources;
  std::string target;
  std::string label = "Y";
  double alpha = 0.05;
  int max_cond = 2;
  int permutations = 100;
  int max_rows = 400;
  double merge_alpha = 0.2;
  std::uint64_t seed = 0;
  std::string run_dir;
};

void run_learn_graph(const LearnGraphOpts& o) {
  msda::LoadReport rep;
  msda::MultiDomainDataset ds = msda::load_csv(o.sources, o.target, o.label, &rep);
  msda::standardize(ds);

  msda::GraphLearnOptions opt;
  opt.alpha = o.alpha;
  opt.max_cond = o.max_cond;
  opt.n_permutations = o.permutations;
  opt.max_rows = o.max_rows;
  opt.merge_alpha = o.merge_alpha;
  msda::LearnedGraph lg = msda::learn_graph(ds, opt, msda::Rng(o.seed));

  RunDir run(o.run_dir, "learn-graph", o.seed);
  msda::graph_to_json_file(lg.dag, run.path("graph.json"));
  {
    std::ofstream out(run.path("graph.dot"));
    if (!out) throw msda::DataError("cannot write graph.dot");
    out << msda::graph_to_dot(lg.dag);
  }
  {
    std::ofstream out(run.path("report.txt"));
    if (!out) throw msda::DataError("cannot write report.txt");
    out << "seed: " << o.seed << "\n";
    out << "sources: " << ds.n_sources() << ", features: " << ds.d() << ", label: " << o.label
        << "\n";
    out << "kept features (label Markov blanket): ";
    if (lg.skeleton.kept_features.empty()) {
      out << "none";
    } else {
      for (std::size_t k = 0; k < lg.skeleton.kept_features.size(); ++k)
        out << (k ? ", " : "") << ds.feature_names[static_cast<std::size_t>(
                                      lg.skeleton.kept_features[k])];
    }
    out << "\n";
    std::vector<std::string> changing;
    for (int f : lg.skeleton.changing_features)
      changing.push_back(ds.feature_names[static_cast<std::size_t>(f)]);
    if (lg.skeleton.y_changing) changing.push_back(o.label);
    if (changing.empty()) {
      out << "no changing modules detected\n";
    } else {
      out << "changing modules: ";
      for (std::size_t k = 0; k < changing.size(); ++k) out << (k ? ", " : "") << changing[k];
      out << "\n";
    }
    out << "orientation conflicts: " << lg.orient.conflicts.size() << "\n";
    for (const std::string& note : lg.orient.notes) out << "note: " << note << "\n";
  }

  run.set_config({{"sources", o.sources},
                  {"target", o.target},
                  {"label", o.label},
                  {"alpha", o.alpha},
                  {"max_cond", o.max_cond},
                  {"permutations", o.permutations},
                  {"max_rows", o.max_rows},
                  {"merge_alpha", o.merge_alpha}});
  run.manifest()["warnings"] = rep.warnings;
  run.finish();
}

// --- shared training knobs ---

struct TrainKnobs {
  int epochs = 300;
  int batch_size = 128;
  int svi_samples = 1;
  int steps_per_epoch = 0;
  double learning_rate = 1e-3;
  double sigma_init = 0.1;
  int hidden = 32;
  int noise_dim = 1;
  int prediction_samples = 20;
  int synthetic_rows = 2000;
  int classifier_steps = 500;
  int classifier_hidden = 32;
};

void add_train_knobs(CLI::App* cmd, TrainKnobs& k) {
  cmd->add_option("--epochs", k.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", k.batch_size, "rows per domain per step")->capture_default_str();
  cmd->add_option("--svi-samples", k.svi_samples, "posterior draws per objective evaluation")
      ->capture_default_str();
  cmd->add_option("--steps-per-epoch", k.steps_per_epoch, "0 covers the largest domain")
      ->capture_default_str();
  cmd->add_option("--learning-rate", k.learning_rate, "Adam step size")->capture_default_str();
  cmd->add_option("--sigma-init", k.sigma_init, "initial posterior scale")->capture_default_str();
  cmd->add_option("--hidden", k.hidden, "generator hidden width")->capture_default_str();
  cmd->add_option("--noise-dim", k.noise_dim, "generator noise inputs")->capture_default_str();
  cmd->add_option("--prediction-samples", k.prediction_samples, "posterior draws when predicting")
      ->capture_default_str();
  cmd->add_option("--synthetic-rows", k.synthetic_rows, "generated rows per prediction draw")
      ->capture_default_str();
  cmd->add_option("--classifier-steps", k.classifier_steps, "classifier Adam steps")
      ->capture_default_str();
  cmd->add_option("--classifier-hidden", k.classifier_hidden, "classifier hidden width")
      ->capture_default_str();
}

msda::TrainConfig to_train_config(const TrainKnobs& k) {
  msda::TrainConfig tc;
  tc.epochs = k.epochs;
  tc.batch_size = k.batch_size;
  tc.svi_samples = k.svi_samples;
  tc.steps_per_epoch = k.steps_per_epoch;
  tc.adam.learning_rate = k.learning_rate;
  tc.sigma_init = k.sigma_init;
  tc.generator.hidden = k.hidden;
  tc.generator.noise_dim = k.noise_dim;
  tc.prediction_samples = k.prediction_samples;
  tc.synthetic_rows = k.synthetic_rows;
  tc.classifier.steps = k.classifier_steps;
  tc.classifier.hidden = k.classifier_hidden;
  return tc;
}

json knobs_json(const TrainKnobs& k) {
  return {{"epochs", k.epochs},
          {"batch_size", k.batch_size},
          {"svi_samples", k.svi_samples},
          {"steps_per_epoch", k.steps_per_epoch},
          {"learning_rate", k.learning_rate},
          {"sigma_init", k.sigma_init},
          {"hidden", k.hidden},
          {"noise_dim", k.noise_dim},
          {"prediction_samples", k.prediction_samples},
          {"synthetic_rows", k.synthetic_rows},
          {"classifier_steps", k.classifier_steps},
          {"classifier_hidden", k.classifier_hidden}};
}

// --- train ---

struct TrainOpts {
  std::vector<std::string> sources;
  std::string target;
  std::string label = "Y";
  std::string graph;
  TrainKnobs knobs;
  std::uint64_t seed = 0;
  std::string run_dir;
};

void run_train(const TrainOpts& o) {
  msda::LoadReport rep;
  msda::MultiDomainDataset ds = msda::load_csv(o.sources, o.target, o.label, &rep);
  msda::StandardizeStats st = msda::standardize(ds);
  msda::AugmentedDag dag = msda::graph_from_json_file(o.graph);

  msda::TrainConfig tc = to_train_config(o.knobs);
  msda::TrainedModel model = msda::train(ds, dag, tc, msda::Rng(o.seed));
  if (model.aborted)
    std::fprintf(stderr,
                 "warning: non-finite loss encountered; keeping the last finite parameters\n");

  RunDir run(o.run_dir, "train", o.seed);
  fs::create_directories(run.dir() / "bundle");
  msda::save_bundle(model.bundle, run.path("bundle"));
  write_json_file(msda::posterior_to_json(model.posterior), run.path("posterior.json"));
  write_json_file(msda::standardize_to_json(st), run.path("standardize.json"));
  msda::write_training_curve(model.curve, run.path("training_curve.csv"));

  json cfg = knobs_json(o.knobs);
  cfg["sources"] = o.sources;
  cfg["target"] = o.target;
  cfg["label"] = o.label;
  cfg["graph"] = o.graph;
  run.set_config(cfg);
  run.manifest()["aborted"] = model.aborted;
  run.manifest()["warnings"] = rep.warnings;
  run.finish();
}

// --- predict ---

struct PredictOpts {
  std::string model;
  std::string target;
  int samples = 20;
  int synthetic_rows = 2000;
  bool mean_theta = false;
  int classifier_steps = 500;
  int classifier_hidden = 32;
  std::uint64_t seed = 0;
  std::string run_dir;
};

void run_predict(const PredictOpts& o) {
  msda::TrainedModel model;
  model.bundle = msda::load_bundle(o.model + "/bundle");
  model.posterior = msda::posterior_from_json(read_json_file(o.model + "/posterior.json"));
  model.context.mb_features = model.bundle.observed_features();
  msda::StandardizeStats st =
      msda::standardize_from_json(read_json_file(o.model + "/standardize.json"));

  msda::CsvTable t = msda::read_csv(o.target);
  const std::vector<std::string>& names = model.bundle.dag.feature_names;
  msda::Matrix x(t.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t f = 0; f < names.size(); ++f) {
    const int col = t.column(names[f]);
    if (col < 0) throw msda::DataError(o.target + " lacks feature column " + names[f]);
    x.col(static_cast<Eigen::Index>(f)) = t.values.col(col);
  }
  if (st.mean.size() != x.cols()) throw msda::DataError("standardize stats do not fit the model");
  x.rowwise() -= st.mean.transpose();
  x.array().rowwise() /= st.std.transpose().array();

  msda::PredictConfig pc;
  pc.samples = o.samples;
  pc.synthetic_rows = o.synthetic_rows;
  pc.mean_theta = o.mean_theta;
  pc.classifier.steps = o.classifier_steps;
  pc.classifier.hidden = o.classifier_hidden;
  msda::Matrix probs = msda::predict_target(model, x, pc, msda::Rng(o.seed).fork("predict"));

  RunDir run(o.run_dir, "predict", o.seed);
  msda::write_predictions_csv(probs, run.path("predictions.csv"));
  run.set_config({{"model", o.model},
                  {"target", o.target},
                  {"samples", o.samples},
                  {"synthetic_rows", o.synthetic_rows},
                  {"mean_theta", o.mean_theta},
                  {"classifier_steps", o.classifier_steps},
                  {"classifier_hidden", o.classifier_hidden}});
  run.finish();
}

// --- evaluate ---

struct EvaluateOpts {
  int sources = 2;
  int rows = 500;
  double theta_scale = 1.0;
  double theta_gain = 4.0;
  int module_width = 32;
  std::string y_link = "bernoulli";
  int replicates = 10;
  bool learned_graph = false;
  TrainKnobs knobs;
  std::uint64_t seed = 0;
  std::string run_dir;
};

void run_evaluate(const EvaluateOpts& o) {
  msda::PipelineConfig pc;
  pc.sim.dag = msda::reference_graph();
  pc.sim.n_domains = o.sources;
  pc.sim.n_per_domain = o.rows;
  pc.sim.theta_scale = o.theta_scale;
  pc.sim.theta_gain = o.theta_gain;
  pc.sim.module_width = o.module_width;
  pc.sim.y_link = o.y_link;
  pc.train = to_train_config(o.knobs);
  pc.use_learned_graph = o.learned_graph;
  pc.replicates = o.replicates;

  msda::EvaluateResult er = msda::evaluate(pc, o.seed);

  RunDir run(o.run_dir, "evaluate", o.seed);
  std::vector<double> infer, pool;
  for (const msda::ReplicateOutcome& r : er.replicates) {
    infer.push_back(r.infer_accuracy);
    pool.push_back(r.pool_accuracy);
  }
  json metrics = {{"infer", {{"mean", er.infer_mean}, {"std", er.infer_std}}},
                  {"pool", {{"mean", er.pool_mean}, {"std", er.pool_std}}},
                  {"n_replicates", o.replicates},
                  {"replicates", {{"infer", infer}, {"pool", pool}}}};
  write_json_file(metrics, run.path("metrics.json"));

  json cfg = knobs_json(o.knobs);
  cfg["sources"] = o.sources;
  cfg["rows"] = o.rows;
  cfg["theta_scale"] = o.theta_scale;
  cfg["theta_gain"] = o.theta_gain;
  cfg["module_width"] = o.module_width;
  cfg["y_link"] = o.y_link;
  cfg["replicates"] = o.replicates;
  cfg["learned_graph"] = o.learned_graph;
  run.set_config(cfg);
  run.finish();
  std::printf("infer %.4f +/- %.4f | pooled %.4f +/- %.4f over %d replicates\n", er.infer_mean,
              er.infer_std, er.pool_mean, er.pool_std, o.replicates);
}

// --- demo-posterior ---

struct DemoOpts {
  std::vector<double> v_values{1.0, 4.0, 8.0};
  int resolution = 512;
  double prior_limit = 0.0;
  std::string run_dir;
};

void run_demo(const DemoOpts& o) {
  RunDir run(o.run_dir, "demo-posterior", 0);
  for (double v : o.v_values) {
    char name[64];
    std::snprintf(name, sizeof(name), "posterior_v%g.csv", v);
    msda::write_density_csv(msda::gamma_posterior_demo(v, o.resolution), run.path(name));
  }
  if (o.prior_limit > 0.0)
    msda::write_density_csv(msda::gamma_prior_pdf(o.prior_limit, o.resolution),
                            run.path("prior.csv"));
  run.set_config({{"v", o.v_values}, {"resolution", o.resolution}, {"prior_limit", o.prior_limit}});
  run.finish();
}

void add_data_options(CLI::App* cmd, std::vector<std::string>& sources, std::string& target,
                      std::string& label) {
  cmd->add_option("--source", sources, "labeled source csv (repeat per domain)")->required();
  cmd->add_option("--target", target, "unlabeled target csv")->required();
  cmd->add_option("--label", label, "label column name")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-source adaptation: simulate, learn the shifted graph, fit, predict"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file; sections name the subcommand");
  app.get_formatter()->column_width(30);

  SimulateOpts sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "draw a benchmark dataset from the reference graph");
  c_sim->add_option("--sources", sim.sources, "number of source domains")->capture_default_str();
  c_sim->add_option("--rows", sim.rows, "rows per domain")->capture_default_str();
  c_sim->add_option("--theta-scale", sim.theta_scale, "spread of the per-domain shifts")
      ->capture_default_str();
  c_sim->add_option("--theta-gain", sim.theta_gain, "input gain on the change parameter")
      ->capture_default_str();
  c_sim->add_option("--module-width", sim.module_width, "simulator mechanism width")
      ->capture_default_str();
  c_sim->add_option("--y-link", sim.y_link, "bernoulli or hard")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "master seed")->capture_default_str();
  c_sim->add_option("--run-dir", sim.run_dir, "output directory (default: timestamp + seed)");
  c_sim->callback([&] { run_simulate(sim); });

  LearnGraphOpts lg;
  CLI::App* c_lg = app.add_subcommand("learn-graph", "recover the shifted-factor graph from data");
  add_data_options(c_lg, lg.sources, lg.target, lg.label);
  c_lg->add_option("--alpha", lg.alpha, "independence test level")->capture_default_str();
  c_lg->add_option("--max-cond", lg.max_cond, "max conditioning set size")->capture_default_str();
  c_lg->add_option("--permutations", lg.permutations, "permutation draws per test")
      ->capture_default_str();
  c_lg->add_option("--max-rows", lg.max_rows, "pooled row cap for the tests")
      ->capture_default_str();
  c_lg->add_option("--merge-alpha", lg.merge_alpha, "dependence level for merging shifted pairs")
      ->capture_default_str();
  c_lg->add_option("--seed", lg.seed, "master seed")->capture_default_str();
  c_lg->add_option("--run-dir", lg.run_dir, "output directory");
  c_lg->callback([&] { run_learn_graph(lg); });

  TrainOpts tr;
  CLI::App* c_tr = app.add_subcommand("train", "fit generators and domain-shift posteriors");
  add_data_options(c_tr, tr.sources, tr.target, tr.label);
  c_tr->add_option("--graph", tr.graph, "graph json from learn-graph or simulate")->required();
  add_train_knobs(c_tr, tr.knobs);
  c_tr->add_option("--seed", tr.seed, "master seed")->capture_default_str();
  c_tr->add_option("--run-dir", tr.run_dir, "output directory");
  c_tr->callback([&] { run_train(tr); });

  PredictOpts pr;
  CLI::App* c_pr = app.add_subcommand("predict", "label a target csv with a trained model");
  c_pr->add_option("--model", pr.model, "train run directory")->required();
  c_pr->add_option("--target", pr.target, "unlabeled target csv")->required();
  c_pr->add_option("--samples", pr.samples, "posterior draws to average")->capture_default_str();
  c_pr->add_option("--synthetic-rows", pr.synthetic_rows, "generated rows per draw")
      ->capture_default_str();
  c_pr->add_flag("--mean-theta", pr.mean_theta, "use the posterior mean instead of draws");
  c_pr->add_option("--classifier-steps", pr.classifier_steps, "classifier Adam steps")
      ->capture_default_str();
  c_pr->add_option("--classifier-hidden", pr.classifier_hidden, "classifier hidden width")
      ->capture_default_str();
  c_pr->add_option("--seed", pr.seed, "master seed")->capture_default_str();
  c_pr->add_option("--run-dir", pr.run_dir, "output directory");
  c_pr->callback([&] { run_predict(pr); });

  EvaluateOpts ev;
  CLI::App* c_ev = app.add_subcommand("evaluate",
                                      "simulate, adapt, and score against the pooled baseline");
  c_ev->add_option("--sources", ev.sources, "number of source domains")->capture_default_str();
  c_ev->add_option("--rows", ev.rows, "rows per domain")->capture_default_str();
  c_ev->add_option("--theta-scale", ev.theta_scale, "spread of the per-domain shifts")
      ->capture_default_str();
  c_ev->add_option("--theta-gain", ev.theta_gain, "input gain on the change parameter")
      ->capture_default_str();
  c_ev->add_option("--module-width", ev.module_width, "simulator mechanism width")
      ->capture_default_str();
  c_ev->add_option("--y-link", ev.y_link, "bernoulli or hard")->capture_default_str();
  c_ev->add_option("--replicates", ev.replicates, "independent replicates")->capture_default_str();
  c_ev->add_flag("--learned-graph", ev.learned_graph,
                 "learn the graph per replicate instead of using the planted one");
  add_train_knobs(c_ev, ev.knobs);
  c_ev->add_option("--seed", ev.seed, "master seed")->capture_default_str();
  c_ev->add_option("--run-dir", ev.run_dir, "output directory");
  c_ev->callback([&] { run_evaluate(ev); });

  DemoOpts dm;
  CLI::App* c_dm = app.add_subcommand("demo-posterior",
                                      "closed-form posterior of a variance split");
  c_dm->add_option("--v", dm.v_values, "observed variance values")->capture_default_str();
  c_dm->add_option("--resolution", dm.resolution, "grid points")->capture_default_str();
  c_dm->add_option("--prior-limit", dm.prior_limit,
                   "also write the unconditioned density on [0, limit]")
      ->capture_default_str();
  c_dm->add_option("--run-dir", dm.run_dir, "output directory");
  c_dm->callback([&] { run_demo(dm); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const msda::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const msda::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const msda::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
