#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msda/csv.hpp"
#include "msda/dataset.hpp"
#include "msda/kernels.hpp"
#include "msda/simulate.hpp"

namespace fs = std::filesystem;
using msda::IntVector;
using msda::Matrix;
using msda::Rng;
using msda::Vector;

namespace {

struct TmpDir {
  fs::path path;
  TmpDir() : path(fs::temp_directory_path() / ("msda_data_test_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
};

// Pooled two-sample permutation test on the squared discrepancy.
double mmd_permutation_pvalue(const Matrix& a, const Matrix& b, int n_perm, Rng rng) {
  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  double bw = msda::median_heuristic(pooled);
  double stat = msda::mmd2_marginal(a, b, bw);
  int exceed = 0;
  const int na = static_cast<int>(a.rows());
  const int n = static_cast<int>(pooled.rows());
  for (int t = 0; t < n_perm; ++t) {
    std::vector<int> p = rng.fork(static_cast<std::uint64_t>(t)).permutation(n);
    Matrix pa(na, a.cols()), pb(n - na, a.cols());
    for (int i = 0; i < na; ++i) pa.row(i) = pooled.row(p[static_cast<std::size_t>(i)]);
    for (int i = na; i < n; ++i) pb.row(i - na) = pooled.row(p[static_cast<std::size_t>(i)]);
    if (msda::mmd2_marginal(pa, pb, bw) >= stat) ++exceed;
  }
  return (1.0 + exceed) / (1.0 + n_perm);
}

}  // namespace

TEST_CASE("csv reading validates structure") {
  TmpDir tmp;
  std::string ok = tmp.file("ok.csv", "a,b\n1,2\n3.5,-4e2\n");
  msda::CsvTable t = msda::read_csv(ok);
  REQUIRE(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.values.rows() == 2);
  REQUIRE(t.values(1, 1) == -400.0);

  std::string ragged = tmp.file("ragged.csv", "a,b\n1,2\n3\n");
  REQUIRE_THROWS_AS(msda::read_csv(ragged), msda::DataError);
  std::string text = tmp.file("text.csv", "a,b\n1,hello\n");
  REQUIRE_THROWS_AS(msda::read_csv(text), msda::DataError);
  std::string empty = tmp.file("empty.csv", "");
  REQUIRE_THROWS_AS(msda::read_csv(empty), msda::DataError);
  REQUIRE_THROWS_AS(msda::read_csv((tmp.path / "missing.csv").string()), msda::DataError);
}

TEST_CASE("csv writing round-trips doubles exactly") {
  TmpDir tmp;
  Matrix m(2, 2);
  m << 0.1, -3.25e-7, 12345.678901234567, 2.0;
  std::string p = (tmp.path / "w.csv").string();
  msda::write_csv(p, {"u", "v"}, m);
  msda::CsvTable back = msda::read_csv(p);
  REQUIRE((back.values - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multi-domain loading handles shapes, remapping, and target labels") {
  TmpDir tmp;
  std::string s1 = tmp.file("s1.csv", "f1,f2,Y\n1,2,0\n3,4,5\n");
  std::string s2 = tmp.file("s2.csv", "f1,f2,Y\n5,6,5\n7,8,0\n");
  std::string tg = tmp.file("t.csv", "f1,f2\n9,10\n");

  msda::LoadReport rep;
  msda::MultiDomainDataset ds = msda::load_csv({s1, s2}, tg, "Y", &rep);
  REQUIRE(ds.d() == 2);
  REQUIRE(ds.n_sources() == 2);
  REQUIRE(ds.n_classes == 2);
  REQUIRE(ds.feature_names == std::vector<std::string>{"f1", "f2"});
  // label 5 remapped to class 1
  REQUIRE(ds.sources[0].y[0] == 0);
  REQUIRE(ds.sources[0].y[1] == 1);
  REQUIRE(rep.label_map == std::vector<long long>{0, 5});
  REQUIRE_FALSE(rep.warnings.empty());

  // target containing the label column: dropped with a warning
  std::string tg2 = tmp.file("t2.csv", "f1,f2,Y\n9,10,0\n");
  msda::LoadReport rep2;
  msda::MultiDomainDataset ds2 = msda::load_csv({s1, s2}, tg2, "Y", &rep2);
  REQUIRE(ds2.target_x.cols() == 2);
  bool mentioned = false;
  for (const std::string& w : rep2.warnings)
    if (w.find("dropped") != std::string::npos) mentioned = true;
  REQUIRE(mentioned);

  // domain index values: 0,0,1,1 then target=2
  IntVector c = ds.domain_index_values();
  REQUIRE(c.size() == 5);
  REQUIRE(c[0] == 0);
  REQUIRE(c[2] == 1);
  REQUIRE(c[4] == 2);

  std::string bad = tmp.file("bad.csv", "f1,f3,Y\n1,2,0\n");
  REQUIRE_THROWS_AS(msda::load_csv({s1, bad}, tg, "Y"), msda::DataError);
  REQUIRE_THROWS_AS(msda::load_csv({s1, s2}, tg, "nope"), msda::DataError);
}

TEST_CASE("standardization uses pooled source statistics") {
  msda::MultiDomainDataset ds;
  ds.feature_names = {"a", "b"};
  ds.n_classes = 2;
  msda::DomainData d1, d2;
  d1.x.resize(2, 2);
  d1.x << 0, 10, 2, 10;
  d1.y.resize(2);
  d1.y << 0, 1;
  d2.x.resize(2, 2);
  d2.x << 4, 10, 6, 10;
  d2.y.resize(2);
  d2.y << 0, 1;
  ds.sources = {d1, d2};
  ds.target_x.resize(1, 2);
  ds.target_x << 3, 20;

  msda::StandardizeStats st = msda::standardize(ds);
  REQUIRE(st.mean[0] == Catch::Approx(3.0));
  REQUIRE(st.std[1] == 1.0);  // constant column falls back to unit scale
  auto [pooled, c] = ds.pooled_sources();
  REQUIRE(pooled.col(0).mean() == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(std::sqrt(pooled.col(0).array().square().mean()) == Catch::Approx(1.0).epsilon(1e-12));
  // target transformed with the source statistics, not its own
  REQUIRE(ds.target_x(0, 0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(ds.target_x(0, 1) == Catch::Approx(10.0));
}

TEST_CASE("simulation produces the documented shapes deterministically") {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = 2;
  spec.n_per_domain = 500;
  spec.seed = 7;
  msda::SimulationResult r1 = msda::simulate(spec);
  REQUIRE(r1.dataset.n_sources() == 2);
  REQUIRE(r1.dataset.d() == 7);
  REQUIRE(r1.dataset.sources[0].x.rows() == 500);
  REQUIRE(r1.dataset.sources[1].x.rows() == 500);
  REQUIRE(r1.dataset.target_x.rows() == 500);
  REQUIRE(r1.target_labels.size() == 500);

  msda::SimulationResult r2 = msda::simulate(spec);
  REQUIRE((r1.dataset.sources[0].x - r2.dataset.sources[0].x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((r1.dataset.target_x - r2.dataset.target_x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((r1.target_labels - r2.target_labels).cwiseAbs().maxCoeff() == 0);

  // both classes appear with nonzero frequency
  for (const auto& s : r1.dataset.sources) {
    REQUIRE(s.y.minCoeff() == 0);
    REQUIRE(s.y.maxCoeff() == 1);
  }
}

TEST_CASE("zero change scale makes all domains identically distributed") {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = 2;
  spec.n_per_domain = 500;
  spec.theta_scale = 0.0;
  spec.seed = 11;
  msda::SimulationResult r = msda::simulate(spec);
  double p = mmd_permutation_pvalue(r.dataset.sources[0].x, r.dataset.sources[1].x, 100, Rng(77));
  REQUIRE(p > 0.01);
}

TEST_CASE("changing one mechanism parameter touches only the node and its descendants") {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = 2;
  spec.n_per_domain = 200;
  spec.seed = 19;
  msda::SimulationResult r = msda::simulate(spec);

  msda::DomainNoise noise = msda::make_domain_noise(spec.dag, 200, Rng(5).fork("probe"));
  Vector theta = r.model.thetas.row(0);
  auto [x_base, y_base] = msda::generate_domain(spec.dag, r.model.node_mlps, theta, noise, spec.y_link);

  // X3 is node 2 (features are nodes 0..6, Y is 7); its only descendant is X7.
  int group = spec.dag.theta_group_of(2);
  REQUIRE(group >= 0);
  Vector theta2 = theta;
  theta2[group] += 1.5;
  auto [x_mod, y_mod] = msda::generate_domain(spec.dag, r.model.node_mlps, theta2, noise, spec.y_link);

  REQUIRE((y_base - y_mod).cwiseAbs().maxCoeff() == 0);
  for (int f : {0, 1, 3, 4, 5})
    REQUIRE((x_base.col(f) - x_mod.col(f)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((x_base.col(2) - x_mod.col(2)).cwiseAbs().maxCoeff() > 0.0);
  REQUIRE((x_base.col(6) - x_mod.col(6)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("degeneracy detection flags single-class label sets") {
  IntVector all_ones(100);
  all_ones.setConstant(1);
  IntVector balanced(100);
  for (int i = 0; i < 100; ++i) balanced[i] = i % 2;
  REQUIRE(msda::labels_degenerate({all_ones}, 0.95));
  REQUIRE_FALSE(msda::labels_degenerate({balanced}, 0.95));
}

TEST_CASE("simulation rejects invalid specs") {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = 1;
  REQUIRE_THROWS_AS(msda::simulate(spec), msda::ConfigError);
  spec.n_domains = 2;
  spec.y_link = "mystery";
  REQUIRE_THROWS_AS(msda::simulate(spec), msda::ConfigError);
  spec.y_link = "bernoulli";
  spec.dag.set_undirected(3, 6);
  REQUIRE_THROWS_AS(msda::simulate(spec), msda::DataError);
}

TEST_CASE("dataset metadata sidecar carries the load and scaling provenance") {
  msda::SimulationSpec spec;
  spec.dag = msda::reference_graph();
  spec.n_domains = 2;
  spec.n_per_domain = 50;
  spec.seed = 23;
  msda::SimulationResult r = msda::simulate(spec);
  msda::StandardizeStats st = msda::standardize(r.dataset);
  msda::LoadReport rep;
  rep.label_map = {0, 1};
  nlohmann::json j = msda::dataset_metadata(r.dataset, &rep, &st);
  REQUIRE(j.at("n_classes") == 2);
  REQUIRE(j.at("source_rows").size() == 2);
  REQUIRE(j.at("target_rows") == 50);
  REQUIRE(j.at("feature_names").size() == 7);
  REQUIRE(j.at("label_map").size() == 2);
  REQUIRE(j.at("standardize_mean").size() == 7);
}
