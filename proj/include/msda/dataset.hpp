#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msda/common.hpp"
#include "msda/csv.hpp"

namespace msda {

struct DomainData {
  Matrix x;     // rows x d
  IntVector y;  // size 0 when unlabeled
};

struct MultiDomainDataset {
  std::vector<DomainData> sources;
  Matrix target_x;
  std::vector<std::string> feature_names;
  int n_classes = 0;

  int d() const { return static_cast<int>(target_x.cols()); }
  int n_sources() const { return static_cast<int>(sources.size()); }

  void validate() const {
    if (sources.empty()) throw DataError("dataset: no source domains");
    for (const DomainData& s : sources) {
      if (s.x.rows() == 0) throw DataError("dataset: empty source domain");
      if (s.x.cols() != target_x.cols()) throw DataError("dataset: feature width mismatch");
      if (s.y.size() != s.x.rows()) throw DataError("dataset: label count mismatch");
      for (Eigen::Index i = 0; i < s.y.size(); ++i)
        if (s.y[i] < 0 || s.y[i] >= n_classes) throw DataError("dataset: label out of range");
    }
    if (static_cast<int>(feature_names.size()) != d())
      throw DataError("dataset: feature name count mismatch");
    if (n_classes < 2) throw DataError("dataset: need at least 2 classes");
  }

  // All source rows stacked, with the per-row domain index (the variable C).
  std::pair<Matrix, IntVector> pooled_sources() const {
    Eigen::Index total = 0;
    for (const DomainData& s : sources) total += s.x.rows();
    Matrix x(total, target_x.cols());
    IntVector c(total);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      x.middleRows(at, sources[i].x.rows()) = sources[i].x;
      c.segment(at, sources[i].x.rows()).setConstant(static_cast<int>(i));
      at += sources[i].x.rows();
    }
    return {std::move(x), std::move(c)};
  }

  IntVector pooled_labels() const {
    Eigen::Index total = 0;
    for (const DomainData& s : sources) total += s.x.rows();
    IntVector y(total);
    Eigen::Index at = 0;
    for (const DomainData& s : sources) {
      y.segment(at, s.y.size()) = s.y;
      at += s.y.size();
    }
    return y;
  }

  // Domain index per row over sources then target (target = n_sources).
  IntVector domain_index_values() const {
    Eigen::Index total = target_x.rows();
    for (const DomainData& s : sources) total += s.x.rows();
    IntVector c(total);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      c.segment(at, sources[i].x.rows()).setConstant(static_cast<int>(i));
      at += sources[i].x.rows();
    }
    c.segment(at, target_x.rows()).setConstant(n_sources());
    return c;
  }
};

struct LoadReport {
  std::vector<long long> label_map;  // original label value at class k
  std::vector<std::string> warnings;
};

// Read one labeled CSV per source plus an unlabeled target CSV. All files must
// share the feature columns; the label column may appear in the target file
// and is then dropped with a warning. Label values are remapped to dense
// 0..K-1 in ascending order of the original values.
inline MultiDomainDataset load_csv(const std::vector<std::string>& source_paths,
                                   const std::string& target_path,
                                   const std::string& label_column, LoadReport* report = nullptr) {
  if (source_paths.empty()) throw DataError("load_csv: no source files");
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  MultiDomainDataset ds;
  std::vector<long long> raw_labels_flat;
  std::vector<std::vector<long long>> raw_labels;
  for (const std::string& path : source_paths) {
    CsvTable t = read_csv(path);
    int lc = t.column(label_column);
    if (lc < 0) throw DataError(path + ": label column '" + label_column + "' not found");
    if (t.values.rows() == 0) throw DataError(path + ": no data rows");
    std::vector<std::string> fnames;
    for (std::size_t c = 0; c < t.header.size(); ++c)
      if (static_cast<int>(c) != lc) fnames.push_back(t.header[c]);
    if (ds.feature_names.empty())
      ds.feature_names = fnames;
    else if (ds.feature_names != fnames)
      throw DataError(path + ": feature columns differ from the first source file");
    DomainData dom;
    dom.x.resize(t.values.rows(), static_cast<Eigen::Index>(fnames.size()));
    Eigen::Index fc = 0;
    for (Eigen::Index c = 0; c < t.values.cols(); ++c)
      if (c != lc) dom.x.col(fc++) = t.values.col(c);
    std::vector<long long> labels(static_cast<std::size_t>(t.values.rows()));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
      double v = t.values(r, lc);
      double rv = std::nearbyint(v);
      if (std::abs(v - rv) > 1e-9)
        throw DataError(path + ": non-integer label " + format_cell(v));
      labels[static_cast<std::size_t>(r)] = static_cast<long long>(rv);
      raw_labels_flat.push_back(labels[static_cast<std::size_t>(r)]);
    }
    raw_labels.push_back(std::move(labels));
    ds.sources.push_back(std::move(dom));
  }

  CsvTable tt = read_csv(target_path);
  {
    int lc = tt.column(label_column);
    std::vector<std::string> fnames;
    for (std::size_t c = 0; c < tt.header.size(); ++c)
      if (static_cast<int>(c) != lc) fnames.push_back(tt.header[c]);
    if (lc >= 0)
      rep.warnings.push_back(target_path + ": label column '" + label_column +
                             "' present in target file; dropped");
    if (ds.feature_names != fnames)
      throw DataError(target_path + ": feature columns differ from source files");
    if (tt.values.rows() == 0) throw DataError(target_path + ": no data rows");
    ds.target_x.resize(tt.values.rows(), static_cast<Eigen::Index>(fnames.size()));
    Eigen::Index fc = 0;
    for (Eigen::Index c = 0; c < tt.values.cols(); ++c)
      if (c != lc) ds.target_x.col(fc++) = tt.values.col(c);
  }

  std::vector<long long> uniq = raw_labels_flat;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) throw DataError("load_csv: need at least 2 distinct label values");
  std::map<long long, int> to_class;
  for (std::size_t k = 0; k < uniq.size(); ++k) to_class[uniq[k]] = static_cast<int>(k);
  bool dense = uniq.front() == 0 && uniq.back() == static_cast<long long>(uniq.size()) - 1;
  if (!dense)
    rep.warnings.push_back("labels remapped to dense 0.." + std::to_string(uniq.size() - 1));
  rep.label_map = uniq;
  ds.n_classes = static_cast<int>(uniq.size());
  for (std::size_t i = 0; i < ds.sources.size(); ++i) {
    ds.sources[i].y.resize(static_cast<Eigen::Index>(raw_labels[i].size()));
    for (std::size_t r = 0; r < raw_labels[i].size(); ++r)
      ds.sources[i].y[static_cast<Eigen::Index>(r)] = to_class[raw_labels[i][r]];
  }
  ds.validate();
  return ds;
}

struct StandardizeStats {
  Vector mean;
  Vector std;
};

// Z-score every domain (target included) with statistics pooled over the
// source rows. Constant columns are centered only.
inline StandardizeStats standardize(MultiDomainDataset& ds) {
  auto [pooled, c] = ds.pooled_sources();
  (void)c;
  StandardizeStats st;
  st.mean = pooled.colwise().mean();
  Matrix centered = pooled.rowwise() - st.mean.transpose();
  st.std = (centered.array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < st.std.size(); ++j)
    if (st.std[j] <= 0.0) st.std[j] = 1.0;
  auto apply = [&](Matrix& x) {
    x.rowwise() -= st.mean.transpose();
    x.array().rowwise() /= st.std.transpose().array();
  };
  for (DomainData& s : ds.sources) apply(s.x);
  apply(ds.target_x);
  return st;
}

inline nlohmann::json dataset_metadata(const MultiDomainDataset& ds, const LoadReport* rep,
                                       const StandardizeStats* st) {
  nlohmann::json j;
  j["feature_names"] = ds.feature_names;
  j["n_classes"] = ds.n_classes;
  std::vector<Eigen::Index> sizes;
  for (const DomainData& s : ds.sources) sizes.push_back(s.x.rows());
  j["source_rows"] = sizes;
  j["target_rows"] = ds.target_x.rows();
  if (rep) {
    j["label_map"] = rep->label_map;
    j["warnings"] = rep->warnings;
  }
  if (st) {
    j["standardize_mean"] = std::vector<double>(st->mean.data(), st->mean.data() + st->mean.size());
    j["standardize_std"] = std::vector<double>(st->std.data(), st->std.data() + st->std.size());
  }
  return j;
}

}  // namespace msda
