#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msda/common.hpp"

namespace msda {

// A node is either the label Y or a "supernode" holding one or more feature
// indices (more than one after a merge of inseparably coupled mechanisms).
struct GraphNode {
  std::vector<int> features;  // empty iff is_y
  bool is_y = false;
  bool changing = false;  // a domain-varying mechanism parameter feeds this node
  bool discrete = false;

  bool operator==(const GraphNode&) const = default;
};

class AugmentedDag {
 public:
  std::vector<GraphNode> nodes;
  std::vector<std::string> feature_names;
  int n_classes = 2;
  // Partition of the changing node indices; nodes in one group share a single
  // mechanism parameter coordinate.
  std::vector<std::vector<int>> theta_groups;

  void init_edges() {
    const std::size_t n = nodes.size();
    directed_.assign(n * n, 0);
    undirected_.assign(n * n, 0);
  }

  int size() const { return static_cast<int>(nodes.size()); }

  bool directed(int a, int b) const { return directed_[idx(a, b)] != 0; }
  bool undirected(int a, int b) const { return undirected_[idx(a, b)] != 0; }
  bool adjacent(int a, int b) const { return directed(a, b) || directed(b, a) || undirected(a, b); }

  void set_directed(int a, int b) {
    if (a == b) throw DataError("graph: self loop");
    directed_[idx(a, b)] = 1;
    undirected_[idx(a, b)] = undirected_[idx(b, a)] = 0;
  }
  void set_undirected(int a, int b) {
    if (a == b) throw DataError("graph: self loop");
    if (directed(a, b) || directed(b, a)) throw DataError("graph: edge already directed");
    undirected_[idx(a, b)] = undirected_[idx(b, a)] = 1;
  }
  void clear_edge(int a, int b) {
    directed_[idx(a, b)] = directed_[idx(b, a)] = 0;
    undirected_[idx(a, b)] = undirected_[idx(b, a)] = 0;
  }
  // Turn an existing undirected edge into a -> b.
  void orient(int a, int b) {
    if (!undirected(a, b)) throw DataError("graph: orient requires an undirected edge");
    set_directed(a, b);
  }

  int y_index() const {
    for (int i = 0; i < size(); ++i)
      if (nodes[static_cast<std::size_t>(i)].is_y) return i;
    throw DataError("graph: Y node absent");
  }

  std::vector<int> parents(int v) const {
    std::vector<int> out;
    for (int a = 0; a < size(); ++a)
      if (directed(a, v)) out.push_back(a);
    return out;
  }
  std::vector<int> children(int v) const {
    std::vector<int> out;
    for (int b = 0; b < size(); ++b)
      if (directed(v, b)) out.push_back(b);
    return out;
  }
  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int b = 0; b < size(); ++b)
      if (b != v && adjacent(v, b)) out.push_back(b);
    return out;
  }
  std::vector<int> undirected_neighbors(int v) const {
    std::vector<int> out;
    for (int b = 0; b < size(); ++b)
      if (undirected(v, b)) out.push_back(b);
    return out;
  }

  std::vector<std::pair<int, int>> directed_edges() const {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < size(); ++a)
      for (int b = 0; b < size(); ++b)
        if (directed(a, b)) out.emplace_back(a, b);
    return out;
  }
  std::vector<std::pair<int, int>> undirected_edges() const {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < size(); ++a)
      for (int b = a + 1; b < size(); ++b)
        if (undirected(a, b)) out.emplace_back(a, b);
    return out;
  }

  bool fully_directed() const { return undirected_edges().empty(); }

  bool is_acyclic() const {
    // Kahn's algorithm over the directed part only.
    const int n = size();
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (directed(a, b)) ++indeg[static_cast<std::size_t>(b)];
    std::vector<int> queue;
    for (int v = 0; v < n; ++v)
      if (indeg[static_cast<std::size_t>(v)] == 0) queue.push_back(v);
    int seen = 0;
    while (!queue.empty()) {
      int v = queue.back();
      queue.pop_back();
      ++seen;
      for (int b = 0; b < n; ++b)
        if (directed(v, b) && --indeg[static_cast<std::size_t>(b)] == 0) queue.push_back(b);
    }
    return seen == n;
  }

  std::vector<int> topological_order() const {
    if (!fully_directed()) throw DataError("graph: topological order needs a fully directed graph");
    const int n = size();
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (directed(a, b)) ++indeg[static_cast<std::size_t>(b)];
    std::vector<int> order;
    std::set<int> ready;
    for (int v = 0; v < n; ++v)
      if (indeg[static_cast<std::size_t>(v)] == 0) ready.insert(v);
    while (!ready.empty()) {
      int v = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(v);
      for (int b = 0; b < n; ++b)
        if (directed(v, b) && --indeg[static_cast<std::size_t>(b)] == 0) ready.insert(b);
    }
    if (static_cast<int>(order.size()) != n) throw DataError("graph: cycle detected");
    return order;
  }

  // True if b is reachable from a along directed edges.
  bool reaches(int a, int b) const {
    std::vector<int> stack{a};
    std::vector<char> seen(static_cast<std::size_t>(size()), 0);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (v == b) return true;
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      for (int c = 0; c < size(); ++c)
        if (directed(v, c)) stack.push_back(c);
    }
    return false;
  }

  std::string node_name(int v) const {
    const GraphNode& n = nodes[static_cast<std::size_t>(v)];
    if (n.is_y) return "Y";
    std::string s;
    for (std::size_t k = 0; k < n.features.size(); ++k) {
      if (k) s += "+";
      int f = n.features[k];
      s += (f >= 0 && f < static_cast<int>(feature_names.size())) ? feature_names[static_cast<std::size_t>(f)]
                                                                  : "F" + std::to_string(f);
    }
    return s;
  }

  int theta_group_of(int v) const {
    for (std::size_t g = 0; g < theta_groups.size(); ++g)
      for (int m : theta_groups[g])
        if (m == v) return static_cast<int>(g);
    return -1;
  }

  void validate() const {
    if (directed_.size() != nodes.size() * nodes.size())
      throw DataError("graph: edge storage not initialized");
    int y_count = 0;
    std::set<int> seen_features;
    for (const GraphNode& n : nodes) {
      if (n.is_y) {
        ++y_count;
        if (!n.features.empty()) throw DataError("graph: Y node cannot carry features");
      } else if (n.features.empty()) {
        throw DataError("graph: feature node with no features");
      }
      for (int f : n.features) {
        if (!seen_features.insert(f).second) throw DataError("graph: feature in two nodes");
        if (f < 0 || f >= static_cast<int>(feature_names.size()))
          throw DataError("graph: feature index out of range");
      }
    }
    if (y_count != 1) throw DataError("graph: expected exactly one Y node");
    if (!is_acyclic()) throw DataError("graph: directed part has a cycle");
    std::set<int> grouped;
    for (const auto& g : theta_groups) {
      if (g.empty()) throw DataError("graph: empty theta group");
      for (int v : g) {
        if (v < 0 || v >= size() || !nodes[static_cast<std::size_t>(v)].changing)
          throw DataError("graph: theta group member must be a changing node");
        if (!grouped.insert(v).second) throw DataError("graph: node in two theta groups");
      }
    }
    for (int v = 0; v < size(); ++v)
      if (nodes[static_cast<std::size_t>(v)].changing && !grouped.count(v))
        throw DataError("graph: changing node missing from theta groups");
  }

  bool same_edges(const AugmentedDag& o) const {
    return directed_ == o.directed_ && undirected_ == o.undirected_;
  }

 private:
  std::size_t idx(int a, int b) const {
    if (a < 0 || b < 0 || a >= size() || b >= size()) throw DataError("graph: node index out of range");
    return static_cast<std::size_t>(a) * nodes.size() + static_cast<std::size_t>(b);
  }
  std::vector<std::uint8_t> directed_;
  std::vector<std::uint8_t> undirected_;
};

// Convenience builder: single-feature nodes X1..Xd plus Y, no edges.
inline AugmentedDag make_dag(int d, int n_classes = 2) {
  AugmentedDag g;
  g.n_classes = n_classes;
  for (int f = 0; f < d; ++f) {
    GraphNode n;
    n.features = {f};
    g.nodes.push_back(n);
    g.feature_names.push_back("X" + std::to_string(f + 1));
  }
  GraphNode y;
  y.is_y = true;
  y.discrete = true;
  g.nodes.push_back(y);
  g.init_edges();
  return g;
}

inline void assign_singleton_theta_groups(AugmentedDag& g) {
  g.theta_groups.clear();
  for (int v = 0; v < g.size(); ++v)
    if (g.nodes[static_cast<std::size_t>(v)].changing) g.theta_groups.push_back({v});
}

// Seven-feature binary-label benchmark graph with five changing mechanisms.
// Feature indices 0..6 are X1..X7; node 7 is Y.
inline AugmentedDag reference_graph() {
  AugmentedDag g = make_dag(7);
  const int y = 7;
  g.set_directed(0, y);  // X1 -> Y
  g.set_directed(3, 1);  // X4 -> X2
  g.set_directed(3, 5);  // X4 -> X6
  g.set_directed(y, 1);  // Y  -> X2
  g.set_directed(y, 2);  // Y  -> X3
  g.set_directed(1, 2);  // X2 -> X3
  g.set_directed(2, 6);  // X3 -> X7
  g.set_directed(y, 4);  // Y  -> X5
  for (int v : {0, 1, 2, 5, y}) g.nodes[static_cast<std::size_t>(v)].changing = true;
  assign_singleton_theta_groups(g);
  g.validate();
  return g;
}

// Parents, children, and parents of children.
inline std::vector<int> markov_blanket(const AugmentedDag& g, int v) {
  std::set<int> mb;
  for (int p : g.parents(v)) mb.insert(p);
  for (int c : g.children(v)) {
    mb.insert(c);
    for (int cp : g.parents(c))
      if (cp != v) mb.insert(cp);
  }
  return {mb.begin(), mb.end()};
}

inline std::vector<int> markov_blanket_of_y(const AugmentedDag& g) {
  return markov_blanket(g, g.y_index());
}

// Unshielded colliders a -> c <- b with a, b non-adjacent; returned as (a, b, c)
// with a < b.
inline std::vector<std::array<int, 3>> v_structures(const AugmentedDag& g) {
  std::vector<std::array<int, 3>> out;
  for (int c = 0; c < g.size(); ++c) {
    std::vector<int> pa = g.parents(c);
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t j = i + 1; j < pa.size(); ++j) {
        int a = std::min(pa[i], pa[j]), b = std::max(pa[i], pa[j]);
        if (!g.adjacent(a, b)) out.push_back({a, b, c});
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Orientation-propagation closure. Rules fire only on undirected edges; a rule
// that would overwrite an existing opposite orientation records a conflict
// instead of applying.
inline void meek_closure(AugmentedDag& g, std::vector<std::string>* conflicts = nullptr) {
  const int n = g.size();
  auto try_orient = [&](int a, int b, const char* rule) {
    if (g.directed(b, a)) {
      if (conflicts)
        conflicts->push_back(std::string(rule) + " wants " + g.node_name(a) + " -> " +
                             g.node_name(b) + " but the reverse is already set");
      return false;
    }
    if (!g.undirected(a, b)) return false;
    g.orient(a, b);
    return true;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (!g.undirected(a, b)) continue;
        // R1: c -> a, c and b non-adjacent  =>  a -> b
        for (int c = 0; c < n && g.undirected(a, b); ++c)
          if (g.directed(c, a) && c != b && !g.adjacent(c, b)) changed |= try_orient(a, b, "R1");
        // R2: a -> c -> b  =>  a -> b
        for (int c = 0; c < n && g.undirected(a, b); ++c)
          if (g.directed(a, c) && g.directed(c, b)) changed |= try_orient(a, b, "R2");
        // R3: a - c -> b, a - d -> b, c and d non-adjacent  =>  a -> b
        for (int c = 0; c < n && g.undirected(a, b); ++c) {
          if (!(g.undirected(a, c) && g.directed(c, b))) continue;
          for (int d = c + 1; d < n && g.undirected(a, b); ++d)
            if (g.undirected(a, d) && g.directed(d, b) && !g.adjacent(c, d))
              changed |= try_orient(a, b, "R3");
        }
        // R4: a adjacent to c, c -> d -> b, c and b non-adjacent  =>  a -> b
        for (int c = 0; c < n && g.undirected(a, b); ++c) {
          if (c == b || !g.adjacent(a, c) || g.adjacent(c, b)) continue;
          for (int d = 0; d < n && g.undirected(a, b); ++d)
            if (d != a && g.directed(c, d) && g.directed(d, b)) changed |= try_orient(a, b, "R4");
        }
      }
  }
}

// Completed PDAG of a DAG: skeleton + unshielded colliders + closure.
inline AugmentedDag cpdag_of(const AugmentedDag& dag) {
  AugmentedDag g = dag;
  auto vs = v_structures(dag);
  g.init_edges();
  for (auto [a, b] : dag.directed_edges())
    if (!g.adjacent(a, b)) g.set_undirected(a, b);
  for (auto [a, b, c] : vs) {
    if (g.undirected(a, c)) g.orient(a, c);
    if (g.undirected(b, c)) g.orient(b, c);
  }
  meek_closure(g);
  return g;
}

// Deterministic consistent extension: repeatedly take the lowest-index node
// that is a directed sink whose undirected neighbors are adjacent to all its
// other neighbors, and point its undirected edges into it.
inline AugmentedDag consistent_extension(const AugmentedDag& pdag) {
  AugmentedDag g = pdag;
  const int n = g.size();
  AugmentedDag work = pdag;  // edges get removed as nodes retire
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  for (int round = 0; round < n; ++round) {
    int pick = -1;
    for (int x = 0; x < n && pick < 0; ++x) {
      if (!active[static_cast<std::size_t>(x)]) continue;
      bool sink = true;
      for (int b = 0; b < n && sink; ++b)
        if (active[static_cast<std::size_t>(b)] && work.directed(x, b)) sink = false;
      if (!sink) continue;
      bool ok = true;
      std::vector<int> und, nbr;
      for (int b = 0; b < n; ++b) {
        if (!active[static_cast<std::size_t>(b)] || b == x) continue;
        if (work.undirected(x, b)) und.push_back(b);
        if (work.adjacent(x, b)) nbr.push_back(b);
      }
      for (int u : und)
        for (int w : nbr)
          if (w != u && !work.adjacent(u, w)) ok = false;
      if (ok) pick = x;
    }
    if (pick < 0) {
      bool remaining = false;
      for (int a = 0; a < n && !remaining; ++a)
        for (int b = 0; b < n && !remaining; ++b)
          if (active[static_cast<std::size_t>(a)] && active[static_cast<std::size_t>(b)] &&
              (work.undirected(a, b) || work.directed(a, b)))
            remaining = true;
      if (!remaining) break;
      throw DataError("graph: partially directed input admits no consistent extension");
    }
    for (int b : work.undirected_neighbors(pick)) {
      if (g.undirected(b, pick)) g.orient(b, pick);
      work.clear_edge(b, pick);
    }
    for (int b = 0; b < n; ++b) {
      work.clear_edge(pick, b);
    }
    active[static_cast<std::size_t>(pick)] = 0;
  }
  if (!g.fully_directed()) throw DataError("graph: extension left undirected edges");
  if (!g.is_acyclic()) throw DataError("graph: extension produced a cycle");
  return g;
}

// Induced subgraph on `keep` (node indices); theta groups are filtered and
// feature names kept global.
inline AugmentedDag induced_subgraph(const AugmentedDag& g, const std::vector<int>& keep) {
  std::vector<int> remap(static_cast<std::size_t>(g.size()), -1);
  AugmentedDag out;
  out.feature_names = g.feature_names;
  out.n_classes = g.n_classes;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    remap[static_cast<std::size_t>(keep[k])] = static_cast<int>(k);
    out.nodes.push_back(g.nodes[static_cast<std::size_t>(keep[k])]);
  }
  out.init_edges();
  for (int a : keep)
    for (int b : keep) {
      if (g.directed(a, b)) out.set_directed(remap[static_cast<std::size_t>(a)], remap[static_cast<std::size_t>(b)]);
      if (g.undirected(a, b) && a < b)
        out.set_undirected(remap[static_cast<std::size_t>(a)], remap[static_cast<std::size_t>(b)]);
    }
  for (const auto& grp : g.theta_groups) {
    std::vector<int> ng;
    for (int v : grp)
      if (remap[static_cast<std::size_t>(v)] >= 0) ng.push_back(remap[static_cast<std::size_t>(v)]);
    if (!ng.empty()) out.theta_groups.push_back(ng);
  }
  return out;
}

// Extend to a full DAG, then restrict to Y plus its Markov blanket.
inline AugmentedDag instantiate_dag(const AugmentedDag& pdag, bool restrict_to_mb = true) {
  AugmentedDag full = consistent_extension(pdag);
  if (!restrict_to_mb) return full;
  std::vector<int> keep = markov_blanket_of_y(full);
  keep.push_back(full.y_index());
  std::sort(keep.begin(), keep.end());
  AugmentedDag out = induced_subgraph(full, keep);
  out.validate();
  return out;
}

inline nlohmann::json graph_to_json(const AugmentedDag& g) {
  nlohmann::json j;
  j["feature_names"] = g.feature_names;
  j["n_classes"] = g.n_classes;
  j["nodes"] = nlohmann::json::array();
  for (const GraphNode& n : g.nodes)
    j["nodes"].push_back({{"features", n.features},
                          {"is_y", n.is_y},
                          {"changing", n.changing},
                          {"discrete", n.discrete}});
  j["directed_edges"] = g.directed_edges();
  j["undirected_edges"] = g.undirected_edges();
  j["theta_groups"] = g.theta_groups;
  return j;
}

inline AugmentedDag graph_from_json(const nlohmann::json& j) {
  AugmentedDag g;
  try {
    g.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    g.n_classes = j.at("n_classes").get<int>();
    for (const auto& nj : j.at("nodes")) {
      GraphNode n;
      n.features = nj.at("features").get<std::vector<int>>();
      n.is_y = nj.at("is_y").get<bool>();
      n.changing = nj.at("changing").get<bool>();
      n.discrete = nj.at("discrete").get<bool>();
      g.nodes.push_back(n);
    }
    g.init_edges();
    for (const auto& e : j.at("directed_edges"))
      g.set_directed(e.at(0).get<int>(), e.at(1).get<int>());
    for (const auto& e : j.at("undirected_edges"))
      g.set_undirected(e.at(0).get<int>(), e.at(1).get<int>());
    g.theta_groups = j.at("theta_groups").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("graph json: ") + e.what());
  }
  return g;
}

inline void graph_to_json_file(const AugmentedDag& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << graph_to_json(g).dump(2) << "\n";
}

inline AugmentedDag graph_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("graph json: ") + e.what());
  }
  return graph_from_json(j);
}

inline std::string graph_to_dot(const AugmentedDag& g) {
  std::string s = "digraph augmented {\n  rankdir=LR;\n";
  for (int v = 0; v < g.size(); ++v) {
    const GraphNode& n = g.nodes[static_cast<std::size_t>(v)];
    s += "  n" + std::to_string(v) + " [label=\"" + g.node_name(v) + "\"";
    if (n.is_y) s += ", shape=doublecircle";
    if (n.changing) s += ", style=filled, fillcolor=lightpink";
    s += "];\n";
  }
  for (std::size_t gi = 0; gi < g.theta_groups.size(); ++gi) {
    s += "  t" + std::to_string(gi) + " [label=\"theta_" + std::to_string(gi) +
         "\", shape=plaintext];\n";
    for (int v : g.theta_groups[gi])
      s += "  t" + std::to_string(gi) + " -> n" + std::to_string(v) + " [style=dashed];\n";
  }
  for (auto [a, b] : g.directed_edges())
    s += "  n" + std::to_string(a) + " -> n" + std::to_string(b) + ";\n";
  for (auto [a, b] : g.undirected_edges())
    s += "  n" + std::to_string(a) + " -> n" + std::to_string(b) + " [dir=none];\n";
  s += "}\n";
  return s;
}

// Contract two adjacent nodes into one supernode with merged mechanism
// parameters. Refuses a merge that would close a directed cycle through the
// rest of the graph.
inline AugmentedDag merge_nodes(const AugmentedDag& g, int a, int b) {
  if (a == b) throw DataError("graph: cannot merge a node with itself");
  if (g.nodes[static_cast<std::size_t>(a)].is_y || g.nodes[static_cast<std::size_t>(b)].is_y)
    throw DataError("graph: cannot merge the label node");
  {
    // A directed path a -> ... -> b through intermediate nodes would become a
    // cycle once a and b coincide.
    AugmentedDag probe = g;
    probe.clear_edge(a, b);
    if (probe.reaches(a, b) || probe.reaches(b, a))
      throw DataError("graph: merge would create a directed cycle");
  }
  const int keep = std::min(a, b), drop = std::max(a, b);
  AugmentedDag out = g;
  GraphNode& kn = out.nodes[static_cast<std::size_t>(keep)];
  const GraphNode& dn = g.nodes[static_cast<std::size_t>(drop)];
  kn.features.insert(kn.features.end(), dn.features.begin(), dn.features.end());
  std::sort(kn.features.begin(), kn.features.end());
  kn.changing = kn.changing || dn.changing;
  out.init_edges();
  auto to_kept = [&](int v) { return v == drop ? keep : v; };
  for (auto [x, y] : g.directed_edges()) {
    int nx = to_kept(x), ny = to_kept(y);
    if (nx == ny) continue;
    if (!out.directed(nx, ny)) {
      if (out.directed(ny, nx)) throw DataError("graph: merge yields contradictory edge directions");
      if (out.undirected(nx, ny)) out.clear_edge(nx, ny);
      out.set_directed(nx, ny);
    }
  }
  for (auto [x, y] : g.undirected_edges()) {
    int nx = to_kept(x), ny = to_kept(y);
    if (nx == ny || out.adjacent(nx, ny)) continue;
    out.set_undirected(nx, ny);
  }
  // Union the two nodes' theta groups (and drop the retired index).
  std::vector<std::vector<int>> groups;
  std::vector<int> merged_group;
  for (const auto& grp : g.theta_groups) {
    bool hit = false;
    for (int v : grp)
      if (v == a || v == b) hit = true;
    std::vector<int> mapped;
    for (int v : grp)
      if (v != drop) mapped.push_back(v);
    if (hit)
      merged_group.insert(merged_group.end(), mapped.begin(), mapped.end());
    else if (!mapped.empty())
      groups.push_back(mapped);
  }
  if (kn.changing) {
    merged_group.push_back(keep);
    std::sort(merged_group.begin(), merged_group.end());
    merged_group.erase(std::unique(merged_group.begin(), merged_group.end()), merged_group.end());
    groups.push_back(merged_group);
  }
  // Reindex everything past the dropped slot.
  std::vector<int> keep_list;
  for (int v = 0; v < g.size(); ++v)
    if (v != drop) keep_list.push_back(v);
  AugmentedDag shrunk = induced_subgraph(out, keep_list);
  shrunk.theta_groups.clear();
  for (auto& grp : groups) {
    for (int& v : grp)
      if (v > drop) --v;
    std::sort(grp.begin(), grp.end());
    shrunk.theta_groups.push_back(grp);
  }
  if (!shrunk.is_acyclic()) throw DataError("graph: merge created a cycle");
  return shrunk;
}

}  // namespace msda
