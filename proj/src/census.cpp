#include <algorithm>
#include <string>

#include "mfff/branching.hpp"
#include "mfff/error.hpp"
#include "mfff/simulate.hpp"

namespace mfff {

namespace {

std::string class_name(std::size_t degree, std::vector<std::size_t> children, int r) {
  std::string s = std::to_string(degree);
  if (r == 1) return s;
  std::sort(children.begin(), children.end());
  s += ':';
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(children[i]);
  }
  return s;
}

void check_radius(int r) {
  if (r != 1 && r != 2) throw InvalidArgument("census: radius must be 1 or 2");
}

}  // namespace

CensusCounts census_graph(int n, const std::vector<Edge>& edges, int r) {
  check_radius(r);
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  CensusCounts counts;
  std::vector<int> stamp(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    const auto& nv = adj[static_cast<std::size_t>(v)];
    if (r == 1) {
      counts[class_name(nv.size(), {}, 1)] += 1.0;
      continue;
    }
    bool cyclic = false;
    stamp[static_cast<std::size_t>(v)] = v;
    for (int u : nv) {
      if (stamp[static_cast<std::size_t>(u)] == v) cyclic = true;  // multi-edge
      stamp[static_cast<std::size_t>(u)] = v;
    }
    std::vector<std::size_t> children;
    for (int u : nv) {
      std::size_t c = 0;
      for (int w : adj[static_cast<std::size_t>(u)]) {
        if (w == v) continue;
        if (stamp[static_cast<std::size_t>(w)] == v) cyclic = true;  // triangle or shared grandchild
        stamp[static_cast<std::size_t>(w)] = v;
        ++c;
      }
      children.push_back(c);
    }
    counts[cyclic ? std::string("cyclic") : class_name(nv.size(), children, 2)] += 1.0;
  }
  return counts;
}

CensusCounts census_trees(const DiscreteMeasure& pi, int r, std::size_t replicas, std::uint64_t seed) {
  check_radius(r);
  const OffspringSampler sampler(pi);
  TreeOptions opts;
  opts.max_depth = r;
  CensusCounts counts;
  Rng rng = make_rng(seed, 0);
  for (std::size_t k = 0; k < replicas; ++k) {
    const auto tree = sample_tree(sampler, RootAge::from_pi(), rng, opts);
    std::size_t degree = 0;
    std::vector<std::size_t> children;
    std::vector<std::size_t> slot(tree.size(), 0);
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (tree.depth[i] == 1) {
        slot[i] = children.size();
        children.push_back(0);
        ++degree;
      }
    }
    for (std::size_t i = 0; i < tree.size(); ++i)
      if (tree.depth[i] == 2) ++children[slot[static_cast<std::size_t>(tree.parent[i])]];
    counts[class_name(degree, children, r)] += 1.0;
  }
  return counts;
}

CensusReport local_census(int n, const std::vector<Edge>& edges, int r, const DiscreteMeasure& pi_reference,
                          std::size_t replicas, std::uint64_t seed) {
  CensusReport rep;
  rep.graph = census_graph(n, edges, r);
  rep.trees = census_trees(pi_reference, r, replicas, seed);
  for (auto& [k, c] : rep.graph) c /= n;
  for (auto& [k, c] : rep.trees) c /= static_cast<double>(replicas);
  CensusCounts keys = rep.graph;
  for (const auto& [k, c] : rep.trees) keys[k] += 0.0;
  for (const auto& [k, unused] : keys) {
    const double p = rep.graph.count(k) ? rep.graph.at(k) : 0.0;
    const double q = rep.trees.count(k) ? rep.trees.at(k) : 0.0;
    if (std::max(p, q) >= 1e-3) rep.tv_gap += 0.5 * std::abs(p - q);
  }
  return rep;
}

}  // namespace mfff
