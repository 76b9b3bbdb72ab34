#pragma once

// Finite-n Monte Carlo: the forest fire process with ages, the age-driven
// random graph, the cluster growth process, and local neighbourhood counts.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mfff/ffode.hpp"
#include "mfff/measure.hpp"
#include "mfff/rng.hpp"

namespace mfff {

enum class IrgMode { FullGraph, PartitionOnly };

using Edge = std::pair<int, int>;  // first < second

struct IrgSample {
  int n = 0;
  std::vector<int> component;  // component label per vertex, labels 0..count-1
  int component_count = 0;
  std::vector<Edge> edges;     // FullGraph only
};

/// Each pair {i, j} present independently with probability
/// 1 - exp(-min(a_i, a_j) / n). Geometric skips over the age-sorted order.
IrgSample sample_irg(int n, const std::vector<double>& ages, Rng& rng, IrgMode mode);

/// Forest fire state with ages. Components are member lists merged smaller
/// into larger; burning resets the whole component to singletons.
class ForestFireState {
 public:
  ForestFireState(const std::vector<double>& ages, const IrgSample& initial, IrgMode mode);

  int n() const { return n_; }
  double time() const { return t_; }
  IrgMode mode() const { return mode_; }

  double age(int i) const { return t_ - birth_[static_cast<std::size_t>(i)]; }
  std::vector<double> ages() const;
  int component_of(int i) const { return comp_[static_cast<std::size_t>(i)]; }
  std::size_t component_size(int c) const { return members_[static_cast<std::size_t>(c)].size(); }
  const std::vector<int>& members(int c) const { return members_[static_cast<std::size_t>(c)]; }
  /// Edge list (FullGraph mode only).
  std::vector<Edge> edges() const;
  const std::vector<std::vector<int>>& adjacency() const { return adj_; }

  void set_time(double t) { t_ = t; }
  /// Adds edge {i, j} (i != j). Returns true if the partition changed.
  bool add_edge(int i, int j);
  /// Burns the component of i; returns its size. With reset_ages false the
  /// ages are left alone (a deliberately wrong dynamics for negative controls).
  std::size_t burn(int i, bool reset_ages = true);

  /// v^n_k for k = 1..K.
  std::vector<double> cluster_densities(int K) const;
  DiscreteMeasure age_measure() const;
  /// Sizes sum to n and every vertex is listed by its component.
  bool check_partition() const;

 private:
  int new_component();

  int n_;
  double t_ = 0.0;
  IrgMode mode_;
  std::vector<double> birth_;
  std::vector<int> comp_;
  std::vector<std::vector<int>> members_;
  std::vector<int> free_;
  std::vector<std::vector<int>> adj_;
};

struct BurnEvent {
  double t = 0.0;
  std::size_t size = 0;
  int vertex = 0;
};

struct BurnLog {
  int n = 0;
  std::vector<BurnEvent> events;
  /// (1/n) * total burnt size up to time t.
  double Phi(double t) const;
};

struct MfffConfig {
  int n = 1000;
  double lambda = -1.0;  // < 0: n^{-1/2}
  MeasureSpec init = DiracAt{0.0};
  double T = 1.0;
  IrgMode mode = IrgMode::PartitionOnly;
  std::vector<double> snapshot_times;
  int K_out = 50;
  bool reset_ages_on_burn = true;
  bool track_pair = false;   // whether vertices 0 and 1 ever share a component
  bool check_every_event = false;
};

struct MfffSnapshot {
  double t = 0.0;
  DiscreteMeasure pi;        // empirical age law
  std::vector<double> v;     // v^n_k, k = 1..K_out
  double Phi = 0.0;
  std::vector<double> ages;  // per vertex
  std::vector<Edge> edges;   // FullGraph mode
};

struct MfffRun {
  MfffConfig cfg;
  double lambda = 0.0;
  std::vector<MfffSnapshot> snapshots;
  BurnLog log;
  bool pair_shared = false;
  std::uint64_t edge_events = 0;
  std::uint64_t lightning_events = 0;
};

/// Event-driven simulation with edge clock rate (n-1)/2 and lightning clock
/// rate n lambda, started from sample_irg of the initial ages.
MfffRun run_mfff(const MfffConfig& cfg, Rng& rng);

/// Initial ages: n i.i.d. draws from the measure (exact for atoms).
std::vector<double> sample_ages(const MeasureSpec& spec, int n, Rng& rng);

struct IrgBin {
  double lo = 0.0, hi = 0.0;  // min-age range
  double pairs = 0.0;
  double observed = 0.0;
  double expected = 0.0;
  double variance = 0.0;
  double z = 0.0;
};

struct IrgTestReport {
  std::vector<IrgBin> bins;
  double zero_bin_pairs = 0.0;     // pairs with min age 0
  double zero_bin_observed = 0.0;  // edges among them (must be 0)
  double chi2 = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

struct IrgTestConfig {
  int n = 200;
  double lambda = 0.05;
  double T = 2.0;
  int replicas = 2000;
  double bin_width = 0.1;
  bool corrupt = false;  // ages not reset on burn
};

/// Bins pairs by min age at T and compares edge counts with the random
/// graph probabilities; pooled over replicas.
IrgTestReport conditional_irg_test(const IrgTestConfig& cfg, std::uint64_t seed);

enum class ExplosionMode { Cap, SurvivalSampling };

struct ClusterGrowthConfig {
  double T = 1.0;
  std::vector<double> observe;  // times at which (C_t, a_t) are reported
  std::uint64_t cap = 1000000;
  ExplosionMode mode = ExplosionMode::Cap;
  bool record_path = false;     // Cap mode only
  bool stop_at_first_explosion = false;
};

struct ClusterGrowthPath {
  double a0 = 0.0;
  std::uint64_t C0 = 1;
  std::vector<double> jump_times;  // recorded path, first entry t = 0
  std::vector<std::uint64_t> sizes;
  std::vector<double> ages;
  std::vector<double> explosions;
  std::vector<std::uint64_t> observed_size;
  std::vector<double> observed_age;
  std::uint64_t cap = 0;
  bool biased = false;  // explosions detected by the cap
};

/// Reusable sampler: jump-size tables from the trajectory's stored states
/// and, in SurvivalSampling mode, a grid of characteristic curves.
class ClusterGrowthSampler {
 public:
  ClusterGrowthSampler(const Trajectory& traj, const DiscreteMeasure& pi0, ExplosionMode mode, double T,
                       double curve_step = 0.01);
  ~ClusterGrowthSampler();
  ClusterGrowthSampler(ClusterGrowthSampler&&) noexcept;

  ClusterGrowthPath sample(const ClusterGrowthConfig& cfg, Rng& rng) const;
  /// psi_r(s), interpolated in r (SurvivalSampling mode).
  double psi(double r, double s) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ClusterGrowthPath cluster_growth_sim(const Trajectory& traj, const DiscreteMeasure& pi0,
                                     const ClusterGrowthConfig& cfg, Rng& rng);

/// Rooted ball of radius r <= 2 up to isomorphism: "d" for r = 1,
/// "d:c1.c2..." (sorted child counts) for r = 2, "cyclic" otherwise.
using CensusCounts = std::map<std::string, double>;

CensusCounts census_graph(int n, const std::vector<Edge>& edges, int r);
CensusCounts census_trees(const DiscreteMeasure& pi, int r, std::size_t replicas, std::uint64_t seed);

struct CensusReport {
  CensusCounts graph;  // frequencies
  CensusCounts trees;
  double tv_gap = 0.0;  // 1/2 sum |p - q| over classes with frequency >= 1e-3
};

CensusReport local_census(int n, const std::vector<Edge>& edges, int r, const DiscreteMeasure& pi_reference,
                          std::size_t replicas, std::uint64_t seed);

// CSV outputs: snapshot v_k ("k,v_k"), burn log ("t,size,vertex").
void write_burnlog_csv(std::ostream& os, const BurnLog& log);
void write_cluster_csv(std::ostream& os, const MfffSnapshot& snap);
nlohmann::json to_json(const IrgTestReport& r);

}  // namespace mfff
