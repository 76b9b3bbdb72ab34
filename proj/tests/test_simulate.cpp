#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfff/agepde.hpp"
#include "mfff/branching.hpp"
#include "mfff/charcurves.hpp"
#include "mfff/error.hpp"
#include "mfff/simulate.hpp"
#include "mfff/stats.hpp"

using namespace mfff;

namespace {

const Trajectory& ode() {
  static const Trajectory tr = [] {
    SolverConfig c;
    c.K = 1000;
    c.store_every = 10;
    return solve(Model::ForestFire, std::vector<double>{1.0}, 2.6, c);
  }();
  return tr;
}

double l1_first(const std::vector<double>& a, const std::vector<double>& b, int K) {
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += std::abs(a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]);
  return s;
}

}  // namespace

TEST_CASE("age-driven random graph") {
  Rng rng(1);
  auto empty = sample_irg(50, std::vector<double>(50, 0.0), rng, IrgMode::FullGraph);
  CHECK(empty.edges.empty());
  CHECK(empty.component_count == 50);

  // n = 2, ages (1, 3): edge probability 1 - e^{-1/2}
  double hits = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) hits += static_cast<double>(sample_irg(2, {1.0, 3.0}, rng, IrgMode::FullGraph).edges.size());
  const double p = 1.0 - std::exp(-0.5);
  CHECK(std::abs(hits / N - p) <= 4.0 * std::sqrt(p * (1 - p) / N));

  // equal ages: Erdos-Renyi with p = 1 - e^{-x/n}
  const int n = 200;
  const double q = 1.0 - std::exp(-5.0 / n);
  double edges = 0.0;
  const int reps = 300;
  for (int i = 0; i < reps; ++i)
    edges += static_cast<double>(sample_irg(n, std::vector<double>(n, 5.0), rng, IrgMode::FullGraph).edges.size());
  const double pairs = reps * n * (n - 1) / 2.0;
  CHECK(std::abs(edges - pairs * q) <= 4.0 * std::sqrt(pairs * q * (1 - q)));

  // both modes consume the generator identically
  std::vector<double> ages(300);
  for (std::size_t i = 0; i < ages.size(); ++i) ages[i] = 0.01 * static_cast<double>(i);
  Rng r1(9), r2(9);
  auto full = sample_irg(300, ages, r1, IrgMode::FullGraph);
  auto part = sample_irg(300, ages, r2, IrgMode::PartitionOnly);
  CHECK(full.component == part.component);
  CHECK(part.edges.empty());
  for (const auto& [a, b] : full.edges) CHECK(a < b);
}

TEST_CASE("forest fire state bookkeeping") {
  std::vector<double> ages(6, 0.0);
  Rng rng(2);
  ForestFireState st(ages, sample_irg(6, ages, rng, IrgMode::FullGraph), IrgMode::FullGraph);
  st.set_time(1.0);
  CHECK(st.add_edge(0, 1));
  CHECK_FALSE(st.add_edge(1, 0));
  CHECK(st.add_edge(1, 2));
  CHECK(st.component_size(st.component_of(0)) == 3);
  CHECK(st.check_partition());
  st.set_time(1.5);
  CHECK(st.burn(2) == 3);
  CHECK(st.age(0) == 0.0);
  CHECK(st.age(5) == 1.5);
  CHECK(st.edges().empty());
  CHECK(st.check_partition());
  const auto v = st.cluster_densities(3);
  CHECK(v[0] == 1.0);
}

TEST_CASE("Erdos-Renyi phase matches Flory") {
  // pooled over replicas: a single run carries l1 noise of a few 1e-2 near t = 1
  MfffConfig c;
  c.n = 100000;
  c.lambda = 0.0;
  c.T = 0.9;
  c.snapshot_times = {0.3, 0.6, 0.9};
  const int R = 40;
  std::vector<std::vector<double>> v(3, std::vector<double>(50, 0.0));
  for (int r = 0; r < R; ++r) {
    Rng rng = make_rng(4, static_cast<std::uint64_t>(r));
    const auto run = run_mfff(c, rng);
    REQUIRE(run.snapshots.size() == 3);
    CHECK(run.log.events.empty());
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 50; ++k) v[i][k] += run.snapshots[i].v[k] / R;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> fl(50);
    for (int k = 1; k <= 50; ++k) fl[static_cast<std::size_t>(k - 1)] = flory_monodisperse(k, c.snapshot_times[i]);
    CHECK(l1_first(v[i], fl, 50) <= 0.01);
  }
}

TEST_CASE("self-organized critical regime at n = 1e5") {
  AgeOptions ao;
  ao.snapshot_times = {0.5, 1.5, 2.5};
  const auto age = evolve(DiscreteMeasure::dirac(0.0), 2.5, ao);
  MfffConfig c;
  c.n = 100000;
  c.T = 2.5;
  c.snapshot_times = {0.5, 1.5, 2.5};
  c.check_every_event = false;
  const int R = 4;
  std::vector<std::vector<double>> pos(3), w(3), v(3, std::vector<double>(50, 0.0));
  std::vector<double> Phi(3, 0.0);
  for (int r = 0; r < R; ++r) {
    Rng rng = make_rng(21, static_cast<std::uint64_t>(r));
    const auto run = run_mfff(c, rng);
    CHECK(run.lambda == doctest::Approx(1.0 / std::sqrt(100000.0)));
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& s = run.snapshots[i];
      for (std::size_t j = 0; j < s.pi.size(); ++j) {
        pos[i].push_back(s.pi.positions()[j]);
        w[i].push_back(s.pi.weights()[j] / R);
      }
      for (std::size_t k = 0; k < 50; ++k) v[i][k] += s.v[k] / R;
      Phi[i] += s.Phi / R;
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double t = ao.snapshot_times[i];
    CHECK(levy_distance(DiscreteMeasure(pos[i], w[i]), age.snapshot(t)) <= 0.05);
    CHECK(l1_first(v[i], ode().nearest(t).v, 50) <= 0.05);
    double ip = 0.0;
    for (std::size_t j = 0; j + 1 < ode().times.size(); ++j)
      if (ode().times[j] < t - 1e-9) ip += ode().phi[j] * (ode().times[j + 1] - ode().times[j]);
    CHECK(std::abs(Phi[i] - ip) <= 0.05);
  }
}

TEST_CASE("determinism and partition invariant") {
  MfffConfig c;
  c.n = 2000;
  c.T = 2.0;
  c.mode = IrgMode::FullGraph;
  c.snapshot_times = {1.0, 2.0};
  c.check_every_event = true;
  Rng a = make_rng(5, 1), b = make_rng(5, 1);
  const auto r1 = run_mfff(c, a);
  const auto r2 = run_mfff(c, b);
  std::ostringstream o1, o2;
  write_burnlog_csv(o1, r1.log);
  write_burnlog_csv(o2, r2.log);
  CHECK(o1.str() == o2.str());
  CHECK_FALSE(r1.log.events.empty());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r1.snapshots[i].pi == r2.snapshots[i].pi);
    CHECK(r1.snapshots[i].edges == r2.snapshots[i].edges);
  }
  double last = -1.0, prev_phi = 0.0;
  for (const auto& e : r1.log.events) {
    CHECK(e.t > last);
    last = e.t;
    CHECK(r1.log.Phi(e.t) >= prev_phi);
    prev_phi = r1.log.Phi(e.t);
  }
}

TEST_CASE("conditional random graph structure") {
  IrgTestConfig c;
  auto ok = conditional_irg_test(c, 77);
  CHECK(ok.zero_bin_observed == 0.0);
  CHECK(ok.dof >= 10.0);
  CHECK(ok.p_value > 0.001);
  c.corrupt = true;
  auto bad = conditional_irg_test(c, 77);
  CHECK(bad.p_value < 1e-6);
}

TEST_CASE("cluster growth process") {
  const auto pi0 = DiscreteMeasure::dirac(0.0);
  SUBCASE("no explosions before gelation") {
    ClusterGrowthSampler cg(ode(), pi0, ExplosionMode::Cap, 0.99);
    ClusterGrowthConfig cfg;
    cfg.T = 0.99;
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(cg.sample(cfg, rng).explosions.empty());
  }
  SUBCASE("marginal law of C_t") {
    for (auto mode : {ExplosionMode::Cap, ExplosionMode::SurvivalSampling}) {
      ClusterGrowthSampler cg(ode(), pi0, mode, 2.0);
      ClusterGrowthConfig cfg;
      cfg.T = 2.0;
      cfg.mode = mode;
      cfg.observe = {0.5, 2.0};
      const int N = 20000;
      std::vector<std::vector<double>> counts(2, std::vector<double>(10, 0.0));
      Rng rng = make_rng(13, static_cast<std::uint64_t>(mode));
      for (int i = 0; i < N; ++i) {
        const auto p = cg.sample(cfg, rng);
        REQUIRE(p.observed_size.size() == 2);
        for (std::size_t j = 0; j < 2; ++j)
          if (p.observed_size[j] <= 10) counts[j][p.observed_size[j] - 1] += 1.0;
        if (!p.explosions.empty()) {
          CHECK(p.observed_age[1] == doctest::Approx(2.0 - p.explosions.back()));
        } else {
          CHECK(p.observed_age[1] == 2.0);
        }
      }
      for (std::size_t j = 0; j < 2; ++j) {
        const auto& v = ode().nearest(cfg.observe[j]).v;
        for (std::size_t k = 0; k < 10; ++k) {
          const double f = counts[j][k] / N;
          CHECK(std::abs(f - v[k]) <= 3.0 * std::sqrt(v[k] * (1 - v[k]) / N));
        }
      }
    }
  }
  SUBCASE("size given age follows the rooted tree") {
    AgeOptions ao;
    ao.snapshot_times = {2.0};
    const auto pi2 = evolve(pi0, 2.0, ao).snapshot(2.0);
    ClusterGrowthSampler cg(ode(), pi0, ExplosionMode::SurvivalSampling, 2.0);
    ClusterGrowthConfig cfg;
    cfg.T = 2.0;
    cfg.mode = ExplosionMode::SurvivalSampling;
    cfg.observe = {2.0};
    const double lo = 0.5, hi = 1.0;
    std::vector<double> a(11, 0.0), b(11, 0.0);  // sizes 1..10 and > 10
    Rng rng(17);
    for (int i = 0; i < 40000; ++i) {
      const auto p = cg.sample(cfg, rng);
      if (p.observed_age[0] < lo || p.observed_age[0] >= hi) continue;
      a[std::min<std::size_t>(p.observed_size[0], 11) - 1] += 1.0;
    }
    const OffspringSampler s(pi2);
    double drawn = 0.0;
    while (drawn < 20000.0) {
      const double age = pi2.positions()[s.from_pi(rng)];
      if (age < lo || age >= hi) continue;
      b[std::min<std::size_t>(sample_size(s, RootAge::fixed(age), rng, 100000), 11) - 1] += 1.0;
      drawn += 1.0;
    }
    CHECK(stats::chi_square_two_sample(a, b).p_value > 0.001);
  }
}

TEST_CASE("cluster growth no-explosion frequency matches the characteristic curve") {
  ClusterGrowthSampler cg(ode(), DiscreteMeasure::dirac(0.0), ExplosionMode::Cap, 2.0);
  ClusterGrowthConfig cfg;
  cfg.T = 2.0;
  cfg.stop_at_first_explosion = true;
  Rng rng(31);
  const int N = 10000;
  int survived = 0;
  for (int i = 0; i < N; ++i) survived += cg.sample(cfg, rng).explosions.empty() ? 1 : 0;
  const double f = static_cast<double>(survived) / N;
  const double psi = solve_backward(ode(), 2.0).psi_at_zero;
  CHECK(std::abs(f - psi) <= 3.0 * std::sqrt(psi * (1 - psi) / N));
}

TEST_CASE("tagged pair rarely shares a component") {
  std::vector<double> freq;
  for (int n : {1000, 10000, 100000}) {
    MfffConfig c;
    c.n = n;
    c.T = 2.0;
    c.track_pair = true;
    const int R = 300;
    int shared = 0;
    for (int r = 0; r < R; ++r) {
      Rng rng = make_rng(41 + static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r));
      shared += run_mfff(c, rng).pair_shared ? 1 : 0;
    }
    freq.push_back(static_cast<double>(shared) / R);
  }
  CHECK(freq[0] > freq[1]);
  CHECK(freq[1] > freq[2]);
}

TEST_CASE("local census") {
  auto only = census_graph(10, {}, 2);
  REQUIRE(only.size() == 1);
  CHECK(only.begin()->first == "0:");
  CHECK(census_graph(3, {{0, 1}, {1, 2}, {0, 2}}, 2).at("cyclic") == 3.0);

  // isolated vertices: P(no children) = \int e^{-m_s} dpi(s), pi = Uniform(0, 2), m_s = s - s^2/4
  Rng rng(8);
  const int n = 100000;
  const auto ages = sample_ages(Uniform{2.0}, n, rng);
  const auto g = sample_irg(n, ages, rng, IrgMode::FullGraph);
  double oracle = 0.0;
  const int M = 2000;
  for (int i = 0; i <= M; ++i) {
    const double s = 2.0 * i / M;
    const double wt = (i == 0 || i == M) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    oracle += wt * std::exp(-(s - s * s / 4.0)) * 0.5;
  }
  oracle *= 2.0 / M / 3.0;
  CHECK(std::abs(census_graph(n, g.edges, 1).at("0") / n - oracle) <= 5e-3);

  const auto trees = census_trees(discretize(Uniform{2.0}, 400), 1, 200000, 3);
  CHECK(std::abs(trees.at("0") / 200000.0 - oracle) <= 5e-3);

  MfffConfig c;
  c.n = 10000;
  c.T = 2.0;
  c.mode = IrgMode::FullGraph;
  c.snapshot_times = {2.0};
  Rng r2 = make_rng(6, 0);
  const auto run = run_mfff(c, r2);
  const auto& s = run.snapshots.back();
  CHECK(local_census(c.n, s.edges, 1, s.pi, 200000, 4).tv_gap <= 0.02);
}
