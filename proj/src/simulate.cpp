#include "mfff/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mfff/branching.hpp"
#include "mfff/charcurves.hpp"
#include "mfff/error.hpp"
#include "mfff/stats.hpp"

namespace mfff {

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// (0, 1], safe for logarithms
double uniform_open(Rng& rng) { return 1.0 - uniform01(rng); }

int uniform_int(Rng& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(static_cast<std::size_t>(n)) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) {
    while (p[static_cast<std::size_t>(x)] != x) {
      p[static_cast<std::size_t>(x)] = p[static_cast<std::size_t>(p[static_cast<std::size_t>(x)])];
      x = p[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) p[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

IrgSample sample_irg(int n, const std::vector<double>& ages, Rng& rng, IrgMode mode) {
  if (n < 1) throw InvalidArgument("sample_irg: n must be >= 1");
  if (ages.size() != static_cast<std::size_t>(n)) throw InvalidArgument("sample_irg: need one age per vertex");
  for (double a : ages)
    if (!(a >= 0.0) || !std::isfinite(a)) throw InvalidArgument("sample_irg: ages must be finite and >= 0");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ages[static_cast<std::size_t>(a)] < ages[static_cast<std::size_t>(b)]; });

  IrgSample out;
  out.n = n;
  UnionFind uf(n);
  const double nd = n;
  for (int p = 0; p + 1 < n; ++p) {
    const int u = order[static_cast<std::size_t>(p)];
    const double a = ages[static_cast<std::size_t>(u)];
    if (a == 0.0) continue;
    // every later vertex is at least as old, so the row probability is 1 - e^{-a/n}
    const double rate = a / nd;
    long q = p;
    for (;;) {
      const double skip = std::floor(-std::log(uniform_open(rng)) / rate);
      if (skip >= static_cast<double>(n)) break;
      q += 1 + static_cast<long>(skip);
      if (q >= n) break;
      const int v = order[static_cast<std::size_t>(q)];
      uf.unite(u, v);
      if (mode == IrgMode::FullGraph) out.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
  }
  out.component.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int r = uf.find(i);
    if (label[static_cast<std::size_t>(r)] < 0) label[static_cast<std::size_t>(r)] = out.component_count++;
    out.component[static_cast<std::size_t>(i)] = label[static_cast<std::size_t>(r)];
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

ForestFireState::ForestFireState(const std::vector<double>& ages, const IrgSample& initial, IrgMode mode)
    : n_(initial.n), mode_(mode) {
  if (ages.size() != static_cast<std::size_t>(n_)) throw InvalidArgument("ForestFireState: need one age per vertex");
  birth_.resize(ages.size());
  for (std::size_t i = 0; i < ages.size(); ++i) birth_[i] = -ages[i];
  comp_ = initial.component;
  members_.assign(static_cast<std::size_t>(initial.component_count), {});
  for (int i = 0; i < n_; ++i) members_[static_cast<std::size_t>(comp_[static_cast<std::size_t>(i)])].push_back(i);
  if (mode_ == IrgMode::FullGraph) {
    adj_.assign(static_cast<std::size_t>(n_), {});
    for (const auto& [a, b] : initial.edges) {
      adj_[static_cast<std::size_t>(a)].push_back(b);
      adj_[static_cast<std::size_t>(b)].push_back(a);
    }
  }
}

std::vector<double> ForestFireState::ages() const {
  std::vector<double> a(birth_.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = t_ - birth_[i];
  return a;
}

std::vector<Edge> ForestFireState::edges() const {
  std::vector<Edge> e;
  for (int i = 0; i < static_cast<int>(adj_.size()); ++i)
    for (int j : adj_[static_cast<std::size_t>(i)])
      if (i < j) e.emplace_back(i, j);
  std::sort(e.begin(), e.end());
  return e;
}

int ForestFireState::new_component() {
  if (!free_.empty()) {
    const int c = free_.back();
    free_.pop_back();
    return c;
  }
  members_.emplace_back();
  return static_cast<int>(members_.size()) - 1;
}

bool ForestFireState::add_edge(int i, int j) {
  if (i == j) throw InvalidArgument("add_edge: loops are not allowed");
  if (mode_ == IrgMode::FullGraph) {
    auto& ai = adj_[static_cast<std::size_t>(i)];
    auto& aj = adj_[static_cast<std::size_t>(j)];
    const auto& shorter = ai.size() <= aj.size() ? ai : aj;
    const int other = ai.size() <= aj.size() ? j : i;
    if (std::find(shorter.begin(), shorter.end(), other) != shorter.end()) return false;
    ai.push_back(j);
    aj.push_back(i);
  }
  int a = comp_[static_cast<std::size_t>(i)], b = comp_[static_cast<std::size_t>(j)];
  if (a == b) return false;
  if (members_[static_cast<std::size_t>(a)].size() < members_[static_cast<std::size_t>(b)].size()) std::swap(a, b);
  auto& big = members_[static_cast<std::size_t>(a)];
  auto& small = members_[static_cast<std::size_t>(b)];
  for (int v : small) comp_[static_cast<std::size_t>(v)] = a;
  big.insert(big.end(), small.begin(), small.end());
  small.clear();
  small.shrink_to_fit();
  free_.push_back(b);
  return true;
}

std::size_t ForestFireState::burn(int i, bool reset_ages) {
  const int c = comp_[static_cast<std::size_t>(i)];
  std::vector<int> list = std::move(members_[static_cast<std::size_t>(c)]);
  members_[static_cast<std::size_t>(c)].clear();
  for (std::size_t k = 0; k < list.size(); ++k) {
    const int v = list[k];
    if (reset_ages) birth_[static_cast<std::size_t>(v)] = t_;
    if (mode_ == IrgMode::FullGraph) adj_[static_cast<std::size_t>(v)].clear();
    const int nc = k == 0 ? c : new_component();
    comp_[static_cast<std::size_t>(v)] = nc;
    members_[static_cast<std::size_t>(nc)].push_back(v);
  }
  return list.size();
}

std::vector<double> ForestFireState::cluster_densities(int K) const {
  std::vector<double> v(static_cast<std::size_t>(std::max(K, 0)), 0.0);
  for (const auto& m : members_)
    if (!m.empty() && m.size() <= v.size()) v[m.size() - 1] += static_cast<double>(m.size());
  for (auto& x : v) x /= n_;
  return v;
}

DiscreteMeasure ForestFireState::age_measure() const {
  std::vector<double> a = ages();
  std::vector<double> w(a.size(), 1.0 / n_);
  return DiscreteMeasure(std::move(a), std::move(w));
}

bool ForestFireState::check_partition() const {
  std::size_t total = 0;
  for (std::size_t c = 0; c < members_.size(); ++c) {
    total += members_[c].size();
    for (int v : members_[c])
      if (comp_[static_cast<std::size_t>(v)] != static_cast<int>(c)) return false;
  }
  return total == static_cast<std::size_t>(n_);
}

double BurnLog::Phi(double t) const {
  double s = 0.0;
  for (const auto& e : events) {
    if (e.t > t) break;
    s += static_cast<double>(e.size);
  }
  return s / n;
}

std::vector<double> sample_ages(const MeasureSpec& spec, int n, Rng& rng) {
  std::vector<double> a(static_cast<std::size_t>(n));
  if (const auto* d = std::get_if<DiracAt>(&spec)) {
    std::fill(a.begin(), a.end(), d->x);
    return a;
  }
  if (const auto* u = std::get_if<Uniform>(&spec)) {
    for (auto& x : a) x = u->c * uniform01(rng);
    return a;
  }
  if (std::holds_alternative<SechSquaredStationary>(spec)) {
    // F(x) = tanh(x / 2)
    for (auto& x : a) x = 2.0 * std::atanh(uniform01(rng));
    return a;
  }
  const DiscreteMeasure mu = discretize(spec, 4096);
  std::vector<double> cdf(mu.size());
  std::partial_sum(mu.weights().begin(), mu.weights().end(), cdf.begin());
  for (auto& x : a) {
    const double u = uniform01(rng) * cdf.back();
    const auto j = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), mu.size() - 1);
    x = mu.positions()[j];
  }
  return a;
}

MfffRun run_mfff(const MfffConfig& cfg, Rng& rng) {
  if (cfg.n < 2) throw InvalidArgument("run_mfff: n must be >= 2");
  if (!(cfg.T >= 0.0)) throw InvalidArgument("run_mfff: T must be >= 0");
  MfffRun run;
  run.cfg = cfg;
  run.lambda = cfg.lambda < 0.0 ? 1.0 / std::sqrt(static_cast<double>(cfg.n)) : cfg.lambda;
  run.log.n = cfg.n;

  const auto ages0 = sample_ages(cfg.init, cfg.n, rng);
  ForestFireState st(ages0, sample_irg(cfg.n, ages0, rng, cfg.mode), cfg.mode);

  auto snaps = cfg.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  std::size_t next = 0;
  double Phi = 0.0;
  auto record = [&](double t) {
    st.set_time(t);
    MfffSnapshot s;
    s.t = t;
    s.ages = st.ages();
    s.pi = st.age_measure();
    s.v = st.cluster_densities(cfg.K_out);
    s.Phi = Phi / cfg.n;
    if (cfg.mode == IrgMode::FullGraph) s.edges = st.edges();
    run.snapshots.push_back(std::move(s));
  };

  const double rate_edge = 0.5 * (cfg.n - 1);
  const double rate_light = cfg.n * run.lambda;
  const double total = rate_edge + rate_light;
  std::exponential_distribution<double> clock(total);
  if (cfg.track_pair && st.component_of(0) == st.component_of(1)) run.pair_shared = true;

  double t = 0.0;
  for (;;) {
    const double tn = t + clock(rng);
    while (next < snaps.size() && snaps[next] <= std::min(tn, cfg.T)) record(snaps[next++]);
    if (tn > cfg.T) break;
    t = tn;
    st.set_time(t);
    if (uniform01(rng) * total < rate_edge) {
      ++run.edge_events;
      const int i = uniform_int(rng, cfg.n);
      int j = uniform_int(rng, cfg.n - 1);
      if (j >= i) ++j;
      if (st.add_edge(i, j) && cfg.track_pair && st.component_of(0) == st.component_of(1)) run.pair_shared = true;
    } else {
      ++run.lightning_events;
      const int i = uniform_int(rng, cfg.n);
      const std::size_t size = st.burn(i, cfg.reset_ages_on_burn);
      Phi += static_cast<double>(size);
      run.log.events.push_back({t, size, i});
    }
    if (cfg.check_every_event && !st.check_partition())
      throw NumericalFailure("run_mfff: partition invariant violated", t);
  }
  return run;
}

IrgTestReport conditional_irg_test(const IrgTestConfig& cfg, std::uint64_t seed) {
  if (cfg.n > 500) throw InvalidArgument("conditional_irg_test: n must be <= 500");
  const int nb = static_cast<int>(std::ceil(cfg.T / cfg.bin_width)) + 1;
  IrgTestReport rep;
  rep.bins.resize(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    rep.bins[static_cast<std::size_t>(b)].lo = b * cfg.bin_width;
    rep.bins[static_cast<std::size_t>(b)].hi = (b + 1) * cfg.bin_width;
  }
  const auto n = static_cast<std::size_t>(cfg.n);
  std::vector<char> adj(n * n);
  for (int r = 0; r < cfg.replicas; ++r) {
    MfffConfig mc;
    mc.n = cfg.n;
    mc.lambda = cfg.lambda;
    mc.T = cfg.T;
    mc.mode = IrgMode::FullGraph;
    mc.snapshot_times = {cfg.T};
    mc.K_out = 0;
    mc.reset_ages_on_burn = !cfg.corrupt;
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
    const auto run = run_mfff(mc, rng);
    const auto& snap = run.snapshots.back();
    std::fill(adj.begin(), adj.end(), 0);
    for (const auto& [a, b] : snap.edges) adj[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] = 1;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double m = std::min(snap.ages[i], snap.ages[j]);
        const double e = adj[i * n + j];
        if (m <= 0.0) {
          rep.zero_bin_pairs += 1.0;
          rep.zero_bin_observed += e;
          continue;
        }
        auto& bin = rep.bins[static_cast<std::size_t>(std::min(nb - 1, static_cast<int>(m / cfg.bin_width)))];
        const double p = -std::expm1(-m / cfg.n);
        bin.pairs += 1.0;
        bin.observed += e;
        bin.expected += p;
        bin.variance += p * (1.0 - p);
      }
  }
  for (auto& b : rep.bins) {
    if (b.variance > 0.0) b.z = (b.observed - b.expected) / std::sqrt(b.variance);
    if (b.expected >= 5.0) {
      rep.chi2 += b.z * b.z;
      rep.dof += 1.0;
    }
  }
  rep.p_value = rep.dof > 0.0 ? stats::chi_square_sf(rep.chi2, rep.dof) : 1.0;
  return rep;
}

nlohmann::json to_json(const IrgTestReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"pairs", b.pairs}, {"observed", b.observed},
                    {"expected", b.expected}, {"z", b.z}});
  return {{"chi2", r.chi2},
          {"dof", r.dof},
          {"p_value", r.p_value},
          {"zero_bin_pairs", r.zero_bin_pairs},
          {"zero_bin_observed", r.zero_bin_observed},
          {"bins", bins}};
}

struct ClusterGrowthSampler::Impl {
  ExplosionMode mode;
  double T;
  int K = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> cdf;  // cumulative v_1..v_K per stored state
  std::vector<double> total;             // cdf end plus tail mass
  std::vector<double> kappa;             // exponential cutoff of the tail, 0 after gelation
  OffspringSampler pi0;
  bool pi0_trivial;  // all mass at age 0: C_0 = 1
  double curve_step;
  std::vector<CharCurveSolution> curves;  // psi_{j h}, j = 0..

  Impl(const Trajectory& traj, const DiscreteMeasure& p0, ExplosionMode m, double T_, double h)
      : mode(m), T(T_), pi0(p0), pi0_trivial(moment(p0, 1) == 0.0), curve_step(h) {
    if (traj.states.empty()) throw InvalidArgument("cluster growth: trajectory has no stored states");
    if (traj.horizon() < T - 1e-9) throw InvalidArgument("cluster growth: trajectory does not cover [0, T]");
    K = static_cast<int>(traj.states.front().v.size());
    for (const auto& s : traj.states) {
      times.push_back(s.t);
      std::vector<double> c(s.v.size());
      std::partial_sum(s.v.begin(), s.v.end(), c.begin());
      total.push_back(c.back() + s.tail_mass);
      cdf.push_back(std::move(c));
      kappa.push_back(s.phi > 0.0 ? 0.0 : tail_cutoff(s.v));
    }
    if (mode == ExplosionMode::SurvivalSampling) {
      const int nr = static_cast<int>(std::ceil(T / h - 1e-9));
      for (int j = 0; j <= nr; ++j) curves.push_back(solve_backward(traj, std::min(j * h, traj.horizon())));
    }
  }

  std::size_t state_index(double u) const {
    const auto it = std::lower_bound(times.begin(), times.end(), u);
    if (it == times.end()) return times.size() - 1;
    if (it == times.begin()) return 0;
    const auto i = static_cast<std::size_t>(it - times.begin());
    return (u - times[i - 1] <= times[i] - u) ? i - 1 : i;
  }

  // v_k ~ k^{-3/2} e^{-kappa k} fitted between K/2 and K
  static double tail_cutoff(const std::vector<double>& v) {
    const std::size_t K = v.size(), h = K / 2;
    if (h < 2 || v[K - 1] <= 0.0 || v[h - 1] <= 0.0) return 0.0;
    const double r = std::log(v[h - 1] / v[K - 1]) - 1.5 * std::log(static_cast<double>(K) / static_cast<double>(h));
    return std::max(0.0, r / static_cast<double>(K - h));
  }

  // jump increment at time u; the tail has density y^{-3/2} e^{-kappa y} beyond K + 1/2
  double draw_increment(double u, Rng& rng) const {
    const std::size_t si = state_index(u);
    const auto& c = cdf[si];
    const double x = uniform01(rng) * total[si];
    if (x < c.back())
      return static_cast<double>(std::upper_bound(c.begin(), c.end(), x) - c.begin() + 1);
    const double a = K + 0.5, kap = kappa[si];
    double y;
    if (kap * a >= 1.0) {
      do y = a - std::log(uniform_open(rng)) / kap;
      while (uniform01(rng) >= std::pow(a / y, 1.5));
    } else {
      do y = a / std::pow(uniform_open(rng), 2.0);
      while (kap > 0.0 && uniform01(rng) >= std::exp(-kap * (y - a)));
    }
    return std::max(static_cast<double>(K + 1), std::round(y));
  }

  double psi(double r, double s) const {
    if (r <= s) return 1.0;
    const double q = r / curve_step;
    auto j = static_cast<std::size_t>(std::floor(q));
    if (j + 1 >= curves.size()) return curves.back().psi_at(s);
    const double u = q - static_cast<double>(j);
    return (1.0 - u) * curves[j].psi_at(s) + u * curves[j + 1].psi_at(s);
  }
};

ClusterGrowthSampler::ClusterGrowthSampler(const Trajectory& traj, const DiscreteMeasure& pi0, ExplosionMode mode,
                                           double T, double curve_step)
    : impl_(std::make_unique<Impl>(traj, pi0, mode, T, curve_step)) {}
ClusterGrowthSampler::~ClusterGrowthSampler() = default;
ClusterGrowthSampler::ClusterGrowthSampler(ClusterGrowthSampler&&) noexcept = default;

double ClusterGrowthSampler::psi(double r, double s) const { return impl_->psi(r, s); }

ClusterGrowthPath ClusterGrowthSampler::sample(const ClusterGrowthConfig& cfg, Rng& rng) const {
  const Impl& m = *impl_;
  if (cfg.T > m.T + 1e-9) throw InvalidArgument("cluster growth: T beyond the sampler horizon");
  ClusterGrowthPath path;
  path.cap = cfg.cap;
  if (!m.pi0_trivial) {
    const std::size_t j = m.pi0.from_pi(rng);
    path.a0 = m.pi0.measure().positions()[j];
    path.C0 = sample_size(m.pi0, RootAge::fixed(path.a0), rng, cfg.cap);
  } else {
    path.a0 = m.pi0.measure().positions()[m.pi0.from_pi(rng)];
  }
  auto obs = cfg.observe;
  std::sort(obs.begin(), obs.end());
  std::size_t next_obs = 0;

  double s = 0.0, birth = -path.a0;
  double C = static_cast<double>(path.C0);
  auto observe_until = [&](double u) {  // observations strictly before u
    while (next_obs < obs.size() && obs[next_obs] < u && obs[next_obs] <= cfg.T) {
      path.observed_size.push_back(static_cast<std::uint64_t>(C));
      path.observed_age.push_back(obs[next_obs] - birth);
      ++next_obs;
    }
  };
  auto explode = [&](double u) {
    C = 1.0;
    birth = u;
    path.explosions.push_back(u);
  };
  if (cfg.record_path) {
    path.jump_times.push_back(0.0);
    path.sizes.push_back(path.C0);
    path.ages.push_back(path.a0);
  }

  if (m.mode == ExplosionMode::Cap) {
    if (C > static_cast<double>(cfg.cap)) {
      path.biased = true;
      explode(0.0);
    }
    for (;;) {
      const double u = s + std::exponential_distribution<double>(C)(rng);
      observe_until(std::min(u, std::nextafter(cfg.T, INFINITY)));
      if (u > cfg.T) break;
      s = u;
      C += m.draw_increment(u, rng);
      if (C > static_cast<double>(cfg.cap)) {
        path.biased = true;
        explode(u);
        if (cfg.stop_at_first_explosion) break;
      }
      if (cfg.record_path) {
        path.jump_times.push_back(u);
        path.sizes.push_back(static_cast<std::uint64_t>(C));
        path.ages.push_back(u - birth);
      }
    }
    return path;
  }

  // Survival sampling: explosion times from P(no explosion in [s, r] | C_s = i) = psi_r(s)^i,
  // sizes at observation times from the path conditioned to survive (thinning by psi^k).
  std::vector<double> targets;
  for (double o : obs)
    if (o <= cfg.T) targets.push_back(o);
  if (targets.empty() || targets.back() < cfg.T) targets.push_back(cfg.T);
  for (double target : targets) {
    for (;;) {
      const double surv = std::pow(m.psi(target, s), C);
      const double U = uniform01(rng);
      if (U < surv) {
        double u = s;
        for (;;) {
          u += std::exponential_distribution<double>(C)(rng);
          if (u >= target) break;
          const double k = m.draw_increment(u, rng);
          if (uniform01(rng) < std::pow(m.psi(target, u), k)) C += k;
        }
        s = target;
        observe_until(std::nextafter(target, INFINITY));
        break;
      }
      // explosion in (s, target]: invert 1 - psi_r(s)^C on [s, target]
      const double goal = 1.0 - uniform01(rng) * (1.0 - surv);
      double lo = s, hi = target;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (std::pow(m.psi(mid, s), C) > goal)
          lo = mid;
        else
          hi = mid;
      }
      explode(hi);
      s = hi;
      if (cfg.stop_at_first_explosion) return path;
    }
  }
  return path;
}

ClusterGrowthPath cluster_growth_sim(const Trajectory& traj, const DiscreteMeasure& pi0,
                                     const ClusterGrowthConfig& cfg, Rng& rng) {
  return ClusterGrowthSampler(traj, pi0, cfg.mode, cfg.T).sample(cfg, rng);
}

void write_burnlog_csv(std::ostream& os, const BurnLog& log) {
  os << "t,size,vertex\n";
  for (const auto& e : log.events) os << format_double(e.t) << ',' << e.size << ',' << e.vertex << '\n';
}

void write_cluster_csv(std::ostream& os, const MfffSnapshot& snap) {
  os << "k,v_k\n";
  for (std::size_t k = 0; k < snap.v.size(); ++k) os << k + 1 << ',' << format_double(snap.v[k]) << '\n';
}

}  // namespace mfff
