#include "mfff/ffode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "mfff/error.hpp"
#include "mfff/kernels.hpp"
#include "mfff/measure.hpp"

namespace mfff {

std::string to_string(Model m) {
  switch (m) {
    case Model::Flory: return "flory";
    case Model::Smoluchowski: return "smoluchowski";
    case Model::ForestFire: return "forest_fire";
  }
  return "?";
}

Model model_from_string(const std::string& s) {
  if (s == "flory") return Model::Flory;
  if (s == "smoluchowski") return Model::Smoluchowski;
  if (s == "forest_fire") return Model::ForestFire;
  throw InvalidArgument("unknown model '" + s + "'");
}

TailPolicy tail_policy_from_string(const std::string& s) {
  if (s == "absorb") return TailPolicy::Absorb;
  if (s == "sqrt_extrapolate") return TailPolicy::SqrtExtrapolate;
  throw InvalidArgument("unknown tail policy '" + s + "'");
}

double ClusterDensity::mass() const {
  double s = tail_mass;
  for (double x : v) s += x;
  return s;
}

GelationInfo gelation_analysis(std::span<const double> v0) {
  GelationInfo g;
  std::size_t K = v0.size();
  while (K > 0 && v0[K - 1] == 0.0) --K;
  if (K == 0) throw InvalidArgument("gelation_time: empty initial condition");
  double m1 = 0.0;
  for (std::size_t k = 1; k <= K; ++k) m1 += static_cast<double>(k) * v0[k - 1];

  double tail = 0.0;
  if (K >= 8 && v0[K / 2 - 1] > 0.0 && v0[K - 1] > 0.0) {
    // v_k ~ A k^{-alpha} fitted through k = K/2 and K
    const double kh = static_cast<double>(K / 2), kK = static_cast<double>(K);
    const double alpha = std::log(v0[K / 2 - 1] / v0[K - 1]) / std::log(kK / kh);
    if (alpha <= 2.0) {
      g.divergent = true;
      g.warning = true;
      g.first_moment = INFINITY;
      g.t_gel = 0.0;
      g.message = "first moment diverges (fitted tail exponent " + format_double(alpha) + ")";
      return g;
    }
    // Only treat a genuine power law as a tail; exponential decay has a
    // local exponent that grows with K and contributes nothing here.
    if (alpha < 50.0) {
      const double A = v0[K - 1] * std::pow(kK, alpha);
      tail = A * std::pow(kK + 0.5, 2.0 - alpha) / (alpha - 2.0);
    }
  }
  g.first_moment = m1 + tail;
  g.tail_fraction = tail / g.first_moment;
  g.t_gel = 1.0 / g.first_moment;
  if (g.tail_fraction > 0.1) {
    g.warning = true;
    g.message = "tail extrapolation carries " + format_double(g.tail_fraction) + " of the first moment";
  }
  return g;
}

double gelation_time(std::span<const double> v0) { return gelation_analysis(v0).t_gel; }

namespace {

class Rhs {
 public:
  Rhs(Model model, int K, TailPolicy policy, double S0)
      : model_(model), K_(static_cast<std::size_t>(K)), policy_(policy), S0_(S0), conv_(K_) {
    const double Kd = static_cast<double>(K);
    // sum_{l > K} v_l for v_l ~ v_K (l / K)^{-3/2}
    cK_ = 2.0 * std::pow(Kd, 1.5) / std::sqrt(Kd + 0.5);
  }

  double tail_coefficient() const { return cK_; }

  // dv, d(tail) and phi at state (v, .); `post` selects the burning regime.
  double operator()(std::span<const double> v, bool post, std::span<double> dv, double& dtail) {
    kernels::self_convolution_omp(v, conv_, rev_);
    double S = 1.0;
    if (model_ == Model::Flory) S = S0_;
    if (model_ == Model::Smoluchowski) {
      S = cK_ * v[K_ - 1];
      for (double x : v) S += x;
    }
    double out = 0.0, in = 0.0;
    for (std::size_t i = 0; i < K_; ++i) {
      const double k = static_cast<double>(i + 1);
      const double gain = 0.5 * k * conv_[i];
      const double loss = k * v[i] * S;
      dv[i] = gain - loss;
      out += loss;
      in += gain;
    }
    const double F = out - in;  // net mass flux out of sizes 1..K
    double phi = 0.0;
    if (model_ == Model::ForestFire && post) {
      phi = policy_ == TailPolicy::Absorb ? F : F - cK_ * dv[K_ - 1];
      phi = std::max(phi, 0.0);
    }
    dv[0] += phi;
    dtail = F - phi;
    return phi;
  }

 private:
  Model model_;
  std::size_t K_;
  TailPolicy policy_;
  double S0_;
  double cK_ = 0.0;
  std::vector<double> conv_;
  std::vector<double> rev_;
};

// Flush-to-zero for the duration of a solve. Pre-gelation tails underflow,
// and denormal arithmetic is two orders of magnitude slower.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE2__)
    saved_ = _mm_getcsr() & kBits;
#pragma omp parallel
    _mm_setcsr(_mm_getcsr() | kBits);
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE2__)
#pragma omp parallel
    _mm_setcsr((_mm_getcsr() & ~kBits) | saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  static constexpr unsigned kBits = 0x8040;  // FTZ | DAZ
  unsigned saved_ = 0;
};

struct Rk4 {
  std::size_t K;
  std::vector<double> k1, k2, k3, k4, tmp;
  explicit Rk4(std::size_t K) : K(K), k1(K), k2(K), k3(K), k4(K), tmp(K) {}

  void step(Rhs& f, std::vector<double>& v, double& tail, double h, bool post) {
    double a1, a2, a3, a4;
    f(v, post, k1, a1);
    for (std::size_t i = 0; i < K; ++i) tmp[i] = v[i] + 0.5 * h * k1[i];
    f(tmp, post, k2, a2);
    for (std::size_t i = 0; i < K; ++i) tmp[i] = v[i] + 0.5 * h * k2[i];
    f(tmp, post, k3, a3);
    for (std::size_t i = 0; i < K; ++i) tmp[i] = v[i] + h * k3[i];
    f(tmp, post, k4, a4);
    for (std::size_t i = 0; i < K; ++i) v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    tail += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  }
};

}  // namespace

Trajectory solve(Model model, std::span<const double> v0, double T, const SolverConfig& cfg) {
  if (cfg.K < 2) throw InvalidArgument("solve: K must be >= 2");
  if (!(cfg.dt > 0.0)) throw InvalidArgument("solve: dt must be > 0");
  if (!(T >= 0.0)) throw InvalidArgument("solve: horizon must be >= 0");
  if (cfg.store_every < 1) throw InvalidArgument("solve: store_every must be >= 1");
  double total = 0.0;
  for (double x : v0) {
    if (!(x >= 0.0)) throw InvalidArgument("solve: v0 must be nonnegative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("solve: v0 must sum to 1");

  const auto K = static_cast<std::size_t>(cfg.K);
  Trajectory traj;
  traj.model = model;
  traj.cfg = cfg;
  traj.t_gel = gelation_time(v0);
  const double tg = traj.t_gel;

  std::vector<double> v(K, 0.0);
  double tail = 0.0;
  for (std::size_t i = 0; i < v0.size(); ++i) (i < K ? v[i] : tail) += v0[i];

  FlushDenormals ftz;
  Rhs rhs(model, cfg.K, cfg.tail_policy, total);
  Rk4 rk(K);
  std::vector<double> scratch(K);
  const double eps_t = 1e-12;

  auto record = [&](double t, std::size_t step) {
    double dtail = 0.0;
    const double phi = rhs(v, t >= tg - eps_t, scratch, dtail);
    traj.times.push_back(t);
    traj.phi.push_back(phi);
    if (model == Model::ForestFire && t >= tg - eps_t && phi > 1.0 + 1e-3)
      throw NumericalFailure("solve: phi exceeds 1 at t = " + format_double(t), phi);
    if (step % static_cast<std::size_t>(cfg.store_every) == 0) {
      ClusterDensity s;
      s.t = t;
      s.v = v;
      for (auto& x : s.v) x = std::max(x, 0.0);
      s.tail_mass = tail;
      s.phi = phi;
      traj.states.push_back(std::move(s));
    }
  };

  const auto n_out = static_cast<std::size_t>(std::llround(T / cfg.dt));
  const double h_max = 2.5 / static_cast<double>(K);
  record(0.0, 0);
  for (std::size_t i = 1; i <= n_out; ++i) {
    const double a = static_cast<double>(i - 1) * cfg.dt;
    const double b = static_cast<double>(i) * cfg.dt;
    double seg[3] = {a, b, b};
    int nseg = 1;
    if (a + eps_t < tg && tg < b - eps_t) {
      seg[1] = tg;
      nseg = 2;
    }
    for (int s = 0; s < nseg; ++s) {
      const double lo = seg[s], hi = seg[s + 1];
      const bool post = lo >= tg - eps_t;
      const auto nsub = static_cast<std::size_t>(std::ceil((hi - lo) / h_max - 1e-9));
      const double h = (hi - lo) / static_cast<double>(std::max<std::size_t>(nsub, 1));
      for (std::size_t j = 0; j < std::max<std::size_t>(nsub, 1); ++j) rk.step(rhs, v, tail, h, post);
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (v[k] < -1e-10)
        throw NumericalFailure("solve: v_" + std::to_string(k + 1) + " negative at t = " + format_double(b), v[k]);
    }
    record(b, i);
  }

  for (std::size_t i = 1; i < traj.times.size(); ++i) {
    if (traj.times[i - 1] >= tg - eps_t) {
      const double d = std::abs(traj.phi[i] - traj.phi[i - 1]) / (traj.times[i] - traj.times[i - 1]);
      traj.phi_lipschitz = std::max(traj.phi_lipschitz, d);
    }
  }
  return traj;
}

double Trajectory::phi_at(double t) const {
  if (times.empty() || t < t_gel - 1e-12) return 0.0;
  if (t <= times.front()) return phi.front();
  if (t >= times.back()) return phi.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto i = static_cast<std::size_t>(it - times.begin());  // times[i-1] <= t < times[i]
  const double a = times[i - 1], b = times[i];
  if (a < t_gel - 1e-12) return phi[i];  // interval straddles t_gel
  const double u = (t - a) / (b - a);
  return (1.0 - u) * phi[i - 1] + u * phi[i];
}

std::vector<double> Trajectory::v_at(double t) const {
  if (states.empty()) throw InvalidArgument("trajectory has no stored states");
  if (t <= states.front().t) return states.front().v;
  if (t >= states.back().t) return states.back().v;
  const auto it = std::upper_bound(states.begin(), states.end(), t,
                                   [](double x, const ClusterDensity& s) { return x < s.t; });
  const auto& B = *it;
  const auto& A = *(it - 1);
  const double u = (t - A.t) / (B.t - A.t);
  std::vector<double> out(A.v.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - u) * A.v[k] + u * B.v[k];
  return out;
}

const ClusterDensity& Trajectory::nearest(double t) const {
  if (states.empty()) throw InvalidArgument("trajectory has no stored states");
  const auto it = std::lower_bound(states.begin(), states.end(), t,
                                   [](const ClusterDensity& s, double x) { return s.t < x; });
  if (it == states.end()) return states.back();
  if (it == states.begin()) return *it;
  return (t - (it - 1)->t <= it->t - t) ? *(it - 1) : *it;
}

double tail_check(const ClusterDensity& state) {
  if (!(state.phi > 0.0)) throw InvalidArgument("tail_check: phi = 0 (state before gelation)");
  const std::size_t K = state.v.size();
  const std::size_t k = K / 2;
  double tail = state.tail_mass;
  for (std::size_t l = k; l <= K; ++l) tail += state.v[l - 1];
  return tail * std::sqrt(static_cast<double>(k)) / std::sqrt(2.0 * state.phi / std::numbers::pi);
}

double flory_monodisperse(int k, double t) {
  if (t == 0.0) return k == 1 ? 1.0 : 0.0;
  const double kd = k;
  return std::exp((kd - 1.0) * std::log(kd) + (kd - 1.0) * std::log(t) - kd * t - std::lgamma(kd + 1.0));
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int K_out) {
  if (traj.states.empty()) return;
  const auto Kmax = static_cast<int>(traj.states.front().v.size());
  const int Ko = std::clamp(K_out, 1, Kmax);
  os << 't';
  for (int k = 1; k <= Ko; ++k) os << ",v_" << k;
  os << ",tail_mass,phi\n";
  for (const auto& s : traj.states) {
    os << format_double(s.t);
    for (int k = 0; k < Ko; ++k) os << ',' << format_double(s.v[static_cast<std::size_t>(k)]);
    os << ',' << format_double(s.tail_mass) << ',' << format_double(s.phi) << '\n';
  }
}

nlohmann::json trajectory_summary(const Trajectory& traj) {
  nlohmann::json samples = nlohmann::json::array();
  const std::size_t stride = std::max<std::size_t>(1, traj.times.size() / 100);
  for (std::size_t i = 0; i < traj.times.size(); i += stride)
    samples.push_back({{"t", traj.times[i]}, {"phi", traj.phi[i]}});
  return {{"model", to_string(traj.model)},
          {"t_gel", traj.t_gel},
          {"K", traj.cfg.K},
          {"dt", traj.cfg.dt},
          {"phi_lipschitz", traj.phi_lipschitz},
          {"phi_samples", samples}};
}

}  // namespace mfff
