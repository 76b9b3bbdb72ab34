#include "mfff/branching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <random>

#include "mfff/error.hpp"
#include "mfff/kernels.hpp"
#include "mfff/spectral.hpp"

namespace mfff {

using cplx = std::complex<double>;

OffspringSampler::OffspringSampler(const DiscreteMeasure& pi)
    : pi_(pi), A_(pi.size() + 1, 0.0), B_(pi.size() + 1, 0.0) {
  const auto x = pi_.positions();
  const auto w = pi_.weights();
  for (std::size_t j = 0; j < x.size(); ++j) {
    A_[j + 1] = A_[j] + x[j] * w[j];
    B_[j + 1] = B_[j] + w[j];
  }
  M_.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) M_[j] = A_[j + 1] + x[j] * (B_[x.size()] - B_[j + 1]);
}

double OffspringSampler::intensity(double s) const {
  const auto x = pi_.positions();
  const std::size_t n = x.size();
  if (std::isinf(s)) return A_[n];
  const auto i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), s) - x.begin());
  return A_[i] + s * (B_[n] - B_[i]);
}

std::size_t OffspringSampler::child(double s, Rng& rng) const {
  const auto x = pi_.positions();
  const std::size_t n = x.size();
  const std::size_t i =
      std::isinf(s) ? n : static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), s) - x.begin());
  const double m = std::isinf(s) ? A_[n] : A_[i] + s * (B_[n] - B_[i]);
  const double u = std::uniform_real_distribution<double>(0.0, m)(rng);
  if (u < A_[i]) {
    // atoms at or below s carry weight x_j w_j
    auto j = static_cast<std::size_t>(std::upper_bound(A_.begin() + 1, A_.begin() + static_cast<std::ptrdiff_t>(i) + 1, u) -
                                      (A_.begin() + 1));
    return std::min(j, i - 1);
  }
  // atoms above s carry weight s w_j
  const double target = B_[i] + (u - A_[i]) / s;
  auto j = static_cast<std::size_t>(std::upper_bound(B_.begin() + 1, B_.end(), target) - (B_.begin() + 1));
  return std::clamp(j, i, n - 1);
}

std::size_t OffspringSampler::from_pi(Rng& rng) const {
  const std::size_t n = pi_.size();
  const double u = std::uniform_real_distribution<double>(0.0, B_[n])(rng);
  auto j = static_cast<std::size_t>(std::upper_bound(B_.begin() + 1, B_.end(), u) - (B_.begin() + 1));
  return std::min(j, n - 1);
}

namespace {

double root_age_value(const OffspringSampler& s, RootAge root, Rng& rng) {
  switch (root.kind) {
    case RootAge::Kind::Fixed:
      if (!(root.age >= 0.0)) throw InvalidArgument("root age must be >= 0");
      return root.age;
    case RootAge::Kind::FromPi:
      if (s.measure().empty()) throw InvalidArgument("root from pi: empty measure");
      return s.measure().positions()[s.from_pi(rng)];
    case RootAge::Kind::Infinity:
      return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

long poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<long>(mean)(rng);
}

}  // namespace

AgedTree sample_tree(const DiscreteMeasure& pi, RootAge root, Rng& rng, const TreeOptions& opts) {
  return sample_tree(OffspringSampler(pi), root, rng, opts);
}

AgedTree sample_tree(const OffspringSampler& sampler, RootAge root, Rng& rng, const TreeOptions& opts) {
  AgedTree t;
  t.parent.push_back(-1);
  t.age.push_back(root_age_value(sampler, root, rng));
  t.depth.push_back(0);
  const auto x = sampler.measure().positions();
  for (std::size_t v = 0; v < t.size(); ++v) {
    if (opts.max_depth >= 0 && t.depth[v] >= opts.max_depth) continue;
    if (sampler.measure().empty()) break;
    const double s = t.age[v];
    const long N = poisson(sampler.intensity(s), rng);
    for (long c = 0; c < N; ++c) {
      if (t.size() >= opts.size_cap) {
        t.truncated = true;
        return t;
      }
      t.parent.push_back(static_cast<std::int64_t>(v));
      t.age.push_back(x[sampler.child(s, rng)]);
      t.depth.push_back(t.depth[v] + 1);
    }
  }
  return t;
}

std::size_t sample_size(const OffspringSampler& sampler, RootAge root, Rng& rng, std::size_t size_cap) {
  const auto& pi = sampler.measure();
  const std::size_t n = pi.size();
  if (size_cap == 0) return 1;
  const double root_s = root_age_value(sampler, root, rng);
  if (n == 0) return 1;

  std::vector<std::size_t> count(n, 0), next_count(n, 0);
  std::vector<std::size_t> active, next_active;
  std::size_t total = 1;

  auto add_children = [&](double parent_age, double mean) -> bool {
    const long N = poisson(mean, rng);
    total += static_cast<std::size_t>(N);
    if (total > size_cap) return false;
    for (long c = 0; c < N; ++c) {
      const std::size_t j = n == 1 ? 0 : sampler.child(parent_age, rng);
      if (next_count[j]++ == 0) next_active.push_back(j);
    }
    return true;
  };

  if (!add_children(root_s, sampler.intensity(root_s))) return size_cap + 1;
  while (!next_active.empty()) {
    std::swap(active, next_active);
    std::swap(count, next_count);
    next_active.clear();
    for (std::size_t j : active) {
      const std::size_t c = count[j];
      count[j] = 0;
      if (!add_children(pi.positions()[j], static_cast<double>(c) * sampler.atom_intensity(j))) return size_cap + 1;
    }
  }
  return total;
}

std::string to_newick(const AgedTree& tree) {
  const std::size_t n = tree.size();
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t v = 0; v < n; ++v)
    if (tree.parent[v] >= 0) kids[static_cast<std::size_t>(tree.parent[v])].push_back(v);

  std::string out;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{tree.root, 0}};
  while (!stack.empty()) {
    auto& [v, k] = stack.back();
    if (k == 0 && !kids[v].empty()) out += '(';
    if (k < kids[v].size()) {
      if (k > 0) out += ',';
      const std::size_t c = kids[v][k++];
      stack.emplace_back(c, 0);
      continue;
    }
    if (!kids[v].empty()) out += ')';
    out += '@';
    out += std::isinf(tree.age[v]) ? std::string("inf") : format_double(tree.age[v]);
    stack.pop_back();
  }
  return out;
}

ProgenyLaw progeny_law(const DiscreteMeasure& pi, int K, const MonteCarlo& mc) {
  if (K < 1) throw InvalidArgument("progeny_law: K must be >= 1");
  if (mc.replicas == 0) throw InvalidArgument("progeny_law: replicas must be positive");
  const OffspringSampler sampler(pi);
  const auto R = static_cast<std::ptrdiff_t>(mc.replicas);
  std::vector<std::size_t> sizes(mc.replicas);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t r = 0; r < R; ++r) {
    Rng rng = make_rng(mc.seed, static_cast<std::uint64_t>(r));
    sizes[static_cast<std::size_t>(r)] =
        sample_size(sampler, RootAge::from_pi(), rng, static_cast<std::size_t>(K));
  }
  std::vector<std::size_t> hist(static_cast<std::size_t>(K) + 1, 0);
  for (std::size_t s : sizes) ++hist[std::min(s, static_cast<std::size_t>(K) + 1) - 1];

  ProgenyLaw law;
  law.method = "monte_carlo";
  law.samples = mc.replicas;
  const double Rd = static_cast<double>(mc.replicas);
  for (int k = 0; k < K; ++k) {
    const double p = static_cast<double>(hist[static_cast<std::size_t>(k)]) / Rd;
    law.v.push_back(p);
    law.std_err.push_back(std::sqrt(p * (1.0 - p) / Rd));
  }
  law.residual = static_cast<double>(hist.back()) / Rd;
  return law;
}

ProgenyLaw progeny_law(const DiscreteMeasure& pi, int K, SmallKClosedForm) {
  if (K < 1) throw InvalidArgument("progeny_law: K must be >= 1");
  const auto x = pi.positions();
  const auto w = pi.weights();
  const std::size_t n = pi.size();
  const double mass = pi.total_mass();
  const OffspringSampler sampler(pi);

  // f(s, z) = z e^{-m_s} exp(sum_k b_k(s) z^k) with b_k = L a_k and
  // a_k(s) = P(|T_s| = k); the exponential is expanded by the power-series
  // recursion E_k = (1/k) sum_{j=1}^k j b_j E_{k-j}.
  std::vector<double> em(n);
  for (std::size_t i = 0; i < n; ++i) em[i] = std::exp(-sampler.intensity(x[i]));
  const auto Ku = static_cast<std::size_t>(K);
  std::vector<std::vector<double>> a(Ku + 1), b(Ku + 1), E(Ku + 1);
  a[1] = em;
  E[0].assign(n, 1.0);
  for (std::size_t k = 1; k < Ku; ++k) {
    b[k].resize(n);
    kernels::min_kernel_apply_prefix<double>(x, w, a[k], b[k]);
    E[k].assign(n, 0.0);
    for (std::size_t j = 1; j <= k; ++j)
      for (std::size_t i = 0; i < n; ++i) E[k][i] += static_cast<double>(j) * b[j][i] * E[k - j][i];
    a[k + 1].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      E[k][i] /= static_cast<double>(k);
      a[k + 1][i] = em[i] * E[k][i];
    }
  }

  ProgenyLaw law;
  law.method = "closed_form";
  double total = 0.0;
  for (std::size_t k = 1; k <= Ku; ++k) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += w[i] * a[k][i];
    v /= mass;
    law.v.push_back(v);
    total += v;
  }
  law.residual = std::max(0.0, 1.0 - total);
  return law;
}

void write_csv(std::ostream& os, const ProgenyLaw& law) {
  os << "k,v_k,stderr\n";
  for (std::size_t k = 0; k < law.v.size(); ++k) {
    os << k + 1 << ',' << format_double(law.v[k]) << ','
       << format_double(law.std_err.empty() ? 0.0 : law.std_err[k]) << '\n';
  }
}

namespace {

long solve_fixed_point(const DiscreteMeasure& pi, cplx z, std::vector<cplx>& f, const GenFnOptions& opts) {
  const auto x = pi.positions();
  const auto w = pi.weights();
  const std::size_t n = pi.size();
  std::vector<cplx> d(n), g(n);
  double res = INFINITY;
  for (long it = 1; it <= opts.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) d[i] = f[i] - 1.0;
    kernels::min_kernel_apply_prefix<cplx>(x, w, d, g);
    res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx next = z * std::exp(g[i]);
      res = std::max(res, std::abs(next - f[i]));
      f[i] = next;
    }
    if (res < opts.tol) return it;
  }
  throw NumericalFailure("genfn: fixed-point iteration did not converge", res);
}

}  // namespace

std::vector<cplx> genfn_grid(const DiscreteMeasure& pi, cplx z, const GenFnOptions& opts) {
  const std::size_t n = pi.size();
  if (std::abs(z) > 1.0 + 1e-15) throw InvalidArgument("genfn: |z| must be <= 1");
  if (n == 0) return {};
  if (z == cplx(1.0, 0.0)) {
    if (moment(pi, 1) == 0.0 || classify(pi).tag != Criticality::Supercritical) return std::vector<cplx>(n, 1.0);
  }
  const double m1 = moment(pi, 1) / pi.total_mass();
  const double r = std::abs(z);
  const double r_contract = m1 > 0.0 ? 1.0 / m1 : INFINITY;
  std::vector<cplx> f;
  if (r < r_contract) {
    f.assign(n, z);
    solve_fixed_point(pi, z, f, opts);
    return f;
  }
  const cplx dir = z / r;
  double radius = 0.9 * r_contract;
  f.assign(n, radius * dir);
  solve_fixed_point(pi, radius * dir, f, opts);
  while (radius < r) {
    radius = std::min(r, radius + opts.radial_step);
    solve_fixed_point(pi, radius == r ? z : radius * dir, f, opts);
  }
  return f;
}

cplx genfn(const DiscreteMeasure& pi, RootAge s, cplx z, const GenFnOptions& opts) {
  if (s.kind == RootAge::Kind::Fixed && s.age == 0.0) return z;
  const auto f = genfn_grid(pi, z, opts);
  const auto x = pi.positions();
  const auto w = pi.weights();
  if (s.kind == RootAge::Kind::FromPi) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += w[i] * f[i];
    return acc / pi.total_mass();
  }
  cplx g = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double k = s.kind == RootAge::Kind::Infinity ? x[i] : std::min(x[i], s.age);
    g += k * w[i] * (f[i] - 1.0);
  }
  return z * std::exp(g);
}

ExpectedSize expected_size(const DiscreteMeasure& pi, double s) {
  ExpectedSize out;
  if (!(s >= 0.0)) throw InvalidArgument("expected_size: s must be >= 0");
  if (s == 0.0 || pi.empty() || moment(pi, 1) == 0.0) {
    out.finite = true;
    out.value = 1.0;
    return out;
  }
  const auto cls = classify(pi);
  if (cls.tag != Criticality::Subcritical) {
    out.diagnostic = "not subcritical: lambda = " + format_double(cls.lambda);
    return out;
  }
  // Conjugate gradients on (I - M) y = sqrt(w), M = W^{1/2} K W^{1/2}.
  const auto x = pi.positions();
  const std::size_t n = pi.size();
  std::vector<double> sw(n), y(n, 0.0), r(n), p(n), Ap(n), tmp(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(pi.weights()[i]);
  r = sw;
  p = r;
  double rr = 0.0;
  for (double v : r) rr += v * v;
  const double stop = 1e-28 * rr;
  bool ok = false;
  for (std::size_t it = 0; it < 10 * n + 100; ++it) {
    if (rr <= stop) {
      ok = true;
      break;
    }
    kernels::min_kernel_apply_prefix<double>(x, sw, p, tmp);
    double pAp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Ap[i] = p[i] - sw[i] * tmp[i];
      pAp += p[i] * Ap[i];
    }
    if (!(pAp > 0.0)) break;
    const double alpha = rr / pAp;
    double rr_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      rr_new += r[i] * r[i];
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  if (!ok && rr > 1e-20) {
    out.diagnostic = "linear solve failed, residual " + format_double(std::sqrt(rr));
    return out;
  }
  // g(s) = 1 + sum_j min(s, x_j) sqrt(w_j) y_j
  double q = s;
  double Lg = 0.0;
  kernels::min_kernel_eval_sorted<double>(x, sw, y, std::span<const double>(&q, 1), std::span<double>(&Lg, 1));
  out.finite = true;
  out.value = 1.0 + Lg;
  return out;
}

SqrtFit sqrt_expansion_fit(const DiscreteMeasure& pi) {
  SqrtFit fit;
  fit.epsilons = {1e-2, 1e-3, 1e-4};
  const std::size_t n = pi.size();
  std::array<double, 3> t{}, global{};
  std::vector<std::array<double, 3>> local(n);
  const double mass = pi.total_mass();
  for (int e = 0; e < 3; ++e) {
    const double eps = fit.epsilons[static_cast<std::size_t>(e)];
    t[e] = std::sqrt(eps);
    const auto f = genfn_grid(pi, cplx(1.0 - eps, 0.0));
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += pi.weights()[i] * f[i].real();
      local[i][e] = (1.0 - f[i].real()) / t[e];
    }
    global[e] = (1.0 - mean / mass) / t[e];
  }
  // F / sqrt(eps) = a + b t + c t^2 through three points; Lagrange at t = 0.
  auto extrapolate = [&](const std::array<double, 3>& y) {
    double a = 0.0;
    for (int i = 0; i < 3; ++i) {
      double l = 1.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) l *= (0.0 - t[j]) / (t[i] - t[j]);
      a += y[i] * l;
    }
    return a;
  };
  fit.sqrt_2phi = extrapolate(global);
  fit.slopes.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.slopes[i] = extrapolate(local[i]);
  return fit;
}

}  // namespace mfff
