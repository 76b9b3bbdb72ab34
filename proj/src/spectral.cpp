#include "mfff/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mfff/error.hpp"
#include "mfff/kernels.hpp"
#include "mfff/rng.hpp"

namespace mfff {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// z = M y with M = W^{1/2} K W^{1/2}; `lk` receives sum_j min(x_i, x_j) sqrt(w_j) y_j.
void sym_apply(std::span<const double> x, std::span<const double> sw, std::span<const double> y,
               std::span<double> lk, std::span<double> z) {
  kernels::min_kernel_apply_prefix<double>(x, sw, y, lk);
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = sw[i] * lk[i];
}

double second_eigenvalue(std::span<const double> x, std::span<const double> sw,
                         std::span<const double> y1, double lambda1) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  std::vector<double> y(n), z(n), lk(n);
  Rng rng(derive_seed(0x5eed, n));
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (auto& v : y) v = U(rng);
  auto deflate = [&](std::vector<double>& v) {
    const double c = dot(v, y1);
    for (std::size_t i = 0; i < n; ++i) v[i] -= c * y1[i];
  };
  deflate(y);
  double ny = norm2(y);
  if (ny == 0.0) return 0.0;
  for (auto& v : y) v /= ny;

  double rq = 0.0;
  for (int it = 0; it < 20000; ++it) {
    sym_apply(x, sw, y, lk, z);
    deflate(z);
    const double next = dot(y, z);
    const double nz = norm2(z);
    if (nz == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) y[i] = z[i] / nz;
    if (it > 0 && std::abs(next - rq) < 1e-12 * lambda1) return next;
    rq = next;
  }
  return rq;
}

}  // namespace

KernelOperator::KernelOperator(DiscreteMeasure pi) : pi_(std::move(pi)) {}

std::vector<double> KernelOperator::apply(std::span<const double> f) const {
  if (f.size() != size()) throw InvalidArgument("apply: grid function has wrong length");
  std::vector<double> out(size());
  kernels::min_kernel_apply_prefix<double>(pi_.positions(), pi_.weights(), f, out);
  return out;
}

std::vector<std::complex<double>> KernelOperator::apply(
    std::span<const std::complex<double>> f) const {
  if (f.size() != size()) throw InvalidArgument("apply: grid function has wrong length");
  std::vector<std::complex<double>> out(size());
  kernels::min_kernel_apply_prefix<std::complex<double>>(pi_.positions(), pi_.weights(), f, out);
  return out;
}

std::vector<double> KernelOperator::apply_at(std::span<const double> f,
                                             std::span<const double> q) const {
  if (f.size() != size()) throw InvalidArgument("apply_at: grid function has wrong length");
  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return q[a] < q[b]; });
  std::vector<double> qs(q.size()), vs(q.size()), out(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) qs[k] = q[order[k]];
  kernels::min_kernel_eval_sorted<double>(pi_.positions(), pi_.weights(), f, qs, vs);
  for (std::size_t k = 0; k < q.size(); ++k) out[order[k]] = vs[k];
  return out;
}

std::vector<double> KernelOperator::dense_matrix() const {
  const auto x = pi_.positions();
  const auto w = pi_.weights();
  const std::size_t n = size();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) K[i * n + j] = std::min(x[i], x[j]) * w[j];
  return K;
}

std::vector<double> KernelOperator::symmetric_matrix() const {
  const auto x = pi_.positions();
  const auto w = pi_.weights();
  const std::size_t n = size();
  std::vector<double> M(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      M[i * n + j] = std::sqrt(w[i]) * std::min(x[i], x[j]) * std::sqrt(w[j]);
  return M;
}

std::vector<double> apply(const KernelOperator& op, std::span<const double> f) {
  return op.apply(f);
}

double hs_norm(const DiscreteMeasure& pi) {
  const auto x = pi.positions();
  const auto w = pi.weights();
  double above = pi.total_mass();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    above -= w[i];
    s += w[i] * x[i] * x[i] * (w[i] + 2.0 * std::max(above, 0.0));
  }
  return std::sqrt(s);
}

EigenPair leading_eigenpair(const DiscreteMeasure& pi, double tol) {
  EigenOptions opts;
  opts.tol = tol;
  return leading_eigenpair(pi, opts);
}

EigenPair leading_eigenpair(const DiscreteMeasure& pi, const EigenOptions& opts) {
  if (pi.empty() || moment(pi, 1) <= 0.0) throw InvalidArgument("operator is zero");
  const auto x = pi.positions();
  const auto w = pi.weights();
  const std::size_t n = pi.size();

  std::vector<double> sw(n), y(n), z(n), lk(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(w[i]);

  if (opts.warm_start.size() == n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = sw[i] * std::max(opts.warm_start[i], 0.0);
  }
  if (norm2(y) == 0.0) y = sw;
  {
    const double ny = norm2(y);
    for (auto& v : y) v /= ny;
  }

  EigenPair out;
  double rq = -1.0;
  double resid = INFINITY;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    sym_apply(x, sw, y, lk, z);
    const double next = dot(y, z);
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) r2 += (z[i] - next * y[i]) * (z[i] - next * y[i]);
    resid = std::sqrt(r2);
    const double nz = norm2(z);
    if (nz == 0.0) throw InvalidArgument("operator is zero");
    for (std::size_t i = 0; i < n; ++i) y[i] = z[i] / nz;
    const bool converged = std::abs(next - rq) < opts.tol && resid <= opts.residual_tol * next;
    rq = next;
    if (converged) break;
  }
  if (it == opts.max_iter && resid > 1e-6 * rq)
    throw NumericalFailure("leading_eigenpair: power iteration did not converge", resid / rq);

  out.lambda = rq;
  out.iterations = it + 1;

  // theta = L theta / lambda evaluated on the atoms; defined even where w_i = 0.
  kernels::min_kernel_apply_prefix<double>(x, sw, y, lk);
  out.theta.resize(n);
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.theta[i] = lk[i] / rq;
    mass += w[i] * out.theta[i];
  }
  if (mass == 0.0) throw NumericalFailure("leading_eigenpair: eigenfunction has zero mean");
  for (auto& t : out.theta) t /= mass;

  std::vector<double> Lt(n);
  kernels::min_kernel_apply_prefix<double>(x, w, out.theta, Lt);
  double num = 0.0, den = 0.0, tinf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = Lt[i] - rq * out.theta[i];
    num += w[i] * d * d;
    den += w[i] * out.theta[i] * out.theta[i];
    tinf += w[i] * out.theta[i] * x[i];
  }
  out.residual = std::sqrt(num / den);
  out.theta_at_infinity = tinf;
  out.lambda2 = second_eigenvalue(x, sw, y, rq);
  return out;
}

std::vector<double> theta_at(const DiscreteMeasure& pi, const EigenPair& eig,
                             std::span<const double> q) {
  KernelOperator op(pi);
  auto v = op.apply_at(eig.theta, q);
  for (auto& t : v) t /= eig.lambda;
  return v;
}

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Subcritical: return "subcritical";
    case Criticality::Critical: return "critical";
    case Criticality::Supercritical: return "supercritical";
  }
  return "?";
}

CriticalityClass classify(const DiscreteMeasure& pi, double band) {
  return classify(pi, leading_eigenpair(pi), band);
}

CriticalityClass classify(const DiscreteMeasure& pi, const EigenPair& eig, double band) {
  CriticalityClass out;
  out.lambda = eig.lambda;
  out.band = band;
  if (eig.lambda < 1.0 - band)
    out.tag = Criticality::Subcritical;
  else if (eig.lambda > 1.0 + band)
    out.tag = Criticality::Supercritical;
  else
    out.tag = Criticality::Critical;

  const double mass = pi.total_mass();
  const double mean = moment(pi, 1) / mass;
  const auto x = pi.positions();
  const auto w = pi.weights();
  double tail = mass;
  double a = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= 1.0) a = std::max(a, x[i] * tail / mass);
    tail -= w[i];
  }

  const double slack = 1e-8 * std::max(1.0, mean);
  if (eig.lambda > mean + slack)
    throw NumericalFailure("classify: eigenvalue exceeds the mean bound", eig.lambda - mean);
  if (a > 1.0 && eig.lambda < a - slack)
    throw NumericalFailure("classify: eigenvalue below the tail bound", a - eig.lambda);

  if (mean < 1.0) {
    out.certificate = "mean<1";
    out.tag = Criticality::Subcritical;
  } else if (a > 1.0) {
    out.certificate = "tail>1/x";
    out.tag = Criticality::Supercritical;
  }
  return out;
}

double phi_from_theta(const DiscreteMeasure& pi, std::span<const double> theta) {
  if (theta.size() != pi.size()) throw InvalidArgument("phi_from_theta: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) s += pi.weights()[i] * theta[i] * theta[i] * theta[i];
  if (!(s > 0.0)) throw InvalidArgument("phi_from_theta: \\int theta^3 dpi is zero");
  return 1.0 / s;
}

void write_eigenpair_csv(std::ostream& os, const DiscreteMeasure& pi, const EigenPair& eig) {
  os << "position,theta\n";
  for (std::size_t i = 0; i < pi.size(); ++i)
    os << format_double(pi.positions()[i]) << ',' << format_double(eig.theta[i]) << '\n';
}

nlohmann::json eigenpair_header(const EigenPair& eig) {
  return {{"lambda", eig.lambda},
          {"theta_infinity", eig.theta_at_infinity},
          {"residual", eig.residual},
          {"lambda2", eig.lambda2},
          {"iterations", eig.iterations}};
}

}  // namespace mfff
