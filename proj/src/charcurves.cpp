#include "mfff/charcurves.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "mfff/branching.hpp"
#include "mfff/error.hpp"

namespace mfff {

namespace {

constexpr double kGridEps = 1e-9;

std::vector<double> build_grid(double t_gel, double t, double ds) {
  std::vector<double> s;
  const bool gel_inside = t_gel > 0.0 && t_gel < t - kGridEps;
  bool have_gel = false;
  for (long k = 0;; ++k) {
    double x = static_cast<double>(k) * ds;
    if (x >= t - kGridEps) break;
    if (gel_inside && std::abs(x - t_gel) < kGridEps) {
      x = t_gel;
      have_gel = true;
    }
    s.push_back(x);
  }
  if (gel_inside && !have_gel) s.insert(std::upper_bound(s.begin(), s.end(), t_gel), t_gel);
  s.push_back(t);
  return s;
}

// Interval [s_i, s_{i+1}] lies before gelation.
bool pre_gel(const CharCurveSolution& sol, std::size_t i) {
  return sol.s[i + 1] <= sol.t_gel + kGridEps;
}

double hermite(double a, double b, double ya, double yb, double da, double db, double s) {
  const double h = b - a;
  const double u = (s - a) / h;
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * ya + (u3 - 2 * u2 + u) * h * da + (-2 * u3 + 3 * u2) * yb +
         (u3 - u2) * h * db;
}

std::size_t interval_of(const std::vector<double>& s, double x) {
  const auto it = std::upper_bound(s.begin(), s.end(), x);
  const auto i = static_cast<std::size_t>(it - s.begin());
  return std::min(i == 0 ? 0 : i - 1, s.size() - 2);
}

}  // namespace

double CharCurveSolution::psi_at(double q) const {
  if (q >= t) return 1.0;
  if (s.size() < 2) return 1.0;
  const std::size_t i = interval_of(s, q);
  return hermite(s[i], s[i + 1], psi[i], psi[i + 1], psi[i] * (1.0 - x[i]),
                 psi[i + 1] * (1.0 - x[i + 1]), q);
}

double CharCurveSolution::x_at(double q) const {
  if (q >= t) return 1.0;
  if (s.size() < 2) return 1.0;
  const std::size_t i = interval_of(s, q);
  const bool pg = pre_gel(*this, i);
  const double da = pg ? 0.0 : psi[i] * phi[i];
  const double db = pg ? 0.0 : psi[i + 1] * phi[i + 1];
  return hermite(s[i], s[i + 1], x[i], x[i + 1], da, db, q);
}

CharCurveSolution solve_backward(const PhiFunction& phi, double t_gel, double t, double ds) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("solve_backward: t must be >= 0");
  if (!(ds > 0.0)) throw InvalidArgument("solve_backward: ds must be positive");
  CharCurveSolution sol;
  sol.t = t;
  sol.t_gel = t_gel;
  sol.s = build_grid(t_gel, t, ds);
  const std::size_t n = sol.s.size();
  sol.psi.assign(n, 1.0);
  sol.x.assign(n, 1.0);
  sol.phi.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (sol.s[i] >= t_gel - kGridEps) sol.phi[i] = phi(std::max(sol.s[i], t_gel));

  double psi = 1.0, x = 1.0;
  for (std::size_t i = n - 1; i-- > 0;) {
    const double b = sol.s[i + 1], h = sol.s[i] - b;  // h < 0
    const bool pg = pre_gel(sol, i);
    auto ph = [&](double u) { return pg ? 0.0 : phi(std::max(u, t_gel)); };
    auto f = [&](double u, double p, double q, double& dp, double& dq) {
      dp = p * (1.0 - q);
      dq = p * ph(u);
    };
    double k1p, k1x, k2p, k2x, k3p, k3x, k4p, k4x;
    f(b, psi, x, k1p, k1x);
    f(b + 0.5 * h, psi + 0.5 * h * k1p, x + 0.5 * h * k1x, k2p, k2x);
    f(b + 0.5 * h, psi + 0.5 * h * k2p, x + 0.5 * h * k2x, k3p, k3x);
    f(b + h, psi + h * k3p, x + h * k3x, k4p, k4x);
    psi += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    if (!(psi > 0.0) || psi > 1.0 + 1e-9)
      throw NumericalFailure("solve_backward: psi left (0, 1] at s = " + format_double(sol.s[i]), psi);
    sol.psi[i] = psi;
    sol.x[i] = x;
  }
  sol.psi_at_zero = sol.psi.front();
  return sol;
}

CharCurveSolution solve_backward(const Trajectory& traj, double t, double ds) {
  if (t > traj.horizon() + 1e-12)
    throw InvalidArgument("solve_backward: trajectory ends at " + format_double(traj.horizon()) +
                          " < t = " + format_double(t));
  return solve_backward([&traj](double u) { return traj.phi_at(u); }, traj.t_gel, t, ds);
}

double cluster_genfn(const ClusterDensity& state, double z) {
  if (z < 0.0 || z > 1.0) throw InvalidArgument("cluster_genfn: z must lie in [0, 1]");
  double sum = 0.0, zk = 1.0;
  for (double v : state.v) {
    zk *= z;
    sum += v * zk;
  }
  if (state.tail_mass <= 0.0 || z == 0.0) return sum;
  if (z == 1.0) return sum + state.tail_mass;
  const double a = static_cast<double>(state.v.size()) + 0.5;
  const double c = state.tail_mass * std::sqrt(a) / 2.0;
  const double eps = -std::log(z);
  const double integral = 2.0 * std::exp(-eps * a) / std::sqrt(a) -
                          2.0 * std::sqrt(eps * std::numbers::pi) * std::erfc(std::sqrt(eps * a));
  return sum + c * integral;
}

double consistency_error(const CharCurveSolution& sol, const Trajectory& traj) {
  double err = 0.0;
  for (const auto& st : traj.states) {
    if (st.t > sol.t + 1e-12) break;
    const double p = std::clamp(sol.psi_at(st.t), 0.0, 1.0);
    err = std::max(err, std::abs(sol.x_at(st.t) - cluster_genfn(st, p)));
  }
  return err;
}

ReconstructedPi reconstruct_pi(const DiscreteMeasure& pi0, const CharCurveSolution& sol) {
  if (!pi0.is_probability()) throw InvalidArgument("reconstruct_pi: pi0 must be a probability measure");
  const std::size_t n = sol.s.size();
  std::vector<double> burnt(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (pre_gel(sol, i)) continue;
    const double h = sol.s[i + 1] - sol.s[i];
    burnt[i] += 0.5 * h * sol.phi[i] * sol.psi[i];
    burnt[i + 1] += 0.5 * h * sol.phi[i + 1] * sol.psi[i + 1];
  }

  ReconstructedPi out;
  std::vector<double> pos, w;
  for (std::size_t i = 0; i < n; ++i) {
    if (burnt[i] <= 0.0) continue;
    pos.push_back(std::max(sol.t - sol.s[i], 0.0));
    w.push_back(burnt[i]);
    out.burnt_mass += burnt[i];
  }
  const auto f = genfn_grid(pi0, sol.psi_at_zero);
  for (std::size_t j = 0; j < pi0.size(); ++j) {
    const double wj = pi0.weights()[j] * f[j].real();
    if (wj <= 0.0) continue;
    pos.push_back(pi0.positions()[j] + sol.t);
    w.push_back(wj);
    out.surviving_mass += wj;
  }
  const double total = out.burnt_mass + out.surviving_mass;
  out.mass_defect = std::abs(total - 1.0);
  if (out.mass_defect > 1e-3)
    throw NumericalFailure("reconstruct_pi: mass defect " + format_double(out.mass_defect), out.mass_defect);
  out.pi = DiscreteMeasure(std::move(pos), std::move(w)).normalized();
  return out;
}

std::vector<double> theta_from_pair(const DiscreteMeasure& pi0, const CharCurveSolution& minus,
                                    const CharCurveSolution& plus, double phi_t,
                                    const DiscreteMeasure& pi_t, double t) {
  const double two_delta = plus.t - minus.t;
  if (!(two_delta > 0.0)) throw InvalidArgument("theta_from_pair: need minus.t < plus.t");
  const auto fm = genfn_grid(pi0, minus.psi_at_zero);
  const auto fp = genfn_grid(pi0, plus.psi_at_zero);
  const auto a0 = pi0.positions();

  std::vector<double> theta(pi_t.size());
  for (std::size_t i = 0; i < pi_t.size(); ++i) {
    const double p = pi_t.positions()[i];
    double d;
    if (p <= t + 1e-12) {
      const double s = std::max(t - p, 0.0);
      d = std::log(plus.psi_at(s)) - std::log(minus.psi_at(s));
    } else {
      const double a = p - t;
      auto it = std::lower_bound(a0.begin(), a0.end(), a);
      if (it == a0.end() || (it != a0.begin() && a - *(it - 1) < *it - a)) --it;
      const auto j = static_cast<std::size_t>(it - a0.begin());
      d = std::log(fp[j].real()) - std::log(fm[j].real());
    }
    theta[i] = -d / (two_delta * phi_t);
  }
  return theta;
}

ReconstructedTheta reconstruct_theta(const DiscreteMeasure& pi0, const Trajectory& traj, double t,
                                     const ThetaOptions& opts) {
  ReconstructedTheta out;
  out.t = t;
  out.phi_t = traj.phi_at(t);
  if (out.phi_t < 1e-6)
    throw InvalidArgument("reconstruct_theta: phi(t) = " + format_double(out.phi_t) + " (t before gelation)");
  if (!(opts.delta > 0.0) || t - opts.delta <= traj.t_gel)
    throw InvalidArgument("reconstruct_theta: t - delta must exceed t_gel");

  out.pi = reconstruct_pi(pi0, solve_backward(traj, t, opts.ds)).pi;
  auto at = [&](double delta) {
    return theta_from_pair(pi0, solve_backward(traj, t - delta, opts.ds),
                           solve_backward(traj, t + delta, opts.ds), out.phi_t, out.pi, t);
  };
  out.theta = at(opts.delta);
  if (opts.richardson) {
    const auto half = at(0.5 * opts.delta);
    for (std::size_t i = 0; i < out.theta.size(); ++i) out.theta[i] = (4.0 * half[i] - out.theta[i]) / 3.0;
  }
  for (std::size_t i = 0; i < out.theta.size(); ++i) out.normalization += out.pi.weights()[i] * out.theta[i];
  return out;
}

void write_csv(std::ostream& os, const CharCurveSolution& sol) {
  os << "s,psi,x\n";
  for (std::size_t i = 0; i < sol.s.size(); ++i)
    os << format_double(sol.s[i]) << ',' << format_double(sol.psi[i]) << ',' << format_double(sol.x[i]) << '\n';
}

}  // namespace mfff
