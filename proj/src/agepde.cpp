#include "mfff/agepde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfff/error.hpp"

namespace mfff {

AgeStep step(const DiscreteMeasure& pi, double dt, const std::vector<double>* warm, double band) {
  if (!(dt > 0.0) || dt > 0.01) throw InvalidArgument("agepde step: dt must lie in (0, 0.01]");
  if (pi.empty()) throw InvalidArgument("agepde step: empty measure");

  AgeStep out;
  if (moment(pi, 1) == 0.0) {
    // all mass at age 0: the operator vanishes
    out.pi = translate(pi, dt);
    out.defect = std::abs(pi.total_mass() - 1.0);
    return out;
  }
  EigenOptions eo;
  if (warm != nullptr) eo.warm_start = *warm;
  EigenPair eig = leading_eigenpair(pi, eo);
  const auto cls = classify(pi, eig, band);
  out.tag = cls.tag;
  out.lambda = eig.lambda;
  if (cls.tag == Criticality::Subcritical) {
    out.pi = translate(pi, dt);
    out.defect = std::abs(pi.total_mass() - 1.0);
    return out;
  }
  if (cls.tag == Criticality::Supercritical && eig.lambda > 1.0 + band)
    throw NumericalFailure("agepde step: measure became supercritical (lambda = " + format_double(eig.lambda) + ")",
                           eig.lambda);
  if (cls.tag == Criticality::Supercritical) {
    out.overshoot = true;
    out.tag = Criticality::Critical;
  }

  out.phi = phi_from_theta(pi, eig.theta);
  const auto x = pi.positions();
  const auto w = pi.weights();
  std::vector<double> pos(x.size() + 1), wt(x.size() + 1);
  double before = 0.0, after = 0.0;
  pos[0] = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pos[i + 1] = x[i] + dt;
    wt[i + 1] = w[i] * std::exp(-out.phi * eig.theta[i] * dt);
    before += w[i];
    after += wt[i + 1];
  }
  out.injected = before - after;
  wt[0] = out.injected;
  DiscreteMeasure next(std::move(pos), std::move(wt));
  out.defect = std::abs(next.total_mass() - 1.0);
  out.pi = next.normalized();
  out.eig = std::move(eig);
  return out;
}

const DiscreteMeasure& AgeTrajectory::snapshot(double t) const {
  if (snapshots.empty()) throw InvalidArgument("age trajectory has no snapshots");
  std::size_t best = 0;
  for (std::size_t i = 1; i < snapshot_times.size(); ++i)
    if (std::abs(snapshot_times[i] - t) < std::abs(snapshot_times[best] - t)) best = i;
  return snapshots[best];
}

AgeTrajectory evolve(const DiscreteMeasure& pi0, double T, const AgeOptions& opts) {
  if (!pi0.is_probability()) throw InvalidArgument("evolve: pi0 must be a probability measure");
  if (!std::isfinite(moment(pi0, 1))) throw InvalidArgument("evolve: pi0 must have a finite mean");
  if (!(T >= 0.0)) throw InvalidArgument("evolve: T must be >= 0");
  if (moment(pi0, 1) > 0.0 && classify(pi0, opts.band).tag == Criticality::Supercritical)
    throw InvalidArgument("evolve: initial measure is supercritical");

  AgeTrajectory tr;
  tr.dt = opts.dt;
  auto want = opts.snapshot_times;
  std::sort(want.begin(), want.end());
  std::size_t next_snap = 0;

  DiscreteMeasure pi = pi0.normalized();
  std::vector<double> warm;
  const long n_steps = static_cast<long>(std::ceil(T / opts.dt - 1e-9));
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * opts.dt;
    while (next_snap < want.size() && t >= want[next_snap] - 1e-9) {
      tr.snapshot_times.push_back(t);
      tr.snapshots.push_back(pi);
      ++next_snap;
    }
    if (k == n_steps) {
      // final state: record its spectral data without stepping further
      const double lam = moment(pi, 1) > 0.0 ? leading_eigenpair(pi).lambda : 0.0;
      tr.times.push_back(t);
      tr.lambda.push_back(lam);
      tr.phi.push_back(tr.phi.empty() ? 0.0 : tr.phi.back());
      tr.mean_age.push_back(moment(pi, 1));
      tr.tags.push_back(tr.tags.empty() ? Criticality::Subcritical : tr.tags.back());
      break;
    }

    const bool seeded = !warm.empty() && warm.size() == pi.size();
    AgeStep s = step(pi, opts.dt, seeded ? &warm : nullptr, opts.band);
    tr.times.push_back(t);
    tr.lambda.push_back(s.lambda);
    tr.phi.push_back(s.phi);
    tr.mean_age.push_back(moment(pi, 1));
    tr.tags.push_back(s.tag);
    tr.max_defect = std::max(tr.max_defect, s.defect);
    if (s.overshoot) ++tr.overshoot_steps;
    if (s.eig && tr.t_critical < 0.0) tr.t_critical = t;

    warm.clear();
    if (s.eig && s.pi.size() == pi.size() + 1) {
      warm.reserve(s.pi.size());
      warm.push_back(0.0);
      warm.insert(warm.end(), s.eig->theta.begin(), s.eig->theta.end());
    }
    pi = std::move(s.pi);
    if (opts.prune_every > 0 && (k + 1) % opts.prune_every == 0) {
      const std::size_t before = pi.size();
      pi = pi.pruned(opts.prune_threshold);
      if (pi.size() != before) warm.clear();
    }
  }
  return tr;
}

namespace {

struct Bump {
  double c, h;
  double f(double s) const {
    const double u = (s - c) / h;
    if (std::abs(u) >= 1.0) return 0.0;
    const double q = 1.0 - u * u;
    return q * q * q;
  }
  double df(double s) const {
    const double u = (s - c) / h;
    if (std::abs(u) >= 1.0) return 0.0;
    const double q = 1.0 - u * u;
    return -6.0 * u * q * q / h;
  }
};

}  // namespace

double stationarity_residual(const DiscreteMeasure& pi, const EigenPair& eig) {
  const double phi = phi_from_theta(pi, eig.theta);
  const auto x = pi.positions();
  const auto w = pi.weights();
  double worst = 0.0;
  for (int j = 0; j <= 3; ++j) {
    const double h = std::ldexp(1.0, -j);
    for (int k = 0; k <= 8 * (1 << j); ++k) {
      const Bump b{k * h, h};
      double a = 0.0, c = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        a += w[i] * b.df(x[i]);
        c += w[i] * b.f(x[i]) * eig.theta[i];
      }
      worst = std::max(worst, std::abs(a - phi * c + phi * b.f(0.0)));
    }
  }
  return worst;
}

double stationarity_residual(const DiscreteMeasure& pi) {
  return stationarity_residual(pi, leading_eigenpair(pi));
}

void write_summary_csv(std::ostream& os, const AgeTrajectory& traj) {
  os << "t,lambda,phi,mean_age,levy_to_previous\n";
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    const double t = traj.snapshot_times[i];
    const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t - 1e-12);
    const auto k = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - traj.times.begin(),
                                                                     static_cast<std::ptrdiff_t>(traj.times.size()) - 1));
    const double levy = i == 0 ? 0.0 : levy_distance(traj.snapshots[i - 1], traj.snapshots[i]);
    os << format_double(t) << ',' << format_double(traj.lambda[k]) << ',' << format_double(traj.phi[k]) << ','
       << format_double(traj.mean_age[k]) << ',' << format_double(levy) << '\n';
  }
}

}  // namespace mfff
