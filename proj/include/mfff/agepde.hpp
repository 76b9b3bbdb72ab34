#pragma once

// Particle scheme for the age equation: unit-speed transport, burning at
// rate phi(t) theta_t(s), reinjection of the burnt mass at age 0.

#include <iosfwd>
#include <optional>
#include <vector>

#include "mfff/measure.hpp"
#include "mfff/spectral.hpp"

namespace mfff {

struct AgeOptions {
  double dt = 1e-3;
  double band = 5e-3;
  int prune_every = 100;
  double prune_threshold = 1e-12;
  std::vector<double> snapshot_times;  // measures kept at the first step reaching each time
};

struct AgeStep {
  DiscreteMeasure pi;
  std::optional<EigenPair> eig;  // empty for a transport-only step
  Criticality tag = Criticality::Subcritical;
  bool overshoot = false;  // certified supercritical but within the band; burnt as critical
  double lambda = 0.0;
  double phi = 0.0;
  double injected = 0.0;  // mass reinjected at age 0
  double defect = 0.0;    // |mass - 1| before renormalization
};

/// One step of size dt <= 0.01 from pi. `warm` seeds the power iteration.
/// A Supercritical verdict with lambda <= 1 + band counts as a one-step
/// overshoot and burns; larger values throw NumericalFailure.
AgeStep step(const DiscreteMeasure& pi, double dt, const std::vector<double>* warm = nullptr,
             double band = 5e-3);

struct AgeTrajectory {
  double dt = 0.0;
  std::vector<double> times;  // time of each recorded state, times[0] = 0
  std::vector<double> lambda;
  std::vector<double> phi;
  std::vector<double> mean_age;
  std::vector<Criticality> tags;
  double max_defect = 0.0;
  double t_critical = -1.0;  // first time with burning, -1 if none
  int overshoot_steps = 0;

  std::vector<double> snapshot_times;
  std::vector<DiscreteMeasure> snapshots;

  /// Snapshot at the listed time nearest to t.
  const DiscreteMeasure& snapshot(double t) const;
};

/// Throws InvalidArgument for a supercritical or infinite-mean start.
AgeTrajectory evolve(const DiscreteMeasure& pi0, double T, const AgeOptions& opts = {});

/// max over smooth bumps f of |\int f' dpi - phi \int f theta dpi + phi f(0)|.
double stationarity_residual(const DiscreteMeasure& pi);
double stationarity_residual(const DiscreteMeasure& pi, const EigenPair& eig);

/// Header "t,lambda,phi,mean_age,levy_to_previous" over the snapshots.
void write_summary_csv(std::ostream& os, const AgeTrajectory& traj);

}  // namespace mfff
