#pragma once

// Characteristic curves (psi_t, x_t) of the forest-fire equations and the
// reconstruction of the age law pi_t and eigenfunction theta_t from them.

#include <functional>
#include <iosfwd>
#include <vector>

#include "mfff/ffode.hpp"
#include "mfff/measure.hpp"

namespace mfff {

using PhiFunction = std::function<double(double)>;

struct CharCurveSolution {
  double t = 0.0;
  double t_gel = 0.0;
  std::vector<double> s;    // ascending, s.front() = 0, s.back() = t
  std::vector<double> psi;
  std::vector<double> x;
  std::vector<double> phi;  // right limit of phi at each node
  double psi_at_zero = 1.0;

  /// Cubic Hermite interpolation on the grid; 1 for s >= t.
  double psi_at(double s) const;
  double x_at(double s) const;
};

/// Backward RK4 from psi(t) = x(t) = 1 on the grid {k ds} u {t_gel, t}.
/// phi is treated as 0 on [0, t_gel). Throws NumericalFailure if psi leaves
/// (0, 1 + 1e-9].
CharCurveSolution solve_backward(const PhiFunction& phi, double t_gel, double t, double ds = 1e-3);
CharCurveSolution solve_backward(const Trajectory& traj, double t, double ds = 1e-3);

/// X(z) = sum_k v_k z^k, with the mass beyond K spread as c k^{-3/2}.
double cluster_genfn(const ClusterDensity& state, double z);

/// max |x(s) - X_s(psi(s))| over the stored states with s <= t.
double consistency_error(const CharCurveSolution& sol, const Trajectory& traj);

struct ReconstructedPi {
  DiscreteMeasure pi;        // normalized
  double mass_defect = 0.0;  // |total mass - 1| before normalization
  double burnt_mass = 0.0;
  double surviving_mass = 0.0;
};

/// Burnt part: trapezoid atoms phi(s) psi(s) ds at t - s. Surviving part:
/// pi0 tilted by f_{pi0}(a, psi_t(0)) and translated by t.
/// Throws NumericalFailure when the mass defect exceeds 1e-3.
ReconstructedPi reconstruct_pi(const DiscreteMeasure& pi0, const CharCurveSolution& sol);

struct ThetaOptions {
  double delta = 1e-3;
  double ds = 1e-3;
  bool richardson = true;  // combine delta and delta/2
};

struct ReconstructedTheta {
  double t = 0.0;
  double phi_t = 0.0;
  DiscreteMeasure pi;          // reconstruct_pi at t
  std::vector<double> theta;   // on the atoms of pi
  double normalization = 0.0;  // \int theta dpi
};

/// Central difference in t of log psi_t(s) and log f_{pi0}(a, psi_t(0)) from
/// the solutions at t - delta and t + delta.
std::vector<double> theta_from_pair(const DiscreteMeasure& pi0, const CharCurveSolution& minus,
                                    const CharCurveSolution& plus, double phi_t,
                                    const DiscreteMeasure& pi_t, double t);

/// Throws InvalidArgument when phi(t) < 1e-6.
ReconstructedTheta reconstruct_theta(const DiscreteMeasure& pi0, const Trajectory& traj, double t,
                                     const ThetaOptions& opts = {});

/// Header "s,psi,x".
void write_csv(std::ostream& os, const CharCurveSolution& sol);

}  // namespace mfff
