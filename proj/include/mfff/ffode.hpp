#pragma once

// Truncated Flory, Smoluchowski and critical forest-fire equations.
//
// v_k is the fraction of vertices in clusters of size k. All three models
// share dv_k/dt = (k/2) (v*v)_k - k v_k S, with S = 1 (forest fire),
// S = sum v(0) (Flory) or S = sum v(t) (Smoluchowski); the forest-fire model
// adds phi(t) to dv_1/dt.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mfff {

enum class Model { Flory, Smoluchowski, ForestFire };
enum class TailPolicy { Absorb, SqrtExtrapolate };

std::string to_string(Model m);
Model model_from_string(const std::string& s);
TailPolicy tail_policy_from_string(const std::string& s);

struct ClusterDensity {
  double t = 0.0;
  std::vector<double> v;   // v[k-1], k = 1..K
  double tail_mass = 0.0;  // mass carried beyond size K
  double phi = 0.0;

  double mass() const;  // sum v + tail_mass
};

struct SolverConfig {
  int K = 4000;
  double dt = 1e-3;
  TailPolicy tail_policy = TailPolicy::SqrtExtrapolate;
  int store_every = 1;  // keep every n-th output state (phi is kept at every step)
};

struct GelationInfo {
  double t_gel = 0.0;
  double first_moment = 0.0;  // including the tail estimate
  double tail_fraction = 0.0;
  bool divergent = false;
  bool warning = false;
  std::string message;
};

/// (sum k v_k + power-law tail estimate)^{-1}; 0 when the moment diverges.
GelationInfo gelation_analysis(std::span<const double> v0);
double gelation_time(std::span<const double> v0);

struct Trajectory {
  Model model = Model::ForestFire;
  SolverConfig cfg;
  double t_gel = 0.0;
  std::vector<double> times;  // every output step
  std::vector<double> phi;    // phi at every output step (right limit at t_gel)
  std::vector<ClusterDensity> states;
  double phi_lipschitz = 0.0;  // max |dphi/dt| over steps after t_gel

  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  /// Linear interpolation; 0 before t_gel, right limit at t_gel.
  double phi_at(double t) const;
  /// Linear interpolation between stored states.
  std::vector<double> v_at(double t) const;
  /// Stored state nearest to t.
  const ClusterDensity& nearest(double t) const;
};

/// RK4 with substeps of at most 2.5/K for stability, split at t_gel.
/// Throws NumericalFailure on negative v_k or phi > 1 + 1e-3.
Trajectory solve(Model model, std::span<const double> v0, double T, const SolverConfig& cfg);

/// (sum_{l >= k} v_l) sqrt(k) / sqrt(2 phi / pi) at k = K/2.
double tail_check(const ClusterDensity& state);

/// Flory closed form k^{k-1} t^{k-1} e^{-kt} / k! (monodisperse, t <= 1).
double flory_monodisperse(int k, double t);

/// Rows "t,v_1..v_{K'},tail_mass,phi".
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int K_out);
nlohmann::json trajectory_summary(const Trajectory& traj);

}  // namespace mfff
