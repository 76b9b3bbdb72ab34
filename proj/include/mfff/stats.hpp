#pragma once

// Small statistical helpers shared by the simulation checks.

#include <cstddef>
#include <span>

namespace mfff::stats {

/// Upper tail P(X > x) for X ~ chi^2(dof).
double chi_square_sf(double x, double dof);

struct ChiSquare {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Homogeneity test for two count vectors over the same categories.
/// Categories empty in both samples are skipped.
ChiSquare chi_square_two_sample(std::span<const double> a, std::span<const double> b);

/// Pearson test of observed counts against expected counts.
ChiSquare chi_square_goodness(std::span<const double> observed, std::span<const double> expected,
                              int fitted_params = 0);

}  // namespace mfff::stats
