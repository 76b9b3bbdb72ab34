#pragma once

// The min-kernel operator (L f)(x) = \int f(s) min(x, s) dpi(s) on L^2(pi).

#include <complex>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfff/measure.hpp"

namespace mfff {

class KernelOperator {
 public:
  explicit KernelOperator(DiscreteMeasure pi);

  const DiscreteMeasure& measure() const { return pi_; }
  std::size_t size() const { return pi_.size(); }

  /// O(n) prefix-sum evaluation on the atoms.
  std::vector<double> apply(std::span<const double> f) const;
  std::vector<std::complex<double>> apply(std::span<const std::complex<double>> f) const;

  /// (L f)(q) at arbitrary points q >= 0.
  std::vector<double> apply_at(std::span<const double> f, std::span<const double> q) const;

  /// Row-major K[i][j] = min(s_i, s_j) w_j.
  std::vector<double> dense_matrix() const;
  /// Row-major M[i][j] = sqrt(w_i) min(s_i, s_j) sqrt(w_j).
  std::vector<double> symmetric_matrix() const;

 private:
  DiscreteMeasure pi_;
};

std::vector<double> apply(const KernelOperator& op, std::span<const double> f);

/// sqrt(sum_ij min(x_i, x_j)^2 w_i w_j), computed in O(n).
double hs_norm(const DiscreteMeasure& pi);

struct EigenOptions {
  double tol = 1e-12;          // on the Rayleigh-quotient increment
  int max_iter = 100000;
  double residual_tol = 1e-9;  // relative to lambda
  std::vector<double> warm_start;  // optional grid theta from a nearby measure
};

struct EigenPair {
  double lambda = 0.0;
  std::vector<double> theta;  // on the atoms, with \int theta dpi = 1
  double theta_at_infinity = 0.0;
  double residual = 0.0;  // ||L theta - lambda theta||_2 / ||theta||_2 in L^2(pi)
  double lambda2 = 0.0;
  int iterations = 0;
};

/// Power iteration on the symmetrized matrix. Throws InvalidArgument if the
/// operator is zero and NumericalFailure if the iteration cap is hit.
EigenPair leading_eigenpair(const DiscreteMeasure& pi, const EigenOptions& opts);
EigenPair leading_eigenpair(const DiscreteMeasure& pi, double tol = 1e-12);

/// Extends a grid eigenfunction to arbitrary points via theta = L theta / lambda.
std::vector<double> theta_at(const DiscreteMeasure& pi, const EigenPair& eig,
                             std::span<const double> q);

enum class Criticality { Subcritical, Critical, Supercritical };

std::string to_string(Criticality c);

struct CriticalityClass {
  Criticality tag = Criticality::Critical;
  double lambda = 0.0;
  double band = 5e-3;
  /// "mean<1", "tail>1/x" or "none".
  std::string certificate = "none";
};

/// Eigenvalue verdict within +-band of 1, overridden by a rigorous
/// certificate when one applies. Throws NumericalFailure when a certified
/// bound on lambda is violated.
CriticalityClass classify(const DiscreteMeasure& pi, double band = 5e-3);
CriticalityClass classify(const DiscreteMeasure& pi, const EigenPair& eig, double band = 5e-3);

/// (\int theta^3 dpi)^{-1}.
double phi_from_theta(const DiscreteMeasure& pi, std::span<const double> theta);

void write_eigenpair_csv(std::ostream& os, const DiscreteMeasure& pi, const EigenPair& eig);
nlohmann::json eigenpair_header(const EigenPair& eig);

}  // namespace mfff
