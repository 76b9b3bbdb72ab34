#pragma once

// Finite measures on [0, inf): atom lists, named families, Levy metric.

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace mfff {

struct DiracAt {
  double x = 0.0;
};

/// Uniform probability measure on [0, c].
struct Uniform {
  double c = 1.0;
};

/// Density 1/2 sech^2(x/2) on [0, inf); the stationary age law.
struct SechSquaredStationary {};

struct Atoms {
  std::vector<double> positions;
  std::vector<double> weights;
};

/// A probability density supported on [0, support].
struct Density {
  std::function<double(double)> pdf;
  double support = 1.0;
};

using MeasureSpec = std::variant<DiracAt, Uniform, SechSquaredStationary, Atoms, Density>;

/// Sorted atoms with nonnegative weights. Positions are strictly increasing;
/// atoms closer than kMergeTolerance are merged on construction.
class DiscreteMeasure {
 public:
  static constexpr double kMergeTolerance = 1e-12;
  static constexpr double kMassTolerance = 1e-6;

  DiscreteMeasure() = default;
  /// Sorts, merges and validates. Throws InvalidArgument on negative or
  /// non-finite input.
  DiscreteMeasure(std::vector<double> positions, std::vector<double> weights);

  static DiscreteMeasure dirac(double x);

  std::span<const double> positions() const { return positions_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  double total_mass() const;

  bool is_probability(double tol = kMassTolerance) const;
  /// Same atoms, weights divided by the total mass.
  DiscreteMeasure normalized() const;
  /// Drops atoms with weight below `threshold` and returns the dropped mass
  /// to the survivors pro rata.
  DiscreteMeasure pruned(double threshold) const;

  /// F(x) = mass of [0, x].
  double cdf(double x) const;

  bool operator==(const DiscreteMeasure&) const = default;

 private:
  struct Unchecked {};
  DiscreteMeasure(Unchecked, std::vector<double> positions, std::vector<double> weights)
      : positions_(std::move(positions)), weights_(std::move(weights)) {}

  friend DiscreteMeasure translate(const DiscreteMeasure&, double);
  friend DiscreteMeasure tilt(const DiscreteMeasure&, std::span<const double>);

  std::vector<double> positions_;
  std::vector<double> weights_;
};

/// Atoms at quadrature nodes with quadrature weights for density variants;
/// exact for DiracAt and Atoms. The result is a probability measure.
DiscreteMeasure discretize(const MeasureSpec& spec, int n_nodes);

/// Levy distance between two probability measures, by bisection on epsilon
/// (run to floating-point resolution) with an exact feasibility check.
double levy_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// Shift every atom right by t >= 0.
DiscreteMeasure translate(const DiscreteMeasure& mu, double t);

/// sum_i w_i x_i^p
double moment(const DiscreteMeasure& mu, int p);

/// Reweight atom i by g[i] >= 0. Mass is not renormalized.
DiscreteMeasure tilt(const DiscreteMeasure& mu, std::span<const double> g);

double sech2_density(double x);

// CSV (header "position,weight", 17 significant digits) and JSON forms.
void write_csv(std::ostream& os, const DiscreteMeasure& mu);
DiscreteMeasure read_csv(std::istream& is);
nlohmann::json to_json(const DiscreteMeasure& mu);
DiscreteMeasure measure_from_json(const nlohmann::json& j);

/// Parses {"type": "dirac"|"uniform"|"sech2"|"atoms", ...}.
MeasureSpec measure_spec_from_json(const nlohmann::json& j);

/// Formats a double with 17 significant digits.
std::string format_double(double x);

}  // namespace mfff
