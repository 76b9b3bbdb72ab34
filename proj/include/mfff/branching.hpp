#pragma once

// Aged multitype Galton-Watson trees: a vertex of age s has Poisson(m_s)
// children, m_s = \int min(s, u) dpi(u), with child ages drawn from the
// normalized intensity min(s, u) dpi(u).

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "mfff/measure.hpp"
#include "mfff/rng.hpp"

namespace mfff {

/// Age of the root: a fixed value, a draw from pi, or +infinity.
struct RootAge {
  enum class Kind { Fixed, FromPi, Infinity };
  Kind kind = Kind::FromPi;
  double age = 0.0;

  static RootAge fixed(double s) { return {Kind::Fixed, s}; }
  static RootAge from_pi() { return {Kind::FromPi, 0.0}; }
  static RootAge infinity() { return {Kind::Infinity, std::numeric_limits<double>::infinity()}; }
};

/// Prefix tables for O(log n) intensity evaluation and child-age draws.
class OffspringSampler {
 public:
  explicit OffspringSampler(const DiscreteMeasure& pi);

  const DiscreteMeasure& measure() const { return pi_; }
  /// m_s; s may be +infinity.
  double intensity(double s) const;
  /// m at atom j.
  double atom_intensity(std::size_t j) const { return M_[j]; }
  /// Atom index of a child of a parent with age s.
  std::size_t child(double s, Rng& rng) const;
  /// Atom index drawn from pi.
  std::size_t from_pi(Rng& rng) const;

 private:
  DiscreteMeasure pi_;
  std::vector<double> A_;  // A_[k] = sum_{j<k} x_j w_j
  std::vector<double> B_;  // B_[k] = sum_{j<k} w_j
  std::vector<double> M_;
};

struct AgedTree {
  std::vector<std::int64_t> parent;  // parent[root] = -1
  std::vector<double> age;
  std::vector<int> depth;
  std::size_t root = 0;
  bool truncated = false;

  std::size_t size() const { return age.size(); }
};

struct TreeOptions {
  std::size_t size_cap = 1000000;
  int max_depth = -1;  // -1: unlimited; vertices at max_depth get no children
};

/// Breadth-first sampling; stops with `truncated` set when a vertex beyond
/// size_cap would be created.
AgedTree sample_tree(const OffspringSampler& sampler, RootAge root, Rng& rng,
                     const TreeOptions& opts = {});
AgedTree sample_tree(const DiscreteMeasure& pi, RootAge root, Rng& rng,
                     const TreeOptions& opts = {});

/// Total progeny only, processed generation by generation in (type, count)
/// batches. Returns size_cap + 1 when the cap is exceeded.
std::size_t sample_size(const OffspringSampler& sampler, RootAge root, Rng& rng,
                        std::size_t size_cap);

/// Newick-like text: node := [ "(" node { "," node } ")" ] "@" age
std::string to_newick(const AgedTree& tree);

struct ProgenyLaw {
  std::vector<double> v;       // v[k-1] = P(|T| = k)
  std::vector<double> std_err;  // empty for the closed form
  double residual = 0.0;       // P(|T| > K)
  std::string method;
  std::size_t samples = 0;
};

struct MonteCarlo {
  std::size_t replicas = 100000;
  std::uint64_t seed = 1;
};
struct SmallKClosedForm {};

/// v_1..v_K of |T^pi| with root age drawn from pi.
ProgenyLaw progeny_law(const DiscreteMeasure& pi, int K, const MonteCarlo& mc);
/// Exact Taylor coefficients of the Campbell fixed point, recursively.
ProgenyLaw progeny_law(const DiscreteMeasure& pi, int K, SmallKClosedForm);

void write_csv(std::ostream& os, const ProgenyLaw& law);

struct GenFnOptions {
  double tol = 1e-13;
  long max_iter = 1000000;
  double radial_step = 0.05;
};

/// f(., z) on the atoms of pi, by fixed-point iteration with radial
/// continuation. Throws NumericalFailure carrying the last residual.
std::vector<std::complex<double>> genfn_grid(const DiscreteMeasure& pi, std::complex<double> z,
                                             const GenFnOptions& opts = {});

/// f(s, z) = E z^{|T_s|}; RootAge::from_pi() gives E z^{|T|}.
std::complex<double> genfn(const DiscreteMeasure& pi, RootAge s, std::complex<double> z,
                           const GenFnOptions& opts = {});

struct ExpectedSize {
  bool finite = false;
  double value = std::numeric_limits<double>::infinity();
  std::string diagnostic;
};

/// E|T_s| = sum_k (L^k 1)(s) for subcritical pi, otherwise infinite.
ExpectedSize expected_size(const DiscreteMeasure& pi, double s);

struct SqrtFit {
  double sqrt_2phi = 0.0;
  std::vector<double> slopes;  // per atom: 1 - f(s, 1-eps) ~ slope * sqrt(eps)
  std::vector<double> epsilons;
};

/// Fits 1 - E z^{|T|} = a sqrt(eps) + b eps + c eps^{3/2} through
/// eps = 1e-2, 1e-3, 1e-4 and reports a.
SqrtFit sqrt_expansion_fit(const DiscreteMeasure& pi);

}  // namespace mfff
