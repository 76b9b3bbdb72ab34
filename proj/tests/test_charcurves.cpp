#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfff/charcurves.hpp"
#include "mfff/error.hpp"
#include "mfff/spectral.hpp"

using namespace mfff;

namespace {

const Trajectory& mono() {
  static const Trajectory tr = [] {
    SolverConfig c;
    c.K = 1000;
    c.store_every = 10;
    return solve(Model::ForestFire, std::vector<double>{1.0}, 2.6, c);
  }();
  return tr;
}

// Progeny law of delta_{0.5}: Borel with mean offspring 0.5.
std::vector<double> borel_half(int K) {
  std::vector<double> v(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k)
    v[static_cast<std::size_t>(k - 1)] =
        std::exp(-0.5 * k + (k - 1) * std::log(0.5 * k) - std::lgamma(k + 1.0));
  return v;
}

}  // namespace

TEST_CASE("no burning leaves the curves at their final values") {
  auto sol = solve_backward([](double) { return 0.0; }, 5.0, 2.0, 1e-2);
  for (std::size_t i = 0; i < sol.s.size(); ++i) {
    CHECK(sol.psi[i] == 1.0);
    CHECK(sol.x[i] == 1.0);
  }
  auto pre = solve_backward(mono(), 0.8);
  CHECK(pre.psi_at_zero == 1.0);
  const auto pi0 = DiscreteMeasure::dirac(0.0);
  CHECK(reconstruct_pi(pi0, pre).pi == translate(pi0, 0.8));
  const auto u = discretize(Uniform{0.5}, 50);
  const auto r = reconstruct_pi(u, solve_backward([](double) { return 0.0; }, 1.0, 0.7)).pi;
  const auto e = translate(u, 0.7);
  REQUIRE(r.size() == e.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r.positions()[i] == e.positions()[i]);
    CHECK(std::abs(r.weights()[i] - e.weights()[i]) <= 1e-15);
  }
}

TEST_CASE("monodisperse curves at t = 2") {
  auto sol = solve_backward(mono(), 2.0);
  CHECK(sol.s.front() == 0.0);
  CHECK(sol.s.back() == 2.0);
  CHECK(sol.psi.back() == 1.0);
  CHECK(sol.x.back() == 1.0);
  CHECK(sol.psi_at_zero > 0.0);
  CHECK(sol.psi_at_zero < 1.0);
  for (std::size_t i = 0; i < sol.s.size(); ++i) {
    CHECK(sol.psi[i] > 0.0);
    CHECK(sol.psi[i] <= 1.0);
    CHECK(sol.x[i] >= 0.0);
    CHECK(sol.x[i] <= 1.0);
  }
  CHECK(consistency_error(sol, mono()) <= 1e-4);
  // the vertex count C_0 = 1 makes x(0) = X_0(psi(0)) = psi(0)
  CHECK(std::abs(sol.x.front() - sol.psi_at_zero) <= 1e-6);
}

TEST_CASE("psi is continuous across gelation") {
  auto sol = solve_backward(mono(), 2.0);
  for (std::size_t i = 0; i + 1 < sol.s.size(); ++i)
    CHECK(std::abs(sol.psi[i + 1] - sol.psi[i]) <= 2.0 * (sol.s[i + 1] - sol.s[i]));
  CHECK(sol.psi_at(1.0 - 1e-9) == doctest::Approx(sol.psi_at(1.0 + 1e-9)).epsilon(1e-8));
}

TEST_CASE("psi decreases in the terminal time") {
  auto a = solve_backward(mono(), 1.8);
  auto b = solve_backward(mono(), 2.2);
  for (double s : {0.0, 0.5, 1.0, 1.5, 1.79}) CHECK(b.psi_at(s) <= a.psi_at(s));
}

TEST_CASE("t-derivative is stable under halving delta") {
  const double t = 2.0;
  for (double s : {0.0, 0.7, 1.3}) {
    auto d = [&](double delta) {
      return (solve_backward(mono(), t + delta).psi_at(s) - solve_backward(mono(), t - delta).psi_at(s)) /
             (2.0 * delta);
    };
    const double d1 = d(1e-3), d2 = d(5e-4);
    CHECK(d1 < 0.0);
    CHECK(std::abs(d2 / d1 - 1.0) <= 0.01);
  }
}

TEST_CASE("reconstructed age law") {
  const auto pi0 = DiscreteMeasure::dirac(0.0);
  for (double t : {1.5, 2.0, 2.5}) {
    auto r = reconstruct_pi(pi0, solve_backward(mono(), t));
    CHECK(r.mass_defect <= 1e-3);
    CHECK(r.pi.is_probability(1e-12));
    CHECK(r.surviving_mass == doctest::Approx(solve_backward(mono(), t).psi_at_zero));
    CHECK(r.pi.positions().back() == doctest::Approx(t));
  }
}

TEST_CASE("reconstructed eigenfunction at t = 2") {
  const auto pi0 = DiscreteMeasure::dirac(0.0);
  auto th = reconstruct_theta(pi0, mono(), 2.0);
  CHECK(std::abs(th.normalization - 1.0) <= 2e-2);
  CHECK(std::abs(th.theta.front()) <= 1e-2);
  for (std::size_t i = 0; i + 1 < th.theta.size(); ++i) CHECK(th.theta[i + 1] >= th.theta[i] - 1e-3);
  auto eig = leading_eigenpair(th.pi);
  CHECK(std::abs(eig.lambda - 1.0) <= 5e-3);
  double sup = 0.0;
  for (std::size_t i = 0; i < th.theta.size(); ++i) sup = std::max(sup, std::abs(th.theta[i] - eig.theta[i]));
  CHECK(sup <= 0.05);
  CHECK(th.phi_t == doctest::Approx(phi_from_theta(th.pi, eig.theta)).epsilon(1e-3));
}

TEST_CASE("non-degenerate initial ages") {
  const auto pi0 = DiscreteMeasure::dirac(0.5);
  SolverConfig c;
  c.K = 1000;
  c.store_every = 10;
  auto tr = solve(Model::ForestFire, borel_half(1000), 1.6, c);
  CHECK(tr.t_gel == doctest::Approx(0.5).epsilon(1e-9));
  auto th = reconstruct_theta(pi0, tr, 1.5);
  CHECK(std::abs(th.normalization - 1.0) <= 2e-2);
  auto eig = leading_eigenpair(th.pi);
  double sup = 0.0;
  for (std::size_t i = 0; i < th.theta.size(); ++i) sup = std::max(sup, std::abs(th.theta[i] - eig.theta[i]));
  CHECK(sup <= 0.05);
}

TEST_CASE("errors and export") {
  CHECK_THROWS_AS(solve_backward([](double) { return -1.0; }, 0.0, 1.0), NumericalFailure);
  CHECK_THROWS_AS(solve_backward(mono(), 3.0), InvalidArgument);
  CHECK_THROWS_AS(reconstruct_theta(DiscreteMeasure::dirac(0.0), mono(), 0.9), InvalidArgument);

  auto sol = solve_backward([](double) { return 0.0; }, 1.0, 0.25, 0.1);
  std::ostringstream os;
  write_csv(os, sol);
  CHECK(os.str() == "s,psi,x\n0,1,1\n0.10000000000000001,1,1\n0.20000000000000001,1,1\n0.25,1,1\n");
}
