#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfff/agepde.hpp"
#include "mfff/branching.hpp"
#include "mfff/charcurves.hpp"
#include "mfff/error.hpp"

using namespace mfff;

namespace {

const DiscreteMeasure& stationary() {
  static const DiscreteMeasure pi = discretize(SechSquaredStationary{}, 2000);
  return pi;
}

const AgeTrajectory& mono() {
  static const AgeTrajectory tr = [] {
    AgeOptions o;
    o.snapshot_times = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5};
    return evolve(DiscreteMeasure::dirac(0.0), 2.5, o);
  }();
  return tr;
}

double integral(const DiscreteMeasure& pi, double (*f)(double)) {
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) s += pi.weights()[i] * f(pi.positions()[i]);
  return s;
}

}  // namespace

TEST_CASE("transport before gelation") {
  AgeOptions o;
  o.dt = 0.01;
  o.snapshot_times = {0.7};
  auto tr = evolve(DiscreteMeasure::dirac(0.0), 0.7, o);
  const auto& pi = tr.snapshot(0.7);
  REQUIRE(pi.size() == 1);
  CHECK(pi.positions()[0] == doctest::Approx(0.7).epsilon(1e-12));
  for (double p : tr.phi) CHECK(p == 0.0);
  CHECK(tr.t_critical < 0.0);

  auto s = step(DiscreteMeasure::dirac(0.3), 0.01);
  CHECK_FALSE(s.eig.has_value());
  CHECK(s.pi == translate(DiscreteMeasure::dirac(0.3), 0.01));
}

TEST_CASE("stationary law") {
  const auto& st = stationary();
  CHECK(stationarity_residual(st) <= 1e-3);
  CHECK(stationarity_residual(translate(st, 0.0)) == stationarity_residual(st));
  CHECK(stationarity_residual(DiscreteMeasure::dirac(1.0)) > 0.1);

  const double dt = 1e-3;
  auto s = step(st, dt);
  REQUIRE(s.eig.has_value());
  CHECK(s.phi == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(s.injected == doctest::Approx(s.phi * dt).epsilon(1e-3));
  CHECK(s.defect <= 1e-9);
  // smooth functionals move only by the residual of the discretization
  const double bound = dt * (stationarity_residual(st) + 1e-4);
  for (auto f : {+[](double x) { return std::exp(-x); }, +[](double x) { return 1.0 / (1.0 + x * x); },
                 +[](double x) { return std::tanh(x); }})
    CHECK(std::abs(integral(s.pi, f) - integral(st, f)) <= bound);

  AgeOptions o;
  o.snapshot_times = {1.0};
  auto tr = evolve(st, 1.0, o);
  CHECK(levy_distance(tr.snapshot(1.0), st) <= 0.01);
  CHECK(tr.t_critical == 0.0);
  CHECK(tr.max_defect <= 1e-9);
  for (double p : tr.phi) CHECK(p <= 1.0 + 1e-6);
}

TEST_CASE("monodisperse evolution") {
  const auto& tr = mono();
  CHECK(std::abs(tr.t_critical - 1.0) <= 0.02);
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const double t = tr.times[i];
    if (t < 1.0 - 1e-9) {
      CHECK(tr.lambda[i] < 1.0);
      CHECK(tr.phi[i] == 0.0);
      CHECK(tr.tags[i] == Criticality::Subcritical);
    }
    if (t >= 1.1 && t <= 2.0) CHECK(std::abs(tr.lambda[i] - 1.0) <= 5e-3);
    CHECK(tr.tags[i] != Criticality::Supercritical);
    if (tr.tags[i] == Criticality::Critical) {
      CHECK(tr.phi[i] > 0.0);
      CHECK(tr.phi[i] <= 1.0 + 1e-6);
    } else {
      CHECK(tr.phi[i] == 0.0);
    }
    if (t > 1.01) CHECK(tr.tags[i] == Criticality::Critical);
    CHECK(tr.mean_age[i] <= tr.mean_age[0] + t + 1e-6);
  }
  CHECK(tr.max_defect <= 1e-9);
  for (const auto& pi : tr.snapshots) CHECK(pi.is_probability(1e-6));
}

TEST_CASE("Levy-Lipschitz bound along the trajectory") {
  const auto& tr = mono();
  auto phi_integral = [&](double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < tr.times.size(); ++i)
      if (tr.times[i] >= a - 1e-9 && tr.times[i] < b - 1e-9) s += tr.phi[i] * tr.dt;
    return s;
  };
  for (std::size_t i = 0; i < tr.snapshots.size(); ++i)
    for (std::size_t j = i + 1; j < tr.snapshots.size(); ++j) {
      const double a = tr.snapshot_times[i], b = tr.snapshot_times[j];
      CHECK(levy_distance(tr.snapshots[i], tr.snapshots[j]) <= (b - a) + phi_integral(a, b) + 0.01);
    }
}

TEST_CASE("agreement with the characteristic curves and the cluster densities") {
  SolverConfig c;
  c.K = 1000;
  c.store_every = 10;
  auto ode = solve(Model::ForestFire, std::vector<double>{1.0}, 2.5, c);
  const auto pi0 = DiscreteMeasure::dirac(0.0);
  std::uint64_t seed = 11;
  for (double t : {1.5, 2.5}) {
    const auto& pi = mono().snapshot(t);
    CHECK(levy_distance(pi, reconstruct_pi(pi0, solve_backward(ode, t)).pi) <= 0.02);
    auto law = progeny_law(pi, 10, MonteCarlo{200000, seed++});
    const auto& v = ode.nearest(t).v;
    for (int k = 1; k <= 10; ++k)
      CHECK(std::abs(law.v[k - 1] - v[k - 1]) <= 3.0 * law.std_err[k - 1] + 1e-12);
  }
}

TEST_CASE("errors and export") {
  CHECK_THROWS_AS(step(stationary(), 0.02), InvalidArgument);
  CHECK_THROWS_AS(evolve(DiscreteMeasure::dirac(1.5), 1.0), InvalidArgument);
  CHECK_THROWS_AS(step(DiscreteMeasure::dirac(1.2), 1e-3), NumericalFailure);

  std::ostringstream os;
  write_summary_csv(os, mono());
  const auto s = os.str();
  CHECK(s.rfind("t,lambda,phi,mean_age,levy_to_previous\n0,0,0,0,0\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 12);
}
