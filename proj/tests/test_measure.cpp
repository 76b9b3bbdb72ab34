#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mfff/error.hpp"
#include "mfff/measure.hpp"

using namespace mfff;

namespace {

DiscreteMeasure random_atoms(std::mt19937_64& rng, int n, double scale = 3.0) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    x[i] = scale * U(rng);
    w[i] = U(rng) + 0.05;
  }
  return DiscreteMeasure(x, w).normalized();
}

}  // namespace

TEST_CASE("construction sorts and merges") {
  DiscreteMeasure mu({2.0, 1.0, 1.0 + 1e-13, 0.5}, {0.25, 0.25, 0.25, 0.25});
  REQUIRE(mu.size() == 3);
  CHECK(mu.positions()[0] == 0.5);
  CHECK(mu.positions()[1] == doctest::Approx(1.0));
  CHECK(mu.weights()[1] == doctest::Approx(0.5));
  CHECK(mu.is_probability());
  CHECK_THROWS_AS(DiscreteMeasure({1.0}, {-0.1}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteMeasure({-1.0}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteMeasure({NAN}, {1.0}), InvalidArgument);
}

TEST_CASE("discretize examples") {
  auto d = discretize(DiracAt{1.0}, 17);
  REQUIRE(d.size() == 1);
  CHECK(d.positions()[0] == 1.0);
  CHECK(d.weights()[0] == 1.0);

  auto u = discretize(Uniform{2.0}, 4);
  CHECK(u.size() == 4);
  CHECK(std::abs(u.total_mass() - 1.0) <= 1e-12);

  // 2 ln 2, first moment of 1/2 sech^2(x/2) on [0, inf)
  auto s = discretize(SechSquaredStationary{}, 2000);
  CHECK(std::abs(moment(s, 1) - 1.38629436111989061883) <= 1e-6);
  CHECK(std::abs(s.total_mass() - 1.0) <= 1e-12);
  for (double x : s.positions()) CHECK(x > 0.0);

  for (int n : {2, 3, 5, 7, 100, 2000}) {
    auto un = discretize(Uniform{3.0}, n);
    CHECK(std::abs(un.total_mass() - 1.0) <= 1e-12);
    CHECK(std::abs(moment(un, 1) - 1.5) <= 1e-12);
  }
}

TEST_CASE("density variant") {
  Density tri{[](double x) { return 2.0 * x; }, 1.0};
  auto m = discretize(tri, 400);
  CHECK(std::abs(moment(m, 1) - 2.0 / 3.0) <= 1e-10);

  Density bad{[](double) { return 3.0; }, 1.0};
  try {
    discretize(bad, 100);
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& e) {
    CHECK(e.value() == doctest::Approx(3.0));
  }
  CHECK_THROWS_AS(discretize(tri, 1), InvalidArgument);
}

TEST_CASE("levy distance examples") {
  auto d0 = DiscreteMeasure::dirac(0.0);
  CHECK(levy_distance(d0, d0) == 0.0);
  CHECK(std::abs(levy_distance(d0, DiscreteMeasure::dirac(0.3)) - 0.3) <= 1e-10);
  CHECK(std::abs(levy_distance(d0, DiscreteMeasure::dirac(2.0)) - 1.0) <= 1e-10);
  auto u = discretize(Uniform{1.0}, 50);
  CHECK(levy_distance(u, u) == 0.0);
  CHECK_THROWS_AS(levy_distance(DiscreteMeasure({1.0}, {0.5}), d0), InvalidArgument);
}

TEST_CASE("levy distance is a metric on random atom measures") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = random_atoms(rng, 1 + trial % 9);
    auto b = random_atoms(rng, 1 + (trial * 7) % 11);
    auto c = random_atoms(rng, 1 + (trial * 3) % 5);
    const double ab = levy_distance(a, b), ba = levy_distance(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(levy_distance(a, c) <= ab + levy_distance(b, c) + 1e-12);
  }
}

TEST_CASE("levy distance under translation and single-atom moves") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto mu = random_atoms(rng, 20);
    const double s = U(rng);
    CHECK(levy_distance(mu, translate(mu, s)) <= s + 1e-12);

    const int n = 25;
    std::vector<double> x(n), w(n, 1.0 / n);
    for (auto& v : x) v = U(rng) + 0.1;
    DiscreteMeasure e(x, w);
    x[trial % n] = 0.0;
    DiscreteMeasure moved(x, w);
    CHECK(levy_distance(e, moved) <= 1.0 / n + 1e-12);
  }
}

TEST_CASE("translate, moment, tilt") {
  auto d = translate(DiscreteMeasure::dirac(0.0), 2.0);
  CHECK(d == DiscreteMeasure::dirac(2.0));
  std::mt19937_64 rng(3);
  auto mu = random_atoms(rng, 30);
  CHECK(translate(mu, 0.0) == mu);
  CHECK(moment(translate(mu, 0.7), 1) == doctest::Approx(moment(mu, 1) + 0.7).epsilon(1e-14));

  CHECK(moment(DiscreteMeasure::dirac(1.7), 1) == 1.7);
  CHECK(std::abs(moment(discretize(Uniform{3.0}, 100), 1) - 1.5) <= 1e-12);
  CHECK(std::abs(moment(discretize(Uniform{1.0}, 100), 2) - 1.0 / 3.0) <= 1e-12);

  std::vector<double> ones(mu.size(), 1.0);
  CHECK(tilt(mu, ones) == mu);
  std::vector<double> three{3.0};
  auto t = tilt(DiscreteMeasure::dirac(1.0), three);
  CHECK(t.weights()[0] == 3.0);
  std::vector<double> neg(mu.size(), 1.0);
  neg[0] = -1.0;
  CHECK_THROWS_AS(tilt(mu, neg), InvalidArgument);

  auto s = discretize(SechSquaredStationary{}, 2000);
  std::vector<double> th(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) th[i] = 2.0 * std::tanh(s.positions()[i] / 2.0);
  CHECK(std::abs(tilt(s, th).total_mass() - 1.0) <= 1e-6);
}

TEST_CASE("pruned keeps mass") {
  DiscreteMeasure mu({0.1, 0.2, 0.3}, {0.5, 1e-9, 0.5 - 1e-9});
  auto p = mu.pruned(1e-6);
  CHECK(p.size() == 2);
  CHECK(std::abs(p.total_mass() - 1.0) <= 1e-15);
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(9);
  auto mu = random_atoms(rng, 200, 1e3);
  std::stringstream ss;
  write_csv(ss, mu);
  CHECK(ss.str().find('\r') == std::string::npos);
  auto back = read_csv(ss);
  CHECK(back == mu);
  CHECK(measure_from_json(to_json(mu)) == mu);
}

TEST_CASE("measure spec json") {
  using nlohmann::json;
  CHECK(std::holds_alternative<Uniform>(measure_spec_from_json(json{{"type", "uniform"}, {"c", 2.0}})));
  CHECK(std::holds_alternative<SechSquaredStationary>(measure_spec_from_json(json{{"type", "sech2"}})));
  CHECK_THROWS_AS(measure_spec_from_json(json{{"type", "uniform"}, {"cc", 2.0}}), InvalidArgument);
  CHECK_THROWS_AS(measure_spec_from_json(json{{"type", "gamma"}}), InvalidArgument);
}
