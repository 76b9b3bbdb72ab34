#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mfff/error.hpp"
#include "mfff/spectral.hpp"

using namespace mfff;
using std::numbers::pi;

namespace {

DiscreteMeasure random_atoms(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 3.0 * U(rng);
    w[i] = U(rng) + 0.01;
  }
  return DiscreteMeasure(x, w).normalized();
}

double inner(const DiscreteMeasure& m, const std::vector<double>& f, const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.weights()[i] * f[i] * g[i];
  return s;
}

// Dense symmetric eigensolver on W^{1/2} K W^{1/2}, descending eigenvalues.
Eigen::VectorXd dense_spectrum(const DiscreteMeasure& m) {
  const auto M = KernelOperator(m).symmetric_matrix();
  const auto n = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd A = Eigen::Map<const Eigen::MatrixXd>(M.data(), n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

}  // namespace

TEST_CASE("apply examples") {
  KernelOperator d1(DiscreteMeasure::dirac(1.0));
  std::vector<double> one{1.0};
  CHECK(d1.apply(one)[0] == 1.0);

  auto u = discretize(Uniform{1.0}, 2000);
  KernelOperator op(u);
  std::vector<double> zeros(u.size(), 0.0), ones(u.size(), 1.0);
  for (double v : op.apply(zeros)) CHECK(v == 0.0);
  std::vector<double> at1{1.0};
  CHECK(std::abs(op.apply_at(ones, at1)[0] - 0.5) <= 1e-12);
  CHECK(std::abs(op.apply(ones).back() - 0.5) <= 1e-3);
}

TEST_CASE("hs_norm examples") {
  CHECK(hs_norm(DiscreteMeasure::dirac(1.0)) == 1.0);
  CHECK(hs_norm(DiscreteMeasure::dirac(2.5)) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(std::abs(hs_norm(discretize(Uniform{1.0}, 2000)) - 0.408248290463863016366) <= 1e-6);
}

TEST_CASE("dense and symmetric matrices") {
  std::mt19937_64 rng(7);
  auto m = random_atoms(rng, 40);
  KernelOperator op(m);
  const auto K = op.dense_matrix();
  const auto M = op.symmetric_matrix();
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(M[i * n + j] - M[j * n + i]) <= 1e-14);
  CHECK(dense_spectrum(m).minCoeff() >= -1e-10 * dense_spectrum(m).maxCoeff());

  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(3.0 * i);
  const auto Lf = op.apply(f);
  for (std::size_t i = 0; i < n; ++i) {
    double ref = 0.0;
    for (std::size_t j = 0; j < n; ++j) ref += K[i * n + j] * f[j];
    CHECK(std::abs(Lf[i] - ref) <= 1e-13);
  }
}

TEST_CASE("operator properties on random measures") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = random_atoms(rng, 5 + trial);
    KernelOperator op(m);
    std::vector<double> f(m.size()), g(m.size()), h(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      f[i] = N(rng);
      g[i] = N(rng);
      h[i] = std::abs(N(rng));
    }
    const auto Lf = op.apply(f), Lg = op.apply(g), Lh = op.apply(h);
    CHECK(std::abs(inner(m, Lf, g) - inner(m, f, Lg)) <= 1e-12);
    CHECK(inner(m, Lf, f) >= -1e-10 * inner(m, f, f));
    for (std::size_t i = 1; i < m.size(); ++i) CHECK(Lh[i] >= Lh[i - 1]);

    const auto eig = leading_eigenpair(m);
    const double hs = hs_norm(m);
    CHECK(eig.lambda <= hs + 1e-10);
    CHECK(hs <= moment(m, 1) + 1e-10);

    const auto spec = dense_spectrum(m);
    CHECK(std::abs(eig.lambda - spec(0)) <= 1e-10);
    if (m.size() > 1) CHECK(std::abs(eig.lambda2 - spec(1)) <= 1e-8);
    CHECK(eig.lambda2 < eig.lambda);
  }
}

TEST_CASE("eigenpair invariants") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_atoms(rng, 30);
    const auto eig = leading_eigenpair(m);
    CHECK(std::abs(inner(m, eig.theta, std::vector<double>(m.size(), 1.0)) - 1.0) <= 1e-10);
    CHECK(eig.theta[0] >= 0.0);
    for (std::size_t i = 1; i < m.size(); ++i) CHECK(eig.theta[i] >= eig.theta[i - 1]);
    CHECK(eig.residual <= 1e-8);
    CHECK(eig.theta_at_infinity > 0.0);
  }
  DiscreteMeasure with_zero({0.0, 1.0, 2.0}, {0.3, 0.3, 0.4});
  CHECK(leading_eigenpair(with_zero).theta[0] == 0.0);
}

TEST_CASE("leading eigenpair examples") {
  auto d = leading_eigenpair(DiscreteMeasure::dirac(1.7));
  CHECK(d.lambda == doctest::Approx(1.7).epsilon(1e-14));
  CHECK(d.theta[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(leading_eigenpair(DiscreteMeasure::dirac(0.0)), InvalidArgument);

  auto u = discretize(Uniform{pi * pi / 4.0}, 2000);
  auto eu = leading_eigenpair(u);
  CHECK(std::abs(eu.lambda - 1.0) <= 1e-4);
  double sup = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    sup = std::max(sup, std::abs(eu.theta[i] - pi / 2.0 * std::sin(2.0 * u.positions()[i] / pi)));
  CHECK(sup <= 1e-3);

  auto s = discretize(SechSquaredStationary{}, 2000);
  auto es = leading_eigenpair(s);
  CHECK(std::abs(es.lambda - 1.0) <= 1e-4);
  sup = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    sup = std::max(sup, std::abs(es.theta[i] - 2.0 * std::tanh(s.positions()[i] / 2.0)));
  CHECK(sup <= 1e-3);
  // theta(inf) = 2 for the stationary law
  CHECK(std::abs(es.theta_at_infinity - 2.0) <= 1e-3);

  std::vector<double> q{0.5, 3.0, 50.0};
  const auto tq = theta_at(s, es, q);
  CHECK(std::abs(tq[0] - 2.0 * std::tanh(0.25)) <= 1e-3);
  CHECK(std::abs(tq[2] - 2.0) <= 1e-3);
}

TEST_CASE("warm start converges to the same pair") {
  auto s = discretize(SechSquaredStationary{}, 500);
  auto cold = leading_eigenpair(s);
  EigenOptions opts;
  opts.warm_start = cold.theta;
  auto warm = leading_eigenpair(s, opts);
  CHECK(warm.iterations < cold.iterations);
  CHECK(std::abs(warm.lambda - cold.lambda) <= 1e-12);
}

TEST_CASE("grid convergence for the uniform family") {
  for (double c : {1.0, pi * pi / 4.0, 4.0}) {
    for (int n : {250, 500, 1000, 2000}) {
      const double err = std::abs(leading_eigenpair(discretize(Uniform{c}, n)).lambda - 4.0 * c / (pi * pi));
      CHECK(err <= 1.0 / n);
    }
  }
}

TEST_CASE("classify") {
  CHECK(classify(DiscreteMeasure::dirac(0.9)).tag == Criticality::Subcritical);
  CHECK(classify(DiscreteMeasure::dirac(1.1)).tag == Criticality::Supercritical);
  CHECK(classify(DiscreteMeasure::dirac(1.0)).tag == Criticality::Critical);
  const auto u = classify(discretize(Uniform{pi * pi / 4.0}, 2000));
  CHECK(u.tag == Criticality::Critical);
  CHECK(u.band == 5e-3);
  CHECK(classify(discretize(SechSquaredStationary{}, 2000)).tag == Criticality::Critical);

  auto half = classify(discretize(Uniform{1.0}, 100));
  CHECK(half.tag == Criticality::Subcritical);
  CHECK(half.certificate == "mean<1");
  auto two = classify(DiscreteMeasure({0.1, 3.0}, {0.5, 0.5}));
  CHECK(two.tag == Criticality::Supercritical);
  CHECK(two.certificate == "tail>1/x");

  // A deliberately wrong eigenvalue contradicts the mean certificate.
  EigenPair fake;
  fake.lambda = 1.2;
  CHECK_THROWS_AS(classify(DiscreteMeasure::dirac(0.5), fake), NumericalFailure);
}

TEST_CASE("phi from theta") {
  auto d = DiscreteMeasure::dirac(1.0);
  CHECK(phi_from_theta(d, leading_eigenpair(d).theta) == doctest::Approx(1.0));
  auto s = discretize(SechSquaredStationary{}, 2000);
  CHECK(std::abs(phi_from_theta(s, leading_eigenpair(s).theta) - 0.5) <= 1e-3);
  auto u = discretize(Uniform{pi * pi / 4.0}, 2000);
  CHECK(std::abs(phi_from_theta(u, leading_eigenpair(u).theta) - 0.607927101854026628663) <= 1e-3);
  std::vector<double> zero{0.0};
  CHECK_THROWS_AS(phi_from_theta(d, zero), InvalidArgument);
}
