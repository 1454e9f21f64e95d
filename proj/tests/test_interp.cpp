#include <doctest.h>

#include <cmath>
#include <random>

#include "fdareg/interp.hpp"

using namespace fdareg;

namespace {

Eigen::VectorXd linspace(double a, double b, int n) {
  return Eigen::VectorXd::LinSpaced(n, a, b);
}

}  // namespace

TEST_CASE("knot values reproduce bitwise") {
  const Eigen::VectorXd x = linspace(0.0, 5.0, 11);
  Eigen::VectorXd y(11);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 11; ++k) y(k) = nd(rng);

  for (const auto kind : {Interpolant::Kind::monotone_cubic, Interpolant::Kind::linear}) {
    const Interpolant f(x, y, kind);
    for (int k = 0; k < 11; ++k) {
      CHECK(f.value(x(k)) == y(k));  // exact, not approximate
    }
  }
}

TEST_CASE("linear rule interpolates linearly") {
  const Eigen::VectorXd x = linspace(0.0, 2.0, 5);
  Eigen::VectorXd y(5);
  y << 1.0, 3.0, 2.0, 2.0, 5.0;
  const Interpolant f(x, y, Interpolant::Kind::linear);
  CHECK(f.value(0.25) == doctest::Approx(2.0));
  CHECK(f.value(0.75) == doctest::Approx(2.5));
  CHECK(f.derivative(0.1) == doctest::Approx(4.0));
  CHECK(f.derivative(1.2) == doctest::Approx(0.0));
}

TEST_CASE("monotone data stays monotone") {
  const Eigen::VectorXd x = linspace(0.0, 1.0, 9);
  Eigen::VectorXd y(9);
  y << 0.0, 0.05, 0.06, 0.5, 2.0, 2.01, 2.02, 3.0, 4.0;  // uneven monotone rise
  const Interpolant f(x, y, Interpolant::Kind::monotone_cubic);
  double prev = f.value(0.0);
  for (int k = 1; k <= 500; ++k) {
    const double v = f.value(k / 500.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("lines are reproduced exactly") {
  const Eigen::VectorXd x = linspace(-2.0, 2.0, 7);
  const Eigen::VectorXd y = 2.0 * x.array() + 1.0;
  const Interpolant f(x, y, Interpolant::Kind::monotone_cubic);
  for (double t = -2.0; t <= 2.0; t += 0.17) {
    CHECK(f.value(t) == doctest::Approx(2.0 * t + 1.0).epsilon(1e-13));
    CHECK(f.derivative(t) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("cubic derivative matches finite differences") {
  const Eigen::VectorXd x = linspace(0.0, 3.0, 13);
  Eigen::VectorXd y(13);
  for (int k = 0; k < 13; ++k) y(k) = std::sin(1.3 * x(k)) + 0.2 * x(k);
  const Interpolant f(x, y, Interpolant::Kind::monotone_cubic);
  const double h = 1e-6;
  for (double t = 0.05; t < 3.0; t += 0.11) {
    const double fd = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
    CHECK(f.derivative(t) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("derivative is continuous across knots") {
  const Eigen::VectorXd x = linspace(0.0, 4.0, 9);
  Eigen::VectorXd y(9);
  y << 0.0, 0.8, 1.0, 2.5, 2.6, 3.9, 4.0, 5.2, 6.0;
  const Interpolant f(x, y, Interpolant::Kind::monotone_cubic);
  for (int k = 1; k + 1 < 9; ++k) {
    const double left = f.derivative(x(k) - 1e-9);
    const double right = f.derivative(x(k) + 1e-9);
    CHECK(left == doctest::Approx(right).epsilon(1e-6));
  }
}

TEST_CASE("invalid knot sequences are rejected") {
  Eigen::VectorXd x(3), y(3);
  x << 0.0, 1.0, 1.0;
  y << 0.0, 1.0, 2.0;
  CHECK_THROWS_AS(Interpolant(x, y, Interpolant::Kind::linear), std::invalid_argument);
  Eigen::VectorXd one(1), yone(1);
  one << 0.0;
  yone << 0.0;
  CHECK_THROWS_AS(Interpolant(one, yone, Interpolant::Kind::linear), std::invalid_argument);
}
