#include "fdareg/interp.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fdareg {

namespace {

// Shape-preserving endpoint slope: one-sided three-point estimate with the
// Fritsch-Carlson clamp (zero when the end secants disagree in sign, capped
// at three times the boundary secant).
double endpoint_slope(double h0, double h1, double d0, double d1) {
  double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (m * d0 <= 0.0) {
    m = 0.0;
  } else if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0)) {
    m = 3.0 * d0;
  }
  return m;
}

}  // namespace

Eigen::VectorXd monotone_slopes(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd h(n - 1), d(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    h(k) = x(k + 1) - x(k);
    d(k) = (y(k + 1) - y(k)) / h(k);
  }
  Eigen::VectorXd m(n);
  m(0) = (n == 2) ? d(0) : endpoint_slope(h(0), h(1), d(0), d(1));
  m(n - 1) = (n == 2) ? d(n - 2)
                      : endpoint_slope(h(n - 2), h(n - 3), d(n - 2), d(n - 3));
  for (int k = 1; k + 1 < n; ++k) {
    if (d(k - 1) == 0.0 || d(k) == 0.0 || d(k - 1) * d(k) < 0.0) {
      m(k) = 0.0;
    } else {
      // Weighted harmonic mean of the neighbouring secants.
      const double w1 = 2.0 * h(k) + h(k - 1);
      const double w2 = h(k) + 2.0 * h(k - 1);
      m(k) = (w1 + w2) / (w1 / d(k - 1) + w2 / d(k));
    }
  }
  return m;
}

Interpolant::Interpolant(Eigen::VectorXd x, Eigen::VectorXd y, Kind kind)
    : x_(std::move(x)), y_(std::move(y)), kind_(kind) {
  const int n = static_cast<int>(x_.size());
  if (n < 2 || y_.size() != x_.size()) {
    throw std::invalid_argument("Interpolant: need >= 2 knots and matching values");
  }
  for (int k = 0; k + 1 < n; ++k) {
    if (!(x_(k + 1) > x_(k))) {
      throw std::invalid_argument("Interpolant: knots must strictly increase");
    }
  }
  if (kind_ == Kind::monotone_cubic) {
    m_ = monotone_slopes(x_, y_);
  }
}

int Interpolant::find_interval(double t) const {
  const int n = static_cast<int>(x_.size());
  if (t <= x_(0)) return 0;
  if (t >= x_(n - 2)) return n - 2;
  // Largest k with x_(k) <= t.
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (x_(mid) <= t) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double Interpolant::value(double t) const {
  const int k = find_interval(t);
  if (t == x_(k)) return y_(k);          // exact knot hit reproduces the sample
  if (t == x_(k + 1)) return y_(k + 1);
  const double h = x_(k + 1) - x_(k);
  if (kind_ == Kind::linear) {
    const double s = (t - x_(k)) / h;
    return y_(k) + s * (y_(k + 1) - y_(k));
  }
  const double s = (t - x_(k)) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  return h00 * y_(k) + h10 * h * m_(k) + h01 * y_(k + 1) + h11 * h * m_(k + 1);
}

double Interpolant::derivative(double t) const {
  const int k = find_interval(t);
  const double h = x_(k + 1) - x_(k);
  if (kind_ == Kind::linear) {
    return (y_(k + 1) - y_(k)) / h;
  }
  const double s = (t - x_(k)) / h;
  const double s2 = s * s;
  const double d00 = (6.0 * s2 - 6.0 * s) / h;
  const double d10 = 3.0 * s2 - 4.0 * s + 1.0;
  const double d01 = (-6.0 * s2 + 6.0 * s) / h;
  const double d11 = 3.0 * s2 - 2.0 * s;
  return d00 * y_(k) + d10 * m_(k) + d01 * y_(k + 1) + d11 * m_(k + 1);
}

}  // namespace fdareg
