#pragma once

#include <Eigen/Dense>

namespace fdareg {

// One-dimensional interpolant over strictly increasing knots.  The
// monotone cubic rule (Fritsch-Carlson slopes, C^1) never overshoots
// monotone data; the linear rule is the cheap fallback.  Both reproduce
// knot values bitwise; evaluation outside the knot range extends the
// boundary-interval polynomial.
class Interpolant {
 public:
  enum class Kind { monotone_cubic, linear };

  Interpolant(Eigen::VectorXd x, Eigen::VectorXd y, Kind kind);

  double value(double t) const;
  double derivative(double t) const;

  Kind kind() const { return kind_; }

 private:
  int find_interval(double t) const;

  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd m_;  // knot slopes (cubic rule only)
  Kind kind_;
};

// Fritsch-Carlson knot slopes for monotone cubic interpolation.
Eigen::VectorXd monotone_slopes(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace fdareg
