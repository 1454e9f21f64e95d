#pragma once

#include <Eigen/Dense>

namespace fdareg {

// Equally spaced observation grid shared by every curve in a dataset.
struct TimeGrid {
  Eigen::VectorXd points;
  double dt = 0.0;

  static TimeGrid uniform(double t_start, double t_end, int p);
  // Builds a grid from explicit points, validating count and equal spacing.
  static TimeGrid from_points(const Eigen::VectorXd& pts, double rel_tol = 1e-9);

  int size() const { return static_cast<int>(points.size()); }
  double t_start() const { return points(0); }
  double t_end() const { return points(points.size() - 1); }
  double span() const { return t_end() - t_start(); }
  // Grid over the first p-1 points; domain of the warp base functions.
  TimeGrid truncated() const;
};

// Roughness structure on a grid.  sigma = p1 + p2 where p1 projects onto the
// affine functions span{1, t} and p2 is the pseudo-inverse of the squared,
// step-normalized second-difference operator p2_pinv.  By construction the two
// pieces act on orthogonal complements, so sigma_inv = p1_pinv + p2_pinv with
// p1_pinv = p1.
struct PenaltySet {
  TimeGrid grid;
  Eigen::MatrixXd p1;        // projector onto span{1, t}; equals its pseudo-inverse
  Eigen::MatrixXd p2;        // pinv of p2_pinv
  Eigen::MatrixXd p2_pinv;   // dt^-2-scaled D'D, D the second-difference operator
  Eigen::MatrixXd sigma;     // p1 + p2
  Eigen::MatrixXd sigma_inv; // p1 + p2_pinv
  Eigen::VectorXd curvature_eigs;   // the p-2 positive eigenvalues of p2_pinv, ascending
  double log_det_curvature = 0.0;   // sum of log(curvature_eigs)

  int size() const { return grid.size(); }
};

PenaltySet build_penalty_set(const TimeGrid& grid);

// Covariance eta^-1*p1 + lambda^-1*p2 together with its exact precision
// eta*p1 + lambda*p2_pinv and the log-determinant of the precision.
struct FactorCov {
  Eigen::MatrixXd cov;
  Eigen::MatrixXd prec;
  double log_det_prec = 0.0;
};

FactorCov sigma_f(const PenaltySet& pen, double eta, double lambda);

// Prior covariance of a warp base function: gamma_w^-1*sigma + lambda_w^-1*p2
// on the truncated grid.  Splitting sigma = p1 + p2 reduces this to the
// sigma_f family with curvature weight (1/gamma_w + 1/lambda_w)^-1.
FactorCov base_prior_cov(const PenaltySet& pen_reduced, double gamma_w, double lambda_w);

}  // namespace fdareg
