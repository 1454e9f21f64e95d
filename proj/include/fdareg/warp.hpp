#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fdareg/grid.hpp"
#include "fdareg/interp.hpp"

namespace fdareg {

// Log-slope representation of a warp: values on the truncated grid
// (first p-1 points).  The warp built from it fixes both endpoints.
struct BaseFunction {
  Eigen::VectorXd values;
};

// Time warp sampled on the full grid: strictly increasing, endpoints fixed
// at t_start and t_end.
struct Warp {
  Eigen::VectorXd values;

  static Warp identity(const TimeGrid& grid) { return Warp{grid.points}; }
};

// Largest admissible |w| before exp() under/overflows the increments.
inline constexpr double base_function_bound = 30.0;

// Shift c with sum_k dt*exp(w_k - c) = t_end - t_start, i.e. the unique
// vertical translate of w whose warp hits the right endpoint.  Since the
// grid is uniform this reduces to log-mean-exp of the slope values, so only
// the values themselves are needed; the grid overload additionally checks
// that w holds one value per grid interval.
double canonical_shift(const Eigen::VectorXd& w);
double canonical_shift(const Eigen::VectorXd& w, const TimeGrid& grid);

Eigen::VectorXd canonicalize(const Eigen::VectorXd& w);
Eigen::VectorXd canonicalize(const Eigen::VectorXd& w, const TimeGrid& grid);

// h(t_1) = t_1, h(t_j) = t_1 + sum_{k<j} dt*exp(w_canonical_k).
Warp warp_from_base(const BaseFunction& w, const TimeGrid& grid);

// Recovers the canonical base function of a strictly increasing warp.
BaseFunction base_from_warp(const Warp& h, const TimeGrid& grid);

// Evaluates the curve x (sampled on grid) at the warped times h.  The
// identity warp returns x bitwise.
Eigen::VectorXd apply_warp(const Eigen::VectorXd& x, const Warp& h, const TimeGrid& grid,
                           Interpolant::Kind kind);

// Column-wise apply_warp over a dataset matrix (p x N).
Eigen::MatrixXd warp_all(const Eigen::MatrixXd& values, const std::vector<Warp>& warps,
                         const TimeGrid& grid, Interpolant::Kind kind);

// Log-density of the canonical base function under the endpoint-constrained
// smoothness prior with level weight gamma_w and curvature weight lambda_w,
// up to the constant induced by the endpoint constraint.
double log_base_prior(const BaseFunction& w, const PenaltySet& pen_reduced, double gamma_w,
                      double lambda_w);

// Removes the common drift from a family of warps: composes every warp with
// the inverse of the cross-sectional mean warp (piecewise linear), so the
// mean of the adjusted warps is the identity.  Returns the inverse-mean warp
// used for the adjustment so callers can re-express grid functions in the
// centred time scale.  warps and bases are rewritten in place.
Warp mean_warp_center(std::vector<Warp>& warps, std::vector<BaseFunction>& bases,
                      const TimeGrid& grid);

}  // namespace fdareg
