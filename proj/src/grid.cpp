#include "fdareg/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fdareg {

TimeGrid TimeGrid::uniform(double t_start, double t_end, int p) {
  if (p < 4) {
    throw std::invalid_argument("TimeGrid: need at least 4 points, got " + std::to_string(p));
  }
  if (!(t_end > t_start)) {
    throw std::invalid_argument("TimeGrid: t_end must exceed t_start");
  }
  TimeGrid g;
  g.points = Eigen::VectorXd::LinSpaced(p, t_start, t_end);
  g.dt = (t_end - t_start) / static_cast<double>(p - 1);
  return g;
}

TimeGrid TimeGrid::from_points(const Eigen::VectorXd& pts, double rel_tol) {
  const int p = static_cast<int>(pts.size());
  if (p < 4) {
    throw std::invalid_argument("TimeGrid: need at least 4 points, got " + std::to_string(p));
  }
  if (!(pts(p - 1) > pts(0))) {
    throw std::invalid_argument("TimeGrid: points must increase");
  }
  const double dt = (pts(p - 1) - pts(0)) / static_cast<double>(p - 1);
  for (int j = 0; j + 1 < p; ++j) {
    const double step = pts(j + 1) - pts(j);
    if (!(step > 0.0) || std::abs(step - dt) > rel_tol * std::max(1.0, std::abs(dt))) {
      throw std::invalid_argument("TimeGrid: points must be equally spaced (step " +
                                  std::to_string(step) + " at index " + std::to_string(j) +
                                  ", expected " + std::to_string(dt) + ")");
    }
  }
  TimeGrid g;
  g.points = pts;
  g.dt = dt;
  return g;
}

TimeGrid TimeGrid::truncated() const {
  TimeGrid g;
  g.points = points.head(points.size() - 1);
  g.dt = dt;
  return g;
}

namespace {

// Orthonormal basis of span{1, t}: the projector onto affine functions.
Eigen::MatrixXd affine_projector(const Eigen::VectorXd& t) {
  const int p = static_cast<int>(t.size());
  Eigen::VectorXd b1 = Eigen::VectorXd::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
  Eigen::VectorXd centered = t.array() - t.mean();
  Eigen::VectorXd b2 = centered / centered.norm();
  return b1 * b1.transpose() + b2 * b2.transpose();
}

}  // namespace

PenaltySet build_penalty_set(const TimeGrid& grid) {
  const int p = grid.size();
  PenaltySet pen;
  pen.grid = grid;

  // Second-difference operator, scaled so row sums of squares track curvature
  // per unit time: D has p-2 rows, D(j,:) = dt^-2 * (1, -2, 1) at offset j.
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(p - 2, p);
  const double s = 1.0 / (grid.dt * grid.dt);
  for (int j = 0; j < p - 2; ++j) {
    diff(j, j) = s;
    diff(j, j + 1) = -2.0 * s;
    diff(j, j + 2) = s;
  }
  pen.p2_pinv = diff.transpose() * diff;
  pen.p1 = affine_projector(grid.points);

  // Pseudo-inverse through the symmetric eigendecomposition; the two zero
  // eigenvalues correspond exactly to span{1, t}.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pen.p2_pinv);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("build_penalty_set: eigendecomposition failed");
  }
  const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
  const double cutoff = 1e-10 * evals(p - 1);
  int n_null = 0;
  for (int j = 0; j < p; ++j) {
    if (evals(j) <= cutoff) ++n_null;
  }
  if (n_null != 2) {
    throw std::runtime_error("build_penalty_set: curvature operator should have a 2-dim null space, found " +
                             std::to_string(n_null));
  }
  Eigen::VectorXd inv_evals = Eigen::VectorXd::Zero(p);
  pen.curvature_eigs.resize(p - 2);
  pen.log_det_curvature = 0.0;
  for (int j = 2; j < p; ++j) {
    inv_evals(j) = 1.0 / evals(j);
    pen.curvature_eigs(j - 2) = evals(j);
    pen.log_det_curvature += std::log(evals(j));
  }
  pen.p2 = es.eigenvectors() * inv_evals.asDiagonal() * es.eigenvectors().transpose();
  pen.p2 = 0.5 * (pen.p2 + pen.p2.transpose().eval());

  pen.sigma = pen.p1 + pen.p2;
  pen.sigma_inv = pen.p1 + pen.p2_pinv;
  return pen;
}

FactorCov sigma_f(const PenaltySet& pen, double eta, double lambda) {
  if (!(eta > 0.0) || !(lambda > 0.0)) {
    throw std::invalid_argument("sigma_f: weights must be positive");
  }
  FactorCov out;
  out.cov = pen.p1 / eta + pen.p2 / lambda;
  out.prec = eta * pen.p1 + lambda * pen.p2_pinv;
  out.log_det_prec = 2.0 * std::log(eta) +
                     static_cast<double>(pen.size() - 2) * std::log(lambda) +
                     pen.log_det_curvature;
  return out;
}

FactorCov base_prior_cov(const PenaltySet& pen_reduced, double gamma_w, double lambda_w) {
  if (!(gamma_w > 0.0) || !(lambda_w > 0.0)) {
    throw std::invalid_argument("base_prior_cov: weights must be positive");
  }
  // gamma_w^-1*(p1 + p2) + lambda_w^-1*p2 = gamma_w^-1*p1 + lambda_eff^-1*p2.
  const double lambda_eff = 1.0 / (1.0 / gamma_w + 1.0 / lambda_w);
  return sigma_f(pen_reduced, gamma_w, lambda_eff);
}

}  // namespace fdareg
