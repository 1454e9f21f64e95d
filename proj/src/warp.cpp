#include "fdareg/warp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fdareg {

namespace {

void check_bound(const Eigen::VectorXd& w, const char* where) {
  for (int k = 0; k < w.size(); ++k) {
    if (!std::isfinite(w(k)) || std::abs(w(k)) > base_function_bound) {
      throw std::domain_error(std::string(where) + ": base function value " +
                              std::to_string(w(k)) + " outside [-30, 30] at index " +
                              std::to_string(k));
    }
  }
}

}  // namespace

double canonical_shift(const Eigen::VectorXd& w) {
  if (w.size() == 0) {
    throw std::invalid_argument("canonical_shift: base function is empty");
  }
  check_bound(w, "canonical_shift");
  // log-sum-exp guarded against overflow for |w| near the bound.
  const double wmax = w.maxCoeff();
  double acc = 0.0;
  for (int k = 0; k < w.size(); ++k) acc += std::exp(w(k) - wmax);
  return wmax + std::log(acc / static_cast<double>(w.size()));
}

double canonical_shift(const Eigen::VectorXd& w, const TimeGrid& grid) {
  if (w.size() != grid.size() - 1) {
    throw std::invalid_argument("canonical_shift: base function needs p-1 values");
  }
  return canonical_shift(w);
}

Eigen::VectorXd canonicalize(const Eigen::VectorXd& w) {
  const double c = canonical_shift(w);
  Eigen::VectorXd out = w.array() - c;
  check_bound(out, "canonicalize");
  return out;
}

Eigen::VectorXd canonicalize(const Eigen::VectorXd& w, const TimeGrid& grid) {
  if (w.size() != grid.size() - 1) {
    throw std::invalid_argument("canonicalize: base function needs p-1 values");
  }
  return canonicalize(w);
}

Warp warp_from_base(const BaseFunction& w, const TimeGrid& grid) {
  const Eigen::VectorXd wc = canonicalize(w.values, grid);
  if (wc.isZero(0.0)) {
    return Warp::identity(grid);  // canonical zero base is the identity, exactly
  }
  const int p = grid.size();
  Warp h;
  h.values.resize(p);
  h.values(0) = grid.t_start();
  double acc = grid.t_start();
  for (int k = 0; k < p - 1; ++k) {
    acc += grid.dt * std::exp(wc(k));
    h.values(k + 1) = acc;
  }
  return h;
}

BaseFunction base_from_warp(const Warp& h, const TimeGrid& grid) {
  const int p = grid.size();
  if (h.values.size() != p) {
    throw std::invalid_argument("base_from_warp: warp size mismatch");
  }
  BaseFunction w;
  w.values.resize(p - 1);
  for (int k = 0; k < p - 1; ++k) {
    const double step = h.values(k + 1) - h.values(k);
    if (!(step > 0.0)) {
      throw std::invalid_argument("base_from_warp: warp must strictly increase");
    }
    w.values(k) = std::log(step / grid.dt);
  }
  check_bound(w.values, "base_from_warp");
  return w;
}

Eigen::VectorXd apply_warp(const Eigen::VectorXd& x, const Warp& h, const TimeGrid& grid,
                           Interpolant::Kind kind) {
  const int p = grid.size();
  if (x.size() != p || h.values.size() != p) {
    throw std::invalid_argument("apply_warp: size mismatch");
  }
  if (h.values == grid.points) {
    return x;  // identity warp: no interpolation, bitwise pass-through
  }
  Interpolant f(grid.points, x, kind);
  Eigen::VectorXd out(p);
  for (int j = 0; j < p; ++j) out(j) = f.value(h.values(j));
  return out;
}

Eigen::MatrixXd warp_all(const Eigen::MatrixXd& values, const std::vector<Warp>& warps,
                         const TimeGrid& grid, Interpolant::Kind kind) {
  if (static_cast<int>(warps.size()) != values.cols()) {
    throw std::invalid_argument("warp_all: one warp per column required");
  }
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (int i = 0; i < values.cols(); ++i) {
    out.col(i) = apply_warp(values.col(i), warps[i], grid, kind);
  }
  return out;
}

double log_base_prior(const BaseFunction& w, const PenaltySet& pen_reduced, double gamma_w,
                      double lambda_w) {
  if (w.values.size() != pen_reduced.size()) {
    throw std::invalid_argument("log_base_prior: base function and penalty sizes differ");
  }
  const Eigen::VectorXd wc = canonicalize(w.values);
  const FactorCov cov = base_prior_cov(pen_reduced, gamma_w, lambda_w);
  const int m = pen_reduced.size();
  const double quad = wc.dot(cov.prec * wc);
  return -0.5 * m * std::log(2.0 * M_PI) + 0.5 * cov.log_det_prec - 0.5 * quad;
}

namespace {

// Inverts a strictly increasing piecewise-linear warp at the grid points.
Eigen::VectorXd invert_linear(const Eigen::VectorXd& g, const TimeGrid& grid) {
  const int p = grid.size();
  Eigen::VectorXd s(p);
  s(0) = grid.t_start();
  s(p - 1) = grid.t_end();
  int k = 0;
  for (int j = 1; j + 1 < p; ++j) {
    const double target = grid.points(j);
    while (k + 2 < p && g(k + 1) < target) ++k;
    s(j) = grid.points(k) + grid.dt * (target - g(k)) / (g(k + 1) - g(k));
  }
  return s;
}

}  // namespace

Warp mean_warp_center(std::vector<Warp>& warps, std::vector<BaseFunction>& bases,
                      const TimeGrid& grid) {
  const int p = grid.size();
  const int n = static_cast<int>(warps.size());
  if (n == 0 || bases.size() != warps.size()) {
    throw std::invalid_argument("mean_warp_center: need matching warps and bases");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  for (const Warp& h : warps) g += h.values;
  g /= static_cast<double>(n);

  // Adjusted warps h_i(g^-1(t)) via linear interpolation on both sides; the
  // linear rule commutes with averaging, so the adjusted mean is identity.
  Warp g_inv{invert_linear(g, grid)};
  for (int i = 0; i < n; ++i) {
    Interpolant hi(grid.points, warps[i].values, Interpolant::Kind::linear);
    Eigen::VectorXd adj(p);
    for (int j = 0; j < p; ++j) adj(j) = hi.value(g_inv.values(j));
    adj(0) = grid.t_start();
    adj(p - 1) = grid.t_end();
    warps[i].values = adj;
    bases[i] = base_from_warp(warps[i], grid);
  }
  return g_inv;
}

}  // namespace fdareg
