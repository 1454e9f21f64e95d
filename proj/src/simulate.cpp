#include "fdareg/simulate.hpp"

#include <cmath>
#include <stdexcept>

#include "fdareg/stats.hpp"

namespace fdareg {

double kr_warp(double a, double t) {
  if (t < -3.0 - 1e-9 || t > 3.0 + 1e-9) {
    throw std::invalid_argument("kr_warp: argument outside [-3, 3]");
  }
  if (a == 0.0) return t;
  // expm1 keeps the ratio accurate for small |a|; dividing the time first
  // makes the fraction exactly 1 at the right endpoint, so both ends are
  // preserved without rounding.  The ratio must be formed before the scale
  // factor, since 6 * x rounds while x / x is exactly one.
  return 6.0 * (std::expm1(a * ((t + 3.0) / 6.0)) / std::expm1(a)) - 3.0;
}

double kr_warp_inverse(double a, double s) {
  if (s < -3.0 - 1e-9 || s > 3.0 + 1e-9) {
    throw std::invalid_argument("kr_warp_inverse: argument outside [-3, 3]");
  }
  if (a == 0.0) return s;
  return 6.0 / a * std::log1p(((s + 3.0) / 6.0) * std::expm1(a)) - 3.0;
}

double FactorSpec::f1(double t, const TimeGrid& grid) const {
  const double c = grid.t_start() + center1_frac * grid.span();
  const double w = width1_frac * grid.span();
  const double u = (t - c) / w;
  return std::exp(-0.5 * u * u);
}

double FactorSpec::f2(double t, const TimeGrid& grid) const {
  const double c = grid.t_start() + center2_frac * grid.span();
  const double w = width2_frac * grid.span();
  const double u = (t - c) / w;
  return std::exp(-0.5 * u * u);
}

namespace {

double bump(double t, double center) {
  const double u = t - center;
  return std::exp(-0.5 * u * u);
}

}  // namespace

SimDataset simulate_set1(int n_functions, int p, std::uint64_t seed) {
  if (n_functions < 2) {
    throw std::invalid_argument("simulate_set1: need at least 2 functions");
  }
  SimDataset out;
  out.set = 1;
  out.seed = seed;
  out.data.grid = TimeGrid::uniform(-3.0, 3.0, p);
  const TimeGrid& grid = out.data.grid;

  Rng rng(seed);
  out.c1.resize(n_functions);
  out.c2.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    out.c1(i) = rng.normal(1.0, 0.25);
    out.c2(i) = rng.normal(1.0, 0.25);
  }
  // Warp strengths straddle zero symmetrically; with an odd count the middle
  // function is observed in registered time exactly.
  out.warp_param.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    out.warp_param(i) = n_functions == 1
                            ? 0.0
                            : -1.0 + 2.0 * i / static_cast<double>(n_functions - 1);
  }

  out.true_factors.resize(p, 2);
  for (int j = 0; j < p; ++j) {
    out.true_factors(j, 0) = bump(grid.points(j), -1.5);
    out.true_factors(j, 1) = bump(grid.points(j), 1.5);
  }

  out.data.values.resize(p, n_functions);
  out.true_registered.resize(p, n_functions);
  out.true_warps.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    const double a = out.warp_param(i);
    Eigen::VectorXd w(p);
    for (int j = 0; j < p; ++j) {
      const double t = grid.points(j);
      out.true_registered(j, i) = out.c1(i) * bump(t, -1.5) + out.c2(i) * bump(t, 1.5);
      const double tw = kr_warp(a, t);
      out.data.values(j, i) = out.c1(i) * bump(tw, -1.5) + out.c2(i) * bump(tw, 1.5);
      w(j) = kr_warp_inverse(a, t);
    }
    out.true_warps[i] = Warp{w};
  }
  return out;
}

SimDataset simulate_set2(int n_functions, int p, std::uint64_t seed, const FactorSpec& spec) {
  if (n_functions < 2) {
    throw std::invalid_argument("simulate_set2: need at least 2 functions");
  }
  SimDataset out;
  out.set = 2;
  out.seed = seed;
  out.data.grid = TimeGrid::uniform(-3.0, 3.0, p);
  const TimeGrid& grid = out.data.grid;

  Rng rng(seed);
  out.z1.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) out.z1(i) = rng.normal(1.0, 0.1);
  // Balanced sign groups: first half positive, second half negative.
  out.z2.resize(n_functions);
  out.group_labels.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    const double mag = std::abs(rng.normal(0.5, 0.1));
    const bool positive = i < (n_functions + 1) / 2;
    out.z2(i) = positive ? mag : -mag;
    out.group_labels[i] = positive ? 1 : 2;
  }
  out.warp_param.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    out.warp_param(i) = 2.0 * rng.uniform() - 1.0;
  }

  out.true_factors.resize(p, 2);
  for (int j = 0; j < p; ++j) {
    out.true_factors(j, 0) = spec.f1(grid.points(j), grid);
    out.true_factors(j, 1) = spec.f2(grid.points(j), grid);
  }

  out.data.values.resize(p, n_functions);
  out.true_registered.resize(p, n_functions);
  out.true_warps.resize(n_functions);
  for (int i = 0; i < n_functions; ++i) {
    const double a = out.warp_param(i);
    Eigen::VectorXd w(p);
    for (int j = 0; j < p; ++j) {
      const double t = grid.points(j);
      out.true_registered(j, i) =
          out.z1(i) * spec.f1(t, grid) + out.z2(i) * spec.f2(t, grid);
      const double tw = kr_warp(a, t);
      out.data.values(j, i) =
          out.z1(i) * spec.f1(tw, grid) + out.z2(i) * spec.f2(tw, grid);
      w(j) = kr_warp_inverse(a, t);
    }
    out.true_warps[i] = Warp{w};
  }
  return out;
}

}  // namespace fdareg
