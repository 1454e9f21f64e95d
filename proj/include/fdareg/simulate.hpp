#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/model.hpp"

namespace fdareg {

// Exponential-family warp on [-3, 3]: identity at a = 0, increasingly
// convex/concave as |a| grows; both endpoints fixed.
double kr_warp(double a, double t);
// Closed-form inverse on the same interval.
double kr_warp_inverse(double a, double s);

// Two Gaussian bumps used as ground-truth factors, parameterized by their
// centre/width as fractions of the grid span.
struct FactorSpec {
  double center1_frac = 0.40;
  double width1_frac = 0.15;
  double center2_frac = 0.75;
  double width2_frac = 0.10;

  double f1(double t, const TimeGrid& grid) const;
  double f2(double t, const TimeGrid& grid) const;
};

struct SimDataset {
  Dataset data;                        // observed (warped) curves
  Eigen::MatrixXd true_registered;     // p x N
  std::vector<Warp> true_warps;        // unwarping maps: observed o warp ~ registered
  Eigen::VectorXd warp_param;          // a_i driving each warp
  Eigen::MatrixXd true_factors;        // p x 2 (bump designs; set 2)
  Eigen::VectorXd c1, c2;              // per-function weights (set 1)
  Eigen::VectorXd z1, z2;              // per-function weights (set 2)
  std::vector<int> group_labels;       // sign groups (set 2)
  int set = 0;
  std::uint64_t seed = 0;
};

// Weighted bimodal curves r_i = c1*bump1 + c2*bump2 observed through a
// deterministic spread of warps (one of them exactly the identity when the
// warp parameters straddle zero).
SimDataset simulate_set1(int n_functions, int p, std::uint64_t seed);

// Two-factor curves r_i = z1*f1 + z2*f2 with balanced z2 signs and random
// warps; the sign of z2 is the ground-truth grouping.
SimDataset simulate_set2(int n_functions, int p, std::uint64_t seed,
                         const FactorSpec& spec = {});

}  // namespace fdareg
