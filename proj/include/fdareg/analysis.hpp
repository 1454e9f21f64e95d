#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/grid.hpp"

namespace fdareg {

// Raised when a criterion is undefined for the sample (e.g. no
// cross-sectional derivative variance to normalize by).
struct degenerate_sample_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Alignment criterion: ratio of integrated cross-sectional variance of the
// first derivatives, registered over original.  Derivatives by centred
// differences (one-sided at the ends), integration by the trapezoid rule.
// Identical inputs give exactly 1; values well below 1 mean the registered
// curves share their shape.
double sls(const Eigen::MatrixXd& original, const Eigen::MatrixXd& registered,
           const TimeGrid& grid);

// Sum of per-group sls values over a label partition.  Groups with fewer
// than two members are skipped (their criterion is undefined); the skipped
// labels are reported through `skipped` when provided.
double sls_grouped(const Eigen::MatrixXd& original, const Eigen::MatrixXd& registered,
                   const TimeGrid& grid, const std::vector<int>& labels,
                   std::vector<int>* skipped = nullptr);

enum class GroupMode {
  quadrant_centered_both,     // z1 and z2 centred at their means
  quadrant_centered_z1_only,  // z1 centred, z2 raw sign
  z2_threshold,               // low/middle/high on z2 alone
};

// Partitions functions by their weight estimates.  Quadrant modes label
// 1..4 counter-clockwise from (+,+); threshold mode labels 1 (low), 2
// (middle), 3 (high).  Boundary points take the smallest consistent label.
std::vector<int> group_by_weights(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2,
                                  GroupMode mode, double z2_low = 0.0, double z2_high = 0.0);

// Principal angles between the spans of two p x 2 factor matrices: the two
// canonical correlations, descending.  A rank-deficient estimate zeroes the
// second correlation and sets *rank_deficient.
Eigen::Vector2d factor_recovery_score(const Eigen::MatrixXd& estimated,
                                      const Eigen::MatrixXd& truth,
                                      bool* rank_deficient = nullptr);

// Mann-Kendall trend Z statistic with the rank-autocorrelation variance
// correction, suitable for serially dependent sequences.  |z| > 1.96 flags
// a monotone trend at the 5% level.
struct TrendTest {
  double z = 0.0;
  double var_ratio = 1.0;  // variance inflation applied for autocorrelation
  bool significant_5pct = false;
};

TrendTest mann_kendall_trend(const std::vector<double>& series);

}  // namespace fdareg
