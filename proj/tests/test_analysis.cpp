#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fdareg/analysis.hpp"
#include "fdareg/grid.hpp"

using namespace fdareg;

namespace {

Eigen::MatrixXd shifted_copies(const Eigen::VectorXd& base, const std::vector<double>& shifts) {
  Eigen::MatrixXd out(base.size(), static_cast<int>(shifts.size()));
  for (int i = 0; i < out.cols(); ++i) out.col(i) = base.array() + shifts[i];
  return out;
}

}  // namespace

TEST_CASE("derivative-spread ratio is one for identical shapes") {
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 31);
  Eigen::VectorXd base(31);
  for (int j = 0; j < 31; ++j) base(j) = std::sin(grid.points(j));
  // Amplitude differences give the sample a real derivative spread; vertical
  // shifts on top cancel in the differences up to rounding, so the ratio
  // stays 1 far beyond the tolerance.
  Eigen::MatrixXd before(31, 4);
  before.col(0) = 1.5 * base;
  before.col(1) = 0.5 * base;
  before.col(2) = -base;
  before.col(3) = 0.8 * base;
  CHECK(sls(before, before, grid) == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd after = before;
  const double shifts[4] = {3.0, -1.0, 0.25, 0.0};
  for (int i = 0; i < 4; ++i) after.col(i).array() += shifts[i];
  CHECK(sls(before, after, grid) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("halving derivative spread quarters the ratio") {
  // Amplitudes (1±a): derivative cross-sectional variance is a^2 * ds^2 at
  // every t, so shrinking a by half scales the ratio by exactly 1/4.
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 41);
  Eigen::VectorXd shape(41);
  for (int j = 0; j < 41; ++j) shape(j) = std::cos(0.7 * grid.points(j));
  Eigen::MatrixXd before(41, 2), after(41, 2);
  before.col(0) = 1.4 * shape;
  before.col(1) = 0.6 * shape;
  after.col(0) = 1.2 * shape;
  after.col(1) = 0.8 * shape;
  CHECK(sls(before, after, grid) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("perfect registration gives ratio zero") {
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 25);
  Eigen::VectorXd shape(25);
  for (int j = 0; j < 25; ++j) shape(j) = std::tanh(grid.points(j));
  Eigen::MatrixXd before(25, 3);
  before.col(0) = 2.0 * shape;
  before.col(1) = shape;
  before.col(2) = 0.5 * shape;
  const Eigen::MatrixXd after = shifted_copies(shape, {0.0, 5.0, -5.0});
  CHECK(sls(before, after, grid) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("degenerate baseline is rejected") {
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 11);
  Eigen::VectorXd line = grid.points;
  const Eigen::MatrixXd before = shifted_copies(line, {0.0, 1.0, 2.0});  // same slope
  const Eigen::MatrixXd after = shifted_copies(line, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(sls(before, after, grid), degenerate_sample_error);
}

TEST_CASE("grouped ratio is the sum of per-group ratios") {
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 31);
  Eigen::VectorXd s1(31), s2(31);
  for (int j = 0; j < 31; ++j) {
    s1(j) = std::sin(grid.points(j));
    s2(j) = std::cos(1.3 * grid.points(j));
  }
  Eigen::MatrixXd before(31, 4), after(31, 4);
  before.col(0) = 1.5 * s1;
  before.col(1) = 0.5 * s1;
  before.col(2) = 2.0 * s2;
  before.col(3) = 1.0 * s2;
  after.col(0) = 1.25 * s1;
  after.col(1) = 0.75 * s1;
  after.col(2) = 1.8 * s2;
  after.col(3) = 1.2 * s2;
  const std::vector<int> groups{1, 1, 2, 2};

  // Per-group ratios come out as expected individually.
  CHECK(sls(before.leftCols(2), after.leftCols(2), grid) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sls(before.rightCols(2), after.rightCols(2), grid) ==
        doctest::Approx(0.36).epsilon(1e-12));

  // The combined value adds the per-group ratios, so the extra alignment a
  // group achieves is never diluted by the other group's scale.
  const double got = sls_grouped(before, after, grid, groups);
  CHECK(got == doctest::Approx(0.25 + 0.36).epsilon(1e-12));
}

TEST_CASE("groups of size one are skipped and reported") {
  const TimeGrid grid = TimeGrid::uniform(-3.0, 3.0, 21);
  Eigen::VectorXd s(21);
  for (int j = 0; j < 21; ++j) s(j) = std::sin(grid.points(j));
  Eigen::MatrixXd before(21, 3), after(21, 3);
  before.col(0) = 1.5 * s;
  before.col(1) = 0.5 * s;
  before.col(2) = 10.0 * s;  // singleton group, extreme values must not leak in
  after = before;
  after.col(0) = 1.25 * s;
  after.col(1) = 0.75 * s;

  std::vector<int> skipped;
  const double got = sls_grouped(before, after, grid, {1, 1, 7}, &skipped);
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0] == 7);
  CHECK(got == doctest::Approx(0.25).epsilon(1e-12));

  // All groups singletons: nothing left to compare.
  CHECK_THROWS_AS(sls_grouped(before, after, grid, {1, 2, 3}), degenerate_sample_error);
}

TEST_CASE("quadrant grouping with both weights centred") {
  // Centred weights (1,-1) and (-1,1) per axis: first sits in quadrant one,
  // second in quadrant three (counter-clockwise labels from the upper right).
  Eigen::VectorXd z1(2), z2(2);
  z1 << 2.0, 0.0;  // centred: +1, -1
  z2 << 1.0, -1.0;  // centred: +1, -1
  const std::vector<int> g = group_by_weights(z1, z2, GroupMode::quadrant_centered_both);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == 1);
  CHECK(g[1] == 3);
}

TEST_CASE("quadrant grouping can centre only the first axis") {
  Eigen::VectorXd z1(2), z2(2);
  z1 << 2.0, 0.0;   // centred: +1, -1
  z2 << 0.5, -0.5;  // used raw
  std::vector<int> g = group_by_weights(z1, z2, GroupMode::quadrant_centered_z1_only);
  CHECK(g[0] == 1);
  CHECK(g[1] == 3);
  // Shift z2 so both are positive raw but would straddle zero if centred.
  z2 << 1.5, 0.5;
  g = group_by_weights(z1, z2, GroupMode::quadrant_centered_z1_only);
  CHECK(g[0] == 1);
  CHECK(g[1] == 2);  // raw z2 positive, centred z1 negative
}

TEST_CASE("quadrant boundaries fall to the lower-indexed group") {
  Eigen::VectorXd z1(5), z2(5);
  // After centring on these values the coordinates land exactly on axes.
  z1 << 1.0, -1.0, 0.0, 0.0, 0.0;
  z2 << 0.0, 0.0, 1.0, -1.0, 0.0;
  // Means are zero already, so centring is a no-op.
  const std::vector<int> g = group_by_weights(z1, z2, GroupMode::quadrant_centered_both);
  CHECK(g[0] == 1);  // positive x-axis: quadrants 1/4 adjoin, take 1
  CHECK(g[1] == 2);  // negative x-axis: quadrants 2/3 adjoin, take 2
  CHECK(g[2] == 1);  // positive y-axis: quadrants 1/2 adjoin, take 1
  CHECK(g[3] == 3);  // negative y-axis: quadrants 3/4 adjoin, take 3
  CHECK(g[4] == 1);  // origin
}

TEST_CASE("three-way split of the second weight") {
  Eigen::VectorXd z1 = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd z2(3);
  z2 << 0.0, -0.5, 0.5;
  const std::vector<int> g =
      group_by_weights(z1, z2, GroupMode::z2_threshold, -0.1, 0.1);
  CHECK(g[0] == 2);  // middle band
  CHECK(g[1] == 1);  // low band
  CHECK(g[2] == 3);  // high band

  // Values exactly on a threshold join the lower-indexed band.
  Eigen::VectorXd edge(2);
  edge << -0.1, 0.1;
  const std::vector<int> ge =
      group_by_weights(z1.head(2), edge, GroupMode::z2_threshold, -0.1, 0.1);
  CHECK(ge[0] == 1);
  CHECK(ge[1] == 2);

  CHECK_THROWS_AS(group_by_weights(z1, z2, GroupMode::z2_threshold, 0.2, -0.2),
                  std::invalid_argument);
}

TEST_CASE("grouping is invariant to positive rescaling") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXd z1(12), z2(12);
  for (int i = 0; i < 12; ++i) {
    z1(i) = 1.0 + nd(rng);
    z2(i) = nd(rng);
  }
  for (const GroupMode mode :
       {GroupMode::quadrant_centered_both, GroupMode::quadrant_centered_z1_only}) {
    const std::vector<int> g = group_by_weights(z1, z2, mode);
    const std::vector<int> gs = group_by_weights(3.7 * z1, 0.2 * z2, mode);
    CHECK(g == gs);
  }
}

TEST_CASE("factor recovery is exact for relabelled factors") {
  const int p = 17;
  Eigen::MatrixXd truth(p, 2);
  for (int j = 0; j < p; ++j) {
    const double t = -3.0 + 6.0 * j / (p - 1);
    truth(j, 0) = std::exp(-(t + 1.0) * (t + 1.0));
    truth(j, 1) = std::exp(-(t - 1.0) * (t - 1.0)) - 0.4 * truth(j, 0);
  }
  // Same column span: swapped, negated, rescaled, and mixed copies all score 1.
  Eigen::MatrixXd est(p, 2);
  est.col(0) = -2.0 * truth.col(1) + 0.3 * truth.col(0);
  est.col(1) = 0.5 * truth.col(0);
  const Eigen::Vector2d score = factor_recovery_score(est, truth);
  CHECK(score(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(score(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("factor recovery under a known rotation of one direction") {
  // First estimated direction equals a truth direction (correlation one);
  // the second is rotated by 0.3 radians inside a fixed orthonormal frame,
  // giving a second canonical correlation of cos(0.3).
  const int p = 40;
  Eigen::MatrixXd frame(p, 3);
  for (int j = 0; j < p; ++j) {
    const double t = 2.0 * M_PI * j / p;
    frame(j, 0) = std::sqrt(2.0 / p) * std::cos(t);
    frame(j, 1) = std::sqrt(2.0 / p) * std::sin(t);
    frame(j, 2) = std::sqrt(2.0 / p) * std::cos(2.0 * t);
  }
  // Columns of `frame` are orthonormal for this node count.
  Eigen::MatrixXd truth(p, 2), est(p, 2);
  truth.col(0) = frame.col(0);
  truth.col(1) = frame.col(1);
  est.col(0) = frame.col(0);
  est.col(1) = std::cos(0.3) * frame.col(1) + std::sin(0.3) * frame.col(2);
  const Eigen::Vector2d score = factor_recovery_score(est, truth);
  CHECK(score(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(score(1) == doctest::Approx(0.955336489125606).epsilon(1e-10));
}

TEST_CASE("factor recovery survives small perturbations") {
  const int p = 30;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd truth(p, 2);
  for (int j = 0; j < p; ++j) {
    const double t = -3.0 + 6.0 * j / (p - 1);
    truth(j, 0) = std::sin(t);
    truth(j, 1) = std::cos(2.0 * t);
  }
  Eigen::MatrixXd est = truth;
  for (int j = 0; j < p; ++j) {
    est(j, 0) += 1e-3 * nd(rng);
    est(j, 1) += 1e-3 * nd(rng);
  }
  const Eigen::Vector2d score = factor_recovery_score(est, truth);
  CHECK(score(0) > 0.99);
  CHECK(score(1) > 0.99);
}

TEST_CASE("rank-deficient estimates are flagged") {
  const int p = 15;
  Eigen::MatrixXd truth(p, 2);
  for (int j = 0; j < p; ++j) {
    truth(j, 0) = std::sin(0.4 * j);
    truth(j, 1) = std::cos(0.4 * j);
  }
  Eigen::MatrixXd est(p, 2);
  est.col(0) = truth.col(0);
  est.col(1) = 2.0 * truth.col(0);  // collapsed span
  bool deficient = false;
  const Eigen::Vector2d score = factor_recovery_score(est, truth, &deficient);
  CHECK(deficient);
  CHECK(score(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(score(1) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("monotone trend detection") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;

  std::vector<double> rising(60), flat(60);
  for (int i = 0; i < 60; ++i) {
    rising[i] = 0.1 * i + 0.2 * nd(rng);
    flat[i] = nd(rng);
  }
  const TrendTest up = mann_kendall_trend(rising);
  CHECK(up.z > 0.0);
  CHECK(up.significant_5pct);

  const TrendTest none = mann_kendall_trend(flat);
  CHECK_FALSE(none.significant_5pct);

  std::vector<double> falling(60);
  for (int i = 0; i < 60; ++i) falling[i] = -0.1 * i + 0.2 * nd(rng);
  CHECK(mann_kendall_trend(falling).z < 0.0);
  CHECK(mann_kendall_trend(falling).significant_5pct);

  CHECK_THROWS_AS(mann_kendall_trend(std::vector<double>(5, 1.0)), std::invalid_argument);
}

TEST_CASE("trend variance correction discounts autocorrelated drift") {
  // A strongly autocorrelated but trendless series: the corrected variance
  // ratio should exceed one, widening the null band.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  std::vector<double> ar(200);
  double x = 0.0;
  for (int i = 0; i < 200; ++i) {
    x = 0.95 * x + 0.1 * nd(rng);
    ar[i] = x;
  }
  const TrendTest t = mann_kendall_trend(ar);
  CHECK(t.var_ratio > 1.0);
}
