#include "fdareg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace fdareg {

namespace {

// Centred-difference first derivatives, one-sided at the ends (p x N).
Eigen::MatrixXd derivative_matrix(const Eigen::MatrixXd& x, double dt) {
  const int p = static_cast<int>(x.rows());
  Eigen::MatrixXd d(p, x.cols());
  d.row(0) = (x.row(1) - x.row(0)) / dt;
  d.row(p - 1) = (x.row(p - 1) - x.row(p - 2)) / dt;
  for (int j = 1; j + 1 < p; ++j) {
    d.row(j) = (x.row(j + 1) - x.row(j - 1)) / (2.0 * dt);
  }
  return d;
}

// Integrated cross-sectional variance of the derivative columns, plus the
// integrated mean square as the natural scale for detecting a variance that
// is pure rounding noise.
struct DerivSpread {
  double var_integral = 0.0;
  double ms_integral = 0.0;
};

DerivSpread derivative_spread(const Eigen::MatrixXd& x, const TimeGrid& grid) {
  const Eigen::MatrixXd d = derivative_matrix(x, grid.dt);
  const Eigen::VectorXd mean = d.rowwise().mean();
  const int p = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  Eigen::VectorXd var(p), ms(p);
  for (int j = 0; j < p; ++j) {
    double acc = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dev = d(j, i) - mean(j);
      acc += dev * dev;
      sq += d(j, i) * d(j, i);
    }
    var(j) = acc / static_cast<double>(n);
    ms(j) = sq / static_cast<double>(n);
  }
  DerivSpread out;
  for (int j = 0; j + 1 < p; ++j) {
    out.var_integral += 0.5 * grid.dt * (var(j) + var(j + 1));
    out.ms_integral += 0.5 * grid.dt * (ms(j) + ms(j + 1));
  }
  return out;
}

}  // namespace

double sls(const Eigen::MatrixXd& original, const Eigen::MatrixXd& registered,
           const TimeGrid& grid) {
  if (original.rows() != registered.rows() || original.cols() != registered.cols() ||
      original.rows() != grid.size()) {
    throw std::invalid_argument("sls: shape mismatch");
  }
  if (original.cols() < 2) {
    throw degenerate_sample_error("sls: need at least two functions");
  }
  const DerivSpread denom = derivative_spread(original, grid);
  const DerivSpread numer = derivative_spread(registered, grid);
  // A spread at the rounding-noise floor of the derivative magnitudes cannot
  // be normalized by; this also covers exactly identical originals.
  if (denom.var_integral <= 1e-14 * denom.ms_integral) {
    throw degenerate_sample_error("sls: original sample has no derivative variance");
  }
  return numer.var_integral / denom.var_integral;
}

double sls_grouped(const Eigen::MatrixXd& original, const Eigen::MatrixXd& registered,
                   const TimeGrid& grid, const std::vector<int>& labels,
                   std::vector<int>* skipped) {
  if (static_cast<int>(labels.size()) != original.cols()) {
    throw std::invalid_argument("sls_grouped: one label per function required");
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) groups[labels[i]].push_back(i);

  double acc = 0.0;
  bool any = false;
  for (const auto& [label, members] : groups) {
    if (members.size() < 2) {
      if (skipped != nullptr) skipped->push_back(label);
      continue;
    }
    Eigen::MatrixXd orig(original.rows(), members.size());
    Eigen::MatrixXd reg(original.rows(), members.size());
    for (int k = 0; k < static_cast<int>(members.size()); ++k) {
      orig.col(k) = original.col(members[k]);
      reg.col(k) = registered.col(members[k]);
    }
    acc += sls(orig, reg, grid);
    any = true;
  }
  if (!any) {
    throw degenerate_sample_error("sls_grouped: every group was too small");
  }
  return acc;
}

namespace {

int quadrant_label(double x, double y) {
  if (x > 0.0 && y > 0.0) return 1;
  if (x < 0.0 && y > 0.0) return 2;
  if (x < 0.0 && y < 0.0) return 3;
  if (x > 0.0 && y < 0.0) return 4;
  // Boundary: smallest label consistent with the closed quadrants.
  if (x == 0.0 && y > 0.0) return 1;   // between 1 and 2
  if (x == 0.0 && y < 0.0) return 3;   // between 3 and 4
  if (y == 0.0 && x > 0.0) return 1;   // between 1 and 4
  if (y == 0.0 && x < 0.0) return 2;   // between 2 and 3
  return 1;                            // origin
}

}  // namespace

std::vector<int> group_by_weights(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2,
                                  GroupMode mode, double z2_low, double z2_high) {
  if (z1.size() != z2.size()) {
    throw std::invalid_argument("group_by_weights: weight vectors must match");
  }
  if (mode == GroupMode::z2_threshold && z2_high < z2_low) {
    throw std::invalid_argument("group_by_weights: need z2_low <= z2_high");
  }
  const int n = static_cast<int>(z1.size());
  std::vector<int> labels(n);
  switch (mode) {
    case GroupMode::quadrant_centered_both: {
      const double m1 = z1.mean();
      const double m2 = z2.mean();
      for (int i = 0; i < n; ++i) labels[i] = quadrant_label(z1(i) - m1, z2(i) - m2);
      break;
    }
    case GroupMode::quadrant_centered_z1_only: {
      const double m1 = z1.mean();
      for (int i = 0; i < n; ++i) labels[i] = quadrant_label(z1(i) - m1, z2(i));
      break;
    }
    case GroupMode::z2_threshold: {
      for (int i = 0; i < n; ++i) {
        if (z2(i) <= z2_low) {
          labels[i] = 1;
        } else if (z2(i) <= z2_high) {
          labels[i] = 2;
        } else {
          labels[i] = 3;
        }
      }
      break;
    }
  }
  return labels;
}

Eigen::Vector2d factor_recovery_score(const Eigen::MatrixXd& estimated,
                                      const Eigen::MatrixXd& truth, bool* rank_deficient) {
  if (estimated.rows() != truth.rows() || estimated.cols() != 2 || truth.cols() != 2) {
    throw std::invalid_argument("factor_recovery_score: need two p x 2 matrices");
  }
  const auto orthonormalize = [](const Eigen::MatrixXd& m, bool* deficient) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    const double r00 = std::abs(qr.matrixR()(0, 0));
    const double r11 = std::abs(qr.matrixR()(1, 1));
    const bool ok = r00 > 0.0 && r11 > 1e-10 * r00;
    if (deficient != nullptr) *deficient = !ok;
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), ok ? 2 : 1);
    return q;
  };
  bool est_deficient = false, truth_deficient = false;
  const Eigen::MatrixXd qe = orthonormalize(estimated, &est_deficient);
  const Eigen::MatrixXd qt = orthonormalize(truth, &truth_deficient);
  if (truth_deficient) {
    throw std::invalid_argument("factor_recovery_score: truth factors are collinear");
  }
  if (rank_deficient != nullptr) *rank_deficient = est_deficient;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(qe.transpose() * qt);
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (int k = 0; k < svd.singularValues().size() && k < 2; ++k) {
    out(k) = std::min(1.0, svd.singularValues()(k));
  }
  return out;
}

TrendTest mann_kendall_trend(const std::vector<double>& series) {
  const int n = static_cast<int>(series.size());
  if (n < 10) {
    throw std::invalid_argument("mann_kendall_trend: series too short");
  }
  double s_stat = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double diff = series[j] - series[i];
      s_stat += (diff > 0.0) - (diff < 0.0);
    }
  }
  const double var0 = n * (n - 1.0) * (2.0 * n + 5.0) / 18.0;

  // Rank-autocorrelation correction for serial dependence: the effective
  // sample size shrinks when neighbouring values co-move.
  std::vector<double> ranks(n);
  {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return series[a] < series[b]; });
    for (int r = 0; r < n; ++r) ranks[order[r]] = r + 1.0;
  }
  const double rank_mean = 0.5 * (n + 1.0);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    denom += (ranks[i] - rank_mean) * (ranks[i] - rank_mean);
  }
  double corr_sum = 0.0;
  const int max_lag = n - 3;
  for (int lag = 1; lag <= max_lag; ++lag) {
    double num = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      num += (ranks[i] - rank_mean) * (ranks[i + lag] - rank_mean);
    }
    const double rho = num / denom;
    if (std::abs(rho) > 1.96 / std::sqrt(static_cast<double>(n))) {
      corr_sum += (n - lag) * (n - lag - 1.0) * (n - lag - 2.0) * rho;
    }
  }
  double ratio = 1.0 + corr_sum * 2.0 / (n * (n - 1.0) * (n - 2.0));
  ratio = std::max(ratio, 1e-3);  // guard against pathological negative sums

  TrendTest out;
  out.var_ratio = ratio;
  const double var = var0 * ratio;
  if (s_stat > 0.0) {
    out.z = (s_stat - 1.0) / std::sqrt(var);
  } else if (s_stat < 0.0) {
    out.z = (s_stat + 1.0) / std::sqrt(var);
  } else {
    out.z = 0.0;
  }
  out.significant_5pct = std::abs(out.z) > 1.959963984540054;
  return out;
}

}  // namespace fdareg
