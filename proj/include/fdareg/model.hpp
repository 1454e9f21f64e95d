#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/grid.hpp"
#include "fdareg/interp.hpp"
#include "fdareg/warp.hpp"

namespace fdareg {

// One stage of a fixed annealing schedule: from iteration `start_iter`
// onwards the whole warp prior (both gamma_w and lambda_w) is scaled by
// `multiplier`, stiffening or relaxing the warps as a unit.
struct AnnealStage {
  double multiplier = 1.0;
  int start_iter = 0;
};

struct ModelConfig {
  // Error precisions: gamma1 for the first-factor channel, gamma2 for the
  // second; the first must dominate so the second factor stays secondary.
  double gamma1 = 100.0;
  double gamma2 = 10.0;

  // Warp smoothness weights.
  double gamma_w = 1.0;
  double lambda_w = 1.0;

  // Hyperpriors: variances ~ InvGamma(a, b), factor weights ~ Gamma(c, d).
  double a = 0.001, b = 0.001;
  double c = 0.001, d = 0.001;

  Interpolant::Kind interpolation = Interpolant::Kind::monotone_cubic;

  // Empty schedule selects the adaptive default (start stiff, relax on
  // stalls); otherwise the listed multipliers apply verbatim.
  std::vector<AnnealStage> anneal_schedule;

  double gamma_sum() const { return gamma1 + gamma2; }
  // Share of the combined precision carried by the second factor channel.
  double kappa() const { return gamma2 / (gamma1 + gamma2); }

  void validate() const;

  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);
};

// Observed curves: one column per function, rows indexed by the grid.
struct Dataset {
  TimeGrid grid;
  Eigen::MatrixXd values;  // p x N

  int n_functions() const { return static_cast<int>(values.cols()); }
  void validate() const;
};

// One full point in parameter space (an MCMC state or a point estimate).
// The level weights z0 are stored through their N-1 free coordinates; the
// last one is the negated sum, so the column means always balance.
struct LatentState {
  Eigen::VectorXd f1, f2;   // p
  Eigen::VectorXd z0_free;  // N-1
  Eigen::VectorXd z1, z2;   // N
  double var_z0 = 1.0, var_z1 = 1.0, var_z2 = 1.0;
  double eta_f = 1.0, lambda_f = 1.0;
  std::vector<BaseFunction> bases;  // N warp base functions

  int n_functions() const { return static_cast<int>(z1.size()); }
  double z0(int i) const {
    return i + 1 < static_cast<int>(z1.size()) ? z0_free(i) : -z0_free.sum();
  }
  Eigen::VectorXd z0_full() const;

  static LatentState zeros(int p, int n);
};

// Mean curve of function i in registered time: z0_i + z1_i*f1 + kappa*z2_i*f2.
Eigen::VectorXd registered_mean(const LatentState& state, int i, const ModelConfig& cfg);

// Gaussian log-likelihood of the warped data under the two-factor mean,
// summed over functions.  `warped` holds the curves already evaluated at the
// state's warps.
double data_loglik(const LatentState& state, const Eigen::MatrixXd& warped,
                   const ModelConfig& cfg, const PenaltySet& pen);

// Joint log-density of data and every parameter block, up to one fixed
// additive constant (the endpoint-constraint normalizer of the warp prior).
double log_joint(const LatentState& state, const Dataset& data, const ModelConfig& cfg,
                 const PenaltySet& pen, const PenaltySet& pen_reduced);

}  // namespace fdareg
