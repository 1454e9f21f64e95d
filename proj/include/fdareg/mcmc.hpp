#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/avb.hpp"
#include "fdareg/model.hpp"
#include "fdareg/stats.hpp"

namespace fdareg {

// Conditional distributions of the Gibbs scan, exposed so tests can verify
// their parameters independently of the draws.
struct GaussianBlock {
  Eigen::VectorXd linear;   // prec * mean
  Eigen::MatrixXd prec;
  Eigen::VectorXd mean() const { return prec.llt().solve(linear); }
};

struct ScalarGaussian {
  double mean = 0.0;
  double var = 1.0;
};

GaussianBlock f1_conditional(const LatentState& state, const Eigen::MatrixXd& warped,
                             const ModelConfig& cfg, const PenaltySet& pen);
GaussianBlock f2_conditional(const LatentState& state, const Eigen::MatrixXd& warped,
                             const ModelConfig& cfg, const PenaltySet& pen);
ScalarGaussian z0_conditional(int i, const LatentState& state, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen);
ScalarGaussian z1_conditional(int i, const LatentState& state, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen);
ScalarGaussian z2_conditional(int i, const LatentState& state, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen);
// Inverse-gamma conditionals for the weight variances.
GammaPair var_z0_conditional(const LatentState& state, const ModelConfig& cfg);
GammaPair var_z1_conditional(const LatentState& state, const ModelConfig& cfg);
GammaPair var_z2_conditional(const LatentState& state, const ModelConfig& cfg);
// Gamma conditionals for the factor smoothness weights.
GammaPair eta_conditional(const LatentState& state, const ModelConfig& cfg,
                          const PenaltySet& pen);
GammaPair lambda_conditional(const LatentState& state, const ModelConfig& cfg,
                             const PenaltySet& pen);

// In-place conditional draws.
void sample_f1(LatentState& state, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng);
void sample_f2(LatentState& state, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng);
void sample_z0(LatentState& state, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng);
void sample_z1(LatentState& state, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng);
void sample_z2(LatentState& state, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng);
void sample_variances(LatentState& state, const ModelConfig& cfg, Rng& rng);
void sample_smoothness(LatentState& state, const ModelConfig& cfg, const PenaltySet& pen,
                       Rng& rng);

// Random-walk update of one warp base function; returns acceptance.
bool metropolis_w(int i, LatentState& state, const Dataset& data, const ModelConfig& cfg,
                  const PenaltySet& pen, const PenaltySet& pen_reduced, double step, Rng& rng);

struct McmcOptions {
  int n_iter = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
  double init_step = 0.1;
  double target_accept = 0.3;
  double adapt_fraction = 0.2;  // step sizes adapt over this leading share
  int w_reps = 1;               // Metropolis proposals per warp per scan; the
                                // warp block is the only non-conjugate one, so
                                // extra proposals shorten its relaxation time
};

struct ChainSamples {
  std::vector<LatentState> draws;
  std::vector<double> log_joint_trace;  // one entry per stored draw
  Eigen::VectorXd acceptance;           // per function, after adaptation ends
  std::uint64_t seed = 0;
};

// Starting points: the variational fit collapsed to point estimates, or a
// dispersed draw from (safeguarded) priors.
LatentState state_from_q(const QState& q);
LatentState draw_prior_state(const Dataset& data, const ModelConfig& cfg,
                             const PenaltySet& pen, const PenaltySet& pen_reduced, Rng& rng);

ChainSamples run_chain(const Dataset& data, const ModelConfig& cfg, const LatentState& init,
                       const McmcOptions& opts);

}  // namespace fdareg
