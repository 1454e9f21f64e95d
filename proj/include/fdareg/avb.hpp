#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/model.hpp"

namespace fdareg {

// Gamma(shape, rate) variational block; the shapes are fixed by conjugacy,
// only rates move during the fit.  Also represents inverse-gamma blocks
// (shape/rate of the reciprocal).
struct GammaPair {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }
};

// Variational posterior: Gaussians for the factors and weights,
// inverse-gamma for the weight variances, gamma for the factor smoothness
// weights, plus point-estimated warp base functions.
struct QState {
  Eigen::VectorXd mu_f1, mu_f2;    // p
  Eigen::MatrixXd cov_f1, cov_f2;  // p x p
  Eigen::VectorXd mu_z0, var_z0;   // N-1 free coordinates
  Eigen::VectorXd mu_z1, var_z1;   // N
  Eigen::VectorXd mu_z2, var_z2;   // N
  GammaPair ig_z0, ig_z1, ig_z2;   // inverse-gamma blocks (fixed shapes)
  GammaPair g_eta, g_lambda;       // gamma blocks (fixed shapes)
  std::vector<BaseFunction> bases; // N point-estimated warp bases

  int n_functions() const { return static_cast<int>(mu_z1.size()); }
  double mu_z0_at(int i) const {
    return i + 1 < static_cast<int>(mu_z1.size()) ? mu_z0(i) : -mu_z0.sum();
  }
  // E[1/sigma^2] for the inverse-gamma blocks, E[eta] etc. for the gamma ones.
  double e_inv_var_z0() const { return ig_z0.mean(); }
  double e_inv_var_z1() const { return ig_z1.mean(); }
  double e_inv_var_z2() const { return ig_z2.mean(); }
  double e_eta() const { return g_eta.mean(); }
  double e_lambda() const { return g_lambda.mean(); }

  // Mean curve of function i under the variational means.
  Eigen::VectorXd mean_curve(int i, const ModelConfig& cfg) const;
};

// Evidence-bound terms, one per parameter block plus the data term and the
// point-estimated warp prior.  Every term carries its full constants.
struct ElboTerms {
  double data = 0.0;
  double f1 = 0.0, f2 = 0.0;
  double z0 = 0.0, z1 = 0.0, z2 = 0.0;
  double var_z0 = 0.0, var_z1 = 0.0, var_z2 = 0.0;
  double eta = 0.0, lambda = 0.0;
  double base_prior = 0.0;

  double total() const {
    return data + f1 + f2 + z0 + z1 + z2 + var_z0 + var_z1 + var_z2 + eta + lambda +
           base_prior;
  }
};

struct AvbOptions {
  int max_iters = 500;
  double tol = 1e-6;          // relative criterion change
  bool parallel_w = true;     // OpenMP over functions in the warp step
  int w_max_iters = 60;       // quasi-Newton iterations per warp update
  double w_grad_tol = 1e-6;
  int q_passes = 400;         // conjugate-update passes per iteration; each
                              // iteration runs them until the criterion stalls
                              // at 0.01*tol or this cap is hit
  bool center_warps = true;   // drift removal after convergence
};

struct AvbIterRow {
  int iter = 0;
  double criterion = 0.0;
  double gamma_w = 0.0;
  double max_base_change = 0.0;
};

struct AvbDiagnostics {
  int iterations = 0;
  bool converged = false;
  bool f2_init_fallback = false;  // principal-direction init was degenerate
  std::vector<AvbIterRow> trace;
};

struct AvbResult {
  QState q;
  std::vector<Warp> warps;
  AvbDiagnostics diag;
};

// Moment-matched starting point: centred cross-sectional mean for f1,
// leading residual principal direction for f2 (smoothest prior eigenvector
// when the residuals are degenerate), identity warps, unit weights.
QState avb_init(const Dataset& data, const ModelConfig& cfg, const PenaltySet& pen,
                bool* f2_fallback = nullptr);

// Maximizes the warp objective for function i: Gaussian log-likelihood of
// the warped curve around the variational mean plus the base-function prior
// with level weight gamma_w_eff.  Never returns a worse point than the
// input; *improved reports whether it moved.
BaseFunction maximize_w(int i, const QState& q, const Dataset& data, const ModelConfig& cfg,
                        const PenaltySet& pen, const PenaltySet& pen_reduced,
                        double gamma_w_eff, const AvbOptions& opts, bool* improved = nullptr);

// Warp objective and its gradient in canonical coordinates (exposed for
// gradient verification).
double w_objective(int i, const Eigen::VectorXd& w, const QState& q, const Dataset& data,
                   const ModelConfig& cfg, const PenaltySet& pen,
                   const PenaltySet& pen_reduced, double gamma_w_eff,
                   Eigen::VectorXd* grad = nullptr);

// Runs maximize_w for every function (the OpenMP kernel; serial when
// parallel is false) and overwrites q.bases.  Returns max |change|.
double maximize_all_bases(QState& q, const Dataset& data, const ModelConfig& cfg,
                          const PenaltySet& pen, const PenaltySet& pen_reduced,
                          double gamma_w_eff, const AvbOptions& opts, bool parallel);

// Closed-form coordinate updates.  `warped` is the data evaluated at the
// current warps; each call rewrites its block of q in place.
void update_q_f1(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                 const PenaltySet& pen);
void update_q_f2(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                 const PenaltySet& pen);
void update_q_z(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                const PenaltySet& pen);
void update_q_hyper(QState& q, const ModelConfig& cfg, const PenaltySet& pen);

// Evidence-bound criterion with the data evaluated at q's warps; gamma_w_eff
// is the level weight in effect for the warp-prior term.
ElboTerms elbo_terms(const QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                     const PenaltySet& pen, const PenaltySet& pen_reduced,
                     double gamma_w_eff);

double elbo(const QState& q, const Dataset& data, const ModelConfig& cfg,
            const PenaltySet& pen, const PenaltySet& pen_reduced);

AvbResult run_avb(const Dataset& data, const ModelConfig& cfg, const AvbOptions& opts = {});

}  // namespace fdareg
