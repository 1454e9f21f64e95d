#include "fdareg/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdareg {

namespace {

Eigen::VectorXd residual_without_f1(int i, const LatentState& s, const Eigen::MatrixXd& warped,
                                    const ModelConfig& cfg) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(warped.rows());
  return warped.col(i) - s.z0(i) * ones - cfg.kappa() * s.z2(i) * s.f2;
}

Eigen::VectorXd residual_without_f2(int i, const LatentState& s, const Eigen::MatrixXd& warped,
                                    const ModelConfig& cfg) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(warped.rows());
  (void)cfg;
  return warped.col(i) - s.z0(i) * ones - s.z1(i) * s.f1;
}

}  // namespace

GaussianBlock f1_conditional(const LatentState& s, const Eigen::MatrixXd& warped,
                             const ModelConfig& cfg, const PenaltySet& pen) {
  const int n = s.n_functions();
  const double gs = cfg.gamma_sum();
  GaussianBlock out;
  double coef = 0.0;
  Eigen::VectorXd stack = Eigen::VectorXd::Zero(pen.size());
  for (int i = 0; i < n; ++i) {
    coef += s.z1(i) * s.z1(i);
    stack += s.z1(i) * residual_without_f1(i, s, warped, cfg);
  }
  out.prec = coef * gs * pen.sigma_inv + s.eta_f * pen.p1 + s.lambda_f * pen.p2_pinv;
  out.linear = gs * (pen.sigma_inv * stack);
  return out;
}

GaussianBlock f2_conditional(const LatentState& s, const Eigen::MatrixXd& warped,
                             const ModelConfig& cfg, const PenaltySet& pen) {
  const int n = s.n_functions();
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();
  GaussianBlock out;
  double coef = 0.0;
  Eigen::VectorXd stack = Eigen::VectorXd::Zero(pen.size());
  for (int i = 0; i < n; ++i) {
    coef += s.z2(i) * s.z2(i);
    stack += s.z2(i) * residual_without_f2(i, s, warped, cfg);
  }
  out.prec = kap * kap * coef * gs * pen.sigma_inv + s.eta_f * pen.p1 + s.lambda_f * pen.p2_pinv;
  out.linear = kap * gs * (pen.sigma_inv * stack);  // kappa*(gamma1+gamma2) = gamma2
  return out;
}

ScalarGaussian z0_conditional(int i, const LatentState& s, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen) {
  const int n = s.n_functions();
  if (i < 0 || i + 1 >= n) {
    throw std::invalid_argument("z0_conditional: only the free coordinates have one");
  }
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(pen.size());
  const Eigen::VectorXd vA = gs * (pen.sigma_inv * ones);
  const double one_A_one = vA.dot(ones);
  // Coordinate i appears in function i and, negated, in function n-1; the
  // data precision therefore doubles.
  ScalarGaussian out;
  out.var = 1.0 / (1.0 / s.var_z0 + 2.0 * one_A_one);
  const Eigen::VectorXd contrast = (warped.col(i) - warped.col(n - 1)) +
                                   (s.z1(n - 1) - s.z1(i)) * s.f1 +
                                   kap * (s.z2(n - 1) - s.z2(i)) * s.f2;
  const double sum_others = s.z0_free.sum() - s.z0_free(i);
  out.mean = out.var * (vA.dot(contrast) - sum_others * one_A_one);
  return out;
}

ScalarGaussian z1_conditional(int i, const LatentState& s, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen) {
  const double gs = cfg.gamma_sum();
  const Eigen::VectorXd af1 = gs * (pen.sigma_inv * s.f1);
  ScalarGaussian out;
  out.var = 1.0 / (1.0 / s.var_z1 + s.f1.dot(af1));
  // Prior is centred at one, hence the 1/var_z1 offset in the linear part.
  out.mean = out.var * (1.0 / s.var_z1 + af1.dot(residual_without_f1(i, s, warped, cfg)));
  return out;
}

ScalarGaussian z2_conditional(int i, const LatentState& s, const Eigen::MatrixXd& warped,
                              const ModelConfig& cfg, const PenaltySet& pen) {
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();
  const Eigen::VectorXd af2 = gs * (pen.sigma_inv * s.f2);
  ScalarGaussian out;
  out.var = 1.0 / (1.0 / s.var_z2 + kap * kap * s.f2.dot(af2));
  out.mean = out.var * kap * af2.dot(residual_without_f2(i, s, warped, cfg));
  return out;
}

GammaPair var_z0_conditional(const LatentState& s, const ModelConfig& cfg) {
  const int n = s.n_functions();
  return {cfg.a + 0.5 * (n - 1), cfg.b + 0.5 * s.z0_free.squaredNorm()};
}

GammaPair var_z1_conditional(const LatentState& s, const ModelConfig& cfg) {
  const int n = s.n_functions();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += (s.z1(i) - 1.0) * (s.z1(i) - 1.0);
  return {cfg.a + 0.5 * n, cfg.b + 0.5 * acc};
}

GammaPair var_z2_conditional(const LatentState& s, const ModelConfig& cfg) {
  const int n = s.n_functions();
  return {cfg.a + 0.5 * n, cfg.b + 0.5 * s.z2.squaredNorm()};
}

GammaPair eta_conditional(const LatentState& s, const ModelConfig& cfg, const PenaltySet& pen) {
  const double quad = s.f1.dot(pen.p1 * s.f1) + s.f2.dot(pen.p1 * s.f2);
  return {cfg.c + 2.0, cfg.d + 0.5 * quad};
}

GammaPair lambda_conditional(const LatentState& s, const ModelConfig& cfg,
                             const PenaltySet& pen) {
  const double quad = s.f1.dot(pen.p2_pinv * s.f1) + s.f2.dot(pen.p2_pinv * s.f2);
  return {cfg.c + (pen.size() - 2), cfg.d + 0.5 * quad};
}

void sample_f1(LatentState& s, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng) {
  const GaussianBlock blk = f1_conditional(s, warped, cfg, pen);
  s.f1 = mvn_draw_from_precision(blk.prec, blk.linear, rng);
}

void sample_f2(LatentState& s, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng) {
  const GaussianBlock blk = f2_conditional(s, warped, cfg, pen);
  s.f2 = mvn_draw_from_precision(blk.prec, blk.linear, rng);
}

void sample_z0(LatentState& s, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng) {
  for (int i = 0; i + 1 < s.n_functions(); ++i) {
    const ScalarGaussian g = z0_conditional(i, s, warped, cfg, pen);
    s.z0_free(i) = rng.normal(g.mean, std::sqrt(g.var));
  }
}

void sample_z1(LatentState& s, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng) {
  for (int i = 0; i < s.n_functions(); ++i) {
    const ScalarGaussian g = z1_conditional(i, s, warped, cfg, pen);
    s.z1(i) = rng.normal(g.mean, std::sqrt(g.var));
  }
}

void sample_z2(LatentState& s, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
               const PenaltySet& pen, Rng& rng) {
  for (int i = 0; i < s.n_functions(); ++i) {
    const ScalarGaussian g = z2_conditional(i, s, warped, cfg, pen);
    s.z2(i) = rng.normal(g.mean, std::sqrt(g.var));
  }
}

void sample_variances(LatentState& s, const ModelConfig& cfg, Rng& rng) {
  const GammaPair g0 = var_z0_conditional(s, cfg);
  s.var_z0 = rng.inv_gamma(g0.shape, g0.rate);
  const GammaPair g1 = var_z1_conditional(s, cfg);
  s.var_z1 = rng.inv_gamma(g1.shape, g1.rate);
  const GammaPair g2 = var_z2_conditional(s, cfg);
  s.var_z2 = rng.inv_gamma(g2.shape, g2.rate);
}

void sample_smoothness(LatentState& s, const ModelConfig& cfg, const PenaltySet& pen,
                       Rng& rng) {
  const GammaPair ge = eta_conditional(s, cfg, pen);
  s.eta_f = rng.gamma(ge.shape, ge.rate);
  const GammaPair gl = lambda_conditional(s, cfg, pen);
  s.lambda_f = rng.gamma(gl.shape, gl.rate);
}

bool metropolis_w(int i, LatentState& s, const Dataset& data, const ModelConfig& cfg,
                  const PenaltySet& pen, const PenaltySet& pen_reduced, double step, Rng& rng) {
  const int p = data.grid.size();
  const double gs = cfg.gamma_sum();
  const double log_det_prec = p * std::log(gs) + pen.log_det_curvature;
  const Eigen::VectorXd mean = registered_mean(s, i, cfg);

  const auto objective = [&](const BaseFunction& w) {
    const Warp h = warp_from_base(w, data.grid);
    const Eigen::VectorXd y = apply_warp(data.values.col(i), h, data.grid, cfg.interpolation);
    return log_mvn_prec(y, mean, gs * pen.sigma_inv, log_det_prec) +
           log_base_prior(w, pen_reduced, cfg.gamma_w, cfg.lambda_w);
  };

  BaseFunction current{canonicalize(s.bases[i].values, data.grid)};
  BaseFunction proposal;
  try {
    proposal.values =
        canonicalize(current.values + step * rng.std_normal(p - 1), data.grid);
  } catch (const std::domain_error&) {
    rng.uniform();  // keep the draw count aligned with the accept path
    return false;
  }
  const double delta = objective(proposal) - objective(current);
  if (std::log(rng.uniform()) < delta) {
    s.bases[i] = proposal;
    return true;
  }
  return false;
}

LatentState state_from_q(const QState& q) {
  LatentState s;
  s.f1 = q.mu_f1;
  s.f2 = q.mu_f2;
  s.z0_free = q.mu_z0;
  s.z1 = q.mu_z1;
  s.z2 = q.mu_z2;
  const auto ig_point = [](const GammaPair& g) {
    return g.shape > 1.0 ? g.rate / (g.shape - 1.0) : g.rate / (g.shape + 1.0);
  };
  s.var_z0 = ig_point(q.ig_z0);
  s.var_z1 = ig_point(q.ig_z1);
  s.var_z2 = ig_point(q.ig_z2);
  s.eta_f = q.g_eta.mean();
  s.lambda_f = q.g_lambda.mean();
  s.bases = q.bases;
  return s;
}

LatentState draw_prior_state(const Dataset& data, const ModelConfig& cfg,
                             const PenaltySet& pen, const PenaltySet& pen_reduced, Rng& rng) {
  const int p = data.grid.size();
  const int n = data.n_functions();
  // Heavy-tailed hyperpriors are clamped to a moderate range so the start is
  // dispersed but finite-precision arithmetic survives the first scan.
  const auto clamp = [](double v) { return std::clamp(v, 1e-3, 1e3); };
  LatentState s = LatentState::zeros(p, n);
  s.var_z0 = clamp(rng.inv_gamma(cfg.a, cfg.b));
  s.var_z1 = clamp(rng.inv_gamma(cfg.a, cfg.b));
  s.var_z2 = clamp(rng.inv_gamma(cfg.a, cfg.b));
  s.eta_f = clamp(rng.gamma(cfg.c, cfg.d));
  s.lambda_f = clamp(rng.gamma(cfg.c, cfg.d));
  const FactorCov fc = sigma_f(pen, s.eta_f, s.lambda_f);
  s.f1 = mvn_draw_from_covariance(fc.cov, Eigen::VectorXd::Zero(p), rng);
  s.f2 = mvn_draw_from_covariance(fc.cov, Eigen::VectorXd::Zero(p), rng);
  for (int i = 0; i + 1 < n; ++i) s.z0_free(i) = rng.normal(0.0, std::sqrt(s.var_z0));
  for (int i = 0; i < n; ++i) s.z1(i) = rng.normal(1.0, std::sqrt(s.var_z1));
  for (int i = 0; i < n; ++i) s.z2(i) = rng.normal(0.0, std::sqrt(s.var_z2));
  const FactorCov wc = base_prior_cov(pen_reduced, cfg.gamma_w, cfg.lambda_w);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd w =
        mvn_draw_from_covariance(wc.cov, Eigen::VectorXd::Zero(p - 1), rng);
    const double cap = 0.5 * base_function_bound;
    s.bases[i].values = canonicalize(w.cwiseMax(-cap).cwiseMin(cap), data.grid);
  }
  return s;
}

ChainSamples run_chain(const Dataset& data, const ModelConfig& cfg, const LatentState& init,
                       const McmcOptions& opts) {
  data.validate();
  cfg.validate();
  const PenaltySet pen = build_penalty_set(data.grid);
  const PenaltySet pen_reduced = build_penalty_set(data.grid.truncated());
  const int n = data.n_functions();

  Rng rng(opts.seed);
  LatentState s = init;
  ChainSamples out;
  out.seed = opts.seed;
  out.draws.reserve(opts.n_iter / opts.thin + 1);

  Eigen::VectorXd log_step = Eigen::VectorXd::Constant(n, std::log(opts.init_step));
  const int adapt_until = static_cast<int>(opts.adapt_fraction * opts.n_iter);
  Eigen::VectorXd accepted = Eigen::VectorXd::Zero(n);
  int post_adapt_iters = 0;

  std::vector<Warp> warps(n);
  for (int i = 0; i < n; ++i) warps[i] = warp_from_base(s.bases[i], data.grid);
  Eigen::MatrixXd warped = warp_all(data.values, warps, data.grid, cfg.interpolation);

  const int reps = std::max(1, opts.w_reps);
  for (int iter = 1; iter <= opts.n_iter; ++iter) {
    const bool adapting = iter <= adapt_until;
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < reps; ++r) {
        const bool acc =
            metropolis_w(i, s, data, cfg, pen, pen_reduced, std::exp(log_step(i)), rng);
        if (acc) {
          warps[i] = warp_from_base(s.bases[i], data.grid);
          warped.col(i) =
              apply_warp(data.values.col(i), warps[i], data.grid, cfg.interpolation);
        }
        if (adapting) {
          const double gain = std::pow(static_cast<double>(iter), -0.6);
          log_step(i) += gain * ((acc ? 1.0 : 0.0) - opts.target_accept);
          log_step(i) = std::clamp(log_step(i), std::log(1e-4), std::log(10.0));
        } else if (acc) {
          accepted(i) += 1.0;
        }
      }
    }
    if (!adapting) ++post_adapt_iters;

    sample_f1(s, warped, cfg, pen, rng);
    sample_f2(s, warped, cfg, pen, rng);
    sample_z0(s, warped, cfg, pen, rng);
    sample_z1(s, warped, cfg, pen, rng);
    sample_z2(s, warped, cfg, pen, rng);
    sample_variances(s, cfg, rng);
    sample_smoothness(s, cfg, pen, rng);

    if (iter % opts.thin == 0) {
      out.draws.push_back(s);
      out.log_joint_trace.push_back(log_joint(s, data, cfg, pen, pen_reduced));
    }
  }
  out.acceptance = post_adapt_iters > 0
                       ? (accepted / static_cast<double>(post_adapt_iters * reps)).eval()
                       : Eigen::VectorXd::Zero(n);
  return out;
}

}  // namespace fdareg
