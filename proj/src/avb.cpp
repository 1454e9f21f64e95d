#include "fdareg/avb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fdareg/parallel.hpp"
#include "fdareg/stats.hpp"

namespace fdareg {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double half_log_2pi(int n) { return 0.5 * n * std::log(2.0 * M_PI); }

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Eigen::VectorXd QState::mean_curve(int i, const ModelConfig& cfg) const {
  return mu_z0_at(i) * Eigen::VectorXd::Ones(mu_f1.size()) + mu_z1(i) * mu_f1 +
         cfg.kappa() * mu_z2(i) * mu_f2;
}

QState avb_init(const Dataset& data, const ModelConfig& cfg, const PenaltySet& pen,
                bool* f2_fallback) {
  data.validate();
  cfg.validate();
  const int p = data.grid.size();
  const int n = data.n_functions();
  if (data.values.maxCoeff() == data.values.minCoeff()) {
    throw std::invalid_argument("avb_init: constant dataset carries no shape to fit");
  }

  QState q;
  q.mu_f1 = data.values.rowwise().mean();

  // Second factor: leading principal direction of the residuals around the
  // mean curve, normalized to unit energy in the sigma metric.  The matching
  // scores seed mu_z2: the factor mean update is a z2-weighted sum, so an
  // all-zero z2 start would zero the factor on the first pass and the pair
  // could never recover (the origin is a fixed point of the paired updates).
  Eigen::MatrixXd resid = data.values.colwise() - q.mu_f1;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(resid, Eigen::ComputeThinU | Eigen::ComputeThinV);
  bool fallback = false;
  Eigen::VectorXd dir;
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(n);
  if (svd.singularValues()(0) > 1e-12 * (1.0 + data.values.norm())) {
    dir = svd.matrixU().col(0);
    scores = svd.singularValues()(0) * svd.matrixV().col(0);
  } else {
    // Residuals carry no direction; fall back to the smoothest prior mode.
    fallback = true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pen.sigma);
    dir = es.eigenvectors().col(p - 1);
  }
  int imax = 0;
  dir.cwiseAbs().maxCoeff(&imax);
  if (dir(imax) < 0.0) {
    dir = -dir;
    scores = -scores;
  }
  const double energy = std::sqrt(dir.dot(pen.sigma_inv * dir));
  q.mu_f2 = dir / energy;
  if (f2_fallback != nullptr) *f2_fallback = fallback;

  const FactorCov fc = sigma_f(pen, 1.0, 1.0);
  q.cov_f1 = fc.cov;
  q.cov_f2 = fc.cov;

  q.mu_z0 = Eigen::VectorXd::Zero(n - 1);
  q.var_z0 = Eigen::VectorXd::Ones(n - 1);
  q.mu_z1 = Eigen::VectorXd::Ones(n);
  q.var_z1 = Eigen::VectorXd::Ones(n);
  // resid_i ~ (score_i * energy) * mu_f2 and the model weights f2 by kappa,
  // so kappa * z2_i = score_i * energy reproduces the residual decomposition.
  q.mu_z2 = (energy / cfg.kappa()) * scores;
  q.var_z2 = Eigen::VectorXd::Ones(n);

  // Conjugate shapes are fixed for the whole fit; rates start neutral so the
  // first moment sweep sees unit-scale expectations.
  q.ig_z0 = {cfg.a + 0.5 * (n - 1), cfg.a + 0.5 * (n - 1)};
  q.ig_z1 = {cfg.a + 0.5 * n, cfg.a + 0.5 * n};
  q.ig_z2 = {cfg.a + 0.5 * n, cfg.a + 0.5 * n};
  q.g_eta = {cfg.c + 2.0, cfg.c + 2.0};
  q.g_lambda = {cfg.c + (p - 2), cfg.c + (p - 2)};

  q.bases.assign(n, BaseFunction{Eigen::VectorXd::Zero(p - 1)});
  return q;
}

// ---------------------------------------------------------------------------
// Warp step

namespace {

// Cached pieces of the per-function warp objective.
struct WObjective {
  const TimeGrid& grid;
  const PenaltySet& pen;
  Interpolant curve;        // observed function i
  Eigen::VectorXd mean;     // variational mean curve of function i
  double gs;                // gamma1 + gamma2
  double data_const;        // Gaussian normalizer of the data block
  FactorCov prior;          // base-function prior (reduced grid)
  double prior_const;

  WObjective(int i, const QState& q, const Dataset& data, const ModelConfig& cfg,
             const PenaltySet& pen_full, const PenaltySet& pen_reduced, double gamma_w_eff)
      : grid(data.grid),
        pen(pen_full),
        curve(data.grid.points, data.values.col(i), cfg.interpolation),
        mean(q.mean_curve(i, cfg)),
        gs(cfg.gamma_sum()),
        // The annealing multiplier rides in through gamma_w_eff; it scales
        // the whole warp prior, so lambda_w moves by the same factor.
        prior(base_prior_cov(pen_reduced, gamma_w_eff,
                             cfg.lambda_w * (gamma_w_eff / cfg.gamma_w))) {
    const int p = grid.size();
    data_const = -half_log_2pi(p) + 0.5 * (p * std::log(gs) + pen.log_det_curvature);
    prior_const = -half_log_2pi(p - 1) + 0.5 * prior.log_det_prec;
  }

  // Objective at an arbitrary representative w (invariant along constant
  // shifts); gradient, when requested, is in the same raw coordinates.
  double eval(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const {
    const int p = grid.size();
    Eigen::VectorXd wc;
    try {
      wc = canonicalize(w, grid);
    } catch (const std::domain_error&) {
      return neg_inf;  // outside the admissible slope box
    }

    Eigen::VectorXd h(p);
    h(0) = grid.t_start();
    double acc = grid.t_start();
    Eigen::VectorXd ew(p - 1);
    for (int k = 0; k + 1 < p; ++k) {
      ew(k) = std::exp(wc(k));
      acc += grid.dt * ew(k);
      h(k + 1) = acc;
    }

    Eigen::VectorXd y(p), dy(p);
    for (int j = 0; j < p; ++j) {
      y(j) = curve.value(h(j));
      if (grad != nullptr) dy(j) = curve.derivative(h(j));
    }

    const Eigen::VectorXd r = y - mean;
    const Eigen::VectorXd u = pen.sigma_inv * r;
    const Eigen::VectorXd pw = prior.prec * wc;
    const double value = data_const - 0.5 * gs * r.dot(u) + prior_const - 0.5 * wc.dot(pw);

    if (grad != nullptr) {
      // d(data)/dh_j, accumulated backwards: each slope w_k moves every
      // h_j with j > k by dt*exp(w_k).
      Eigen::VectorXd g(p - 1);
      double suffix = 0.0;
      for (int k = p - 2; k >= 0; --k) {
        suffix += -gs * u(k + 1) * dy(k + 1);
        g(k) = grid.dt * ew(k) * suffix;
      }
      g -= pw;
      // Project through the canonicalizing shift: softmax weights of wc.
      const Eigen::VectorXd soft = (grid.dt / grid.span()) * ew;
      *grad = g - g.sum() * soft;
    }
    return value;
  }
};

}  // namespace

double w_objective(int i, const Eigen::VectorXd& w, const QState& q, const Dataset& data,
                   const ModelConfig& cfg, const PenaltySet& pen,
                   const PenaltySet& pen_reduced, double gamma_w_eff, Eigen::VectorXd* grad) {
  WObjective obj(i, q, data, cfg, pen, pen_reduced, gamma_w_eff);
  return obj.eval(w, grad);
}

BaseFunction maximize_w(int i, const QState& q, const Dataset& data, const ModelConfig& cfg,
                        const PenaltySet& pen, const PenaltySet& pen_reduced,
                        double gamma_w_eff, const AvbOptions& opts, bool* improved) {
  const int m = data.grid.size() - 1;
  WObjective obj(i, q, data, cfg, pen, pen_reduced, gamma_w_eff);

  Eigen::VectorXd x = canonicalize(q.bases[i].values, data.grid);
  Eigen::VectorXd g(m);
  double fx = obj.eval(x, &g);
  const double f_start = fx;

  // BFGS on the negated objective; curvature pairs stay orthogonal to the
  // flat constant-shift direction, so H never picks it up.
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(m, m);
  for (int it = 0; it < opts.w_max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opts.w_grad_tol) break;
    Eigen::VectorXd dir = H * g;
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {  // lost positive definiteness; restart from steepest ascent
      H.setIdentity();
      dir = g;
      slope = g.dot(g);
      if (!(slope > 0.0)) break;
    }

    double alpha = 1.0;
    double f_new = neg_inf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + alpha * dir;
      if (x_new.lpNorm<Eigen::Infinity>() > base_function_bound - 1.0) {
        alpha *= 0.5;
        continue;
      }
      f_new = obj.eval(x_new, nullptr);
      if (f_new >= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd g_new(m);
    obj.eval(x_new, &g_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g - g_new;  // gradient of -J increases by -dg
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd outer = s * yv.transpose();
      H = (Eigen::MatrixXd::Identity(m, m) - rho * outer) * H *
              (Eigen::MatrixXd::Identity(m, m) - rho * outer.transpose()) +
          rho * (s * s.transpose());
    } else {
      H.setIdentity();
    }
    const double f_old = fx;
    x = x_new;
    fx = f_new;
    g = g_new;
    if (std::abs(f_new - f_old) < 1e-14 * (1.0 + std::abs(f_new))) break;
  }

  Eigen::VectorXd xc = canonicalize(x, data.grid);
  const double f_final = obj.eval(xc, nullptr);
  if (!(f_final >= f_start - 1e-10 * (1.0 + std::abs(f_start)))) {
    if (improved != nullptr) *improved = false;
    return BaseFunction{canonicalize(q.bases[i].values, data.grid)};
  }
  if (improved != nullptr) *improved = f_final > f_start;
  return BaseFunction{xc};
}

double maximize_all_bases(QState& q, const Dataset& data, const ModelConfig& cfg,
                          const PenaltySet& pen, const PenaltySet& pen_reduced,
                          double gamma_w_eff, const AvbOptions& opts, bool parallel) {
  const int n = data.n_functions();
  std::vector<BaseFunction> updated(n);
  par::for_each_index(n, parallel, [&](int i) {
    updated[i] = maximize_w(i, q, data, cfg, pen, pen_reduced, gamma_w_eff, opts);
  });
  double max_change = 0.0;
  for (int i = 0; i < n; ++i) {
    const double change =
        (updated[i].values - canonicalize(q.bases[i].values, data.grid)).lpNorm<Eigen::Infinity>();
    max_change = std::max(max_change, change);
    q.bases[i] = std::move(updated[i]);
  }
  return max_change;
}

// ---------------------------------------------------------------------------
// Closed-form coordinate updates

void update_q_f1(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                 const PenaltySet& pen) {
  const int p = pen.size();
  const int n = q.n_functions();
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();

  double s1 = 0.0;
  Eigen::VectorXd stack = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    s1 += q.var_z1(i) + q.mu_z1(i) * q.mu_z1(i);
    stack += q.mu_z1(i) * (warped.col(i) - q.mu_z0_at(i) * Eigen::VectorXd::Ones(p) -
                           kap * q.mu_z2(i) * q.mu_f2);
  }
  const Eigen::MatrixXd prec =
      s1 * gs * pen.sigma_inv + q.e_eta() * pen.p1 + q.e_lambda() * pen.p2_pinv;
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("update_q_f1: precision not positive definite");
  }
  q.mu_f1 = llt.solve(gs * (pen.sigma_inv * stack));
  q.cov_f1 = llt.solve(Eigen::MatrixXd::Identity(p, p));
  q.cov_f1 = 0.5 * (q.cov_f1 + q.cov_f1.transpose().eval());
}

void update_q_f2(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                 const PenaltySet& pen) {
  const int p = pen.size();
  const int n = q.n_functions();
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();

  double s2 = 0.0;
  Eigen::VectorXd stack = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    s2 += q.var_z2(i) + q.mu_z2(i) * q.mu_z2(i);
    stack += q.mu_z2(i) * (warped.col(i) - q.mu_z0_at(i) * Eigen::VectorXd::Ones(p) -
                           q.mu_z1(i) * q.mu_f1);
  }
  const Eigen::MatrixXd prec =
      kap * kap * s2 * gs * pen.sigma_inv + q.e_eta() * pen.p1 + q.e_lambda() * pen.p2_pinv;
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("update_q_f2: precision not positive definite");
  }
  // kappa*gs = gamma2: the second channel's own precision drives the mean.
  q.mu_f2 = llt.solve(kap * gs * (pen.sigma_inv * stack));
  q.cov_f2 = llt.solve(Eigen::MatrixXd::Identity(p, p));
  q.cov_f2 = 0.5 * (q.cov_f2 + q.cov_f2.transpose().eval());
}

void update_q_z(QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                const PenaltySet& pen) {
  const int p = pen.size();
  const int n = q.n_functions();
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p);
  const Eigen::VectorXd vA = gs * (pen.sigma_inv * ones);
  const double one_A_one = vA.dot(ones);

  // Level weights, sequentially: each free coordinate sees the live values
  // of the others through the sum-to-zero closure; the derived coordinate
  // doubles the data precision.
  const double var0 = 1.0 / (q.e_inv_var_z0() + 2.0 * one_A_one);
  for (int i = 0; i + 1 < n; ++i) {
    const Eigen::VectorXd contrast = (warped.col(i) - warped.col(n - 1)) +
                                     (q.mu_z1(n - 1) - q.mu_z1(i)) * q.mu_f1 +
                                     kap * (q.mu_z2(n - 1) - q.mu_z2(i)) * q.mu_f2;
    const double sum_others = q.mu_z0.sum() - q.mu_z0(i);
    q.mu_z0(i) = var0 * (vA.dot(contrast) - sum_others * one_A_one);
    q.var_z0(i) = var0;
  }

  const Eigen::VectorXd af1 = gs * (pen.sigma_inv * q.mu_f1);
  const double t1 = gs * (pen.sigma_inv * q.cov_f1).trace() + q.mu_f1.dot(af1);
  const double var1 = 1.0 / (q.e_inv_var_z1() + t1);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd resid =
        warped.col(i) - q.mu_z0_at(i) * ones - kap * q.mu_z2(i) * q.mu_f2;
    q.mu_z1(i) = var1 * (q.e_inv_var_z1() + af1.dot(resid));  // prior centred at one
    q.var_z1(i) = var1;
  }

  const Eigen::VectorXd af2 = gs * (pen.sigma_inv * q.mu_f2);
  const double t2 = gs * (pen.sigma_inv * q.cov_f2).trace() + q.mu_f2.dot(af2);
  const double var2 = 1.0 / (q.e_inv_var_z2() + kap * kap * t2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd resid = warped.col(i) - q.mu_z0_at(i) * ones - q.mu_z1(i) * q.mu_f1;
    q.mu_z2(i) = var2 * kap * af2.dot(resid);
    q.var_z2(i) = var2;
  }
}

void update_q_hyper(QState& q, const ModelConfig& cfg, const PenaltySet& pen) {
  const int n = q.n_functions();
  const auto second_moment = [](const Eigen::MatrixXd& cov, const Eigen::VectorXd& mu,
                                const Eigen::MatrixXd& m) {
    return (m * cov).trace() + mu.dot(m * mu);
  };
  q.g_eta.rate = cfg.d + 0.5 * (second_moment(q.cov_f1, q.mu_f1, pen.p1) +
                                second_moment(q.cov_f2, q.mu_f2, pen.p1));
  q.g_lambda.rate = cfg.d + 0.5 * (second_moment(q.cov_f1, q.mu_f1, pen.p2_pinv) +
                                   second_moment(q.cov_f2, q.mu_f2, pen.p2_pinv));

  q.ig_z0.rate = cfg.b + 0.5 * (q.var_z0.sum() + q.mu_z0.squaredNorm());
  double s1 = 0.0;
  for (int i = 0; i < n; ++i) {
    s1 += q.var_z1(i) + (q.mu_z1(i) - 1.0) * (q.mu_z1(i) - 1.0);
  }
  q.ig_z1.rate = cfg.b + 0.5 * s1;
  q.ig_z2.rate = cfg.b + 0.5 * (q.var_z2.sum() + q.mu_z2.squaredNorm());
}

// ---------------------------------------------------------------------------
// Evidence-bound criterion

ElboTerms elbo_terms(const QState& q, const Eigen::MatrixXd& warped, const ModelConfig& cfg,
                     const PenaltySet& pen, const PenaltySet& pen_reduced,
                     double gamma_w_eff) {
  const int p = pen.size();
  const int n = q.n_functions();
  const double gs = cfg.gamma_sum();
  const double kap = cfg.kappa();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p);
  const Eigen::VectorXd vA = gs * (pen.sigma_inv * ones);
  const double one_A_one = vA.dot(ones);
  const Eigen::VectorXd af1 = gs * (pen.sigma_inv * q.mu_f1);
  const Eigen::VectorXd af2 = gs * (pen.sigma_inv * q.mu_f2);
  const double t1 = gs * (pen.sigma_inv * q.cov_f1).trace() + q.mu_f1.dot(af1);
  const double t2 = gs * (pen.sigma_inv * q.cov_f2).trace() + q.mu_f2.dot(af2);
  const double cross12 = q.mu_f1.dot(af2);
  const double one_af1 = vA.dot(q.mu_f1);
  const double one_af2 = vA.dot(q.mu_f2);

  ElboTerms terms;

  // Data block: full quadratic expansion under q, with the level-weight
  // second moments folded through the sum-to-zero closure.
  const double log_det_a = p * std::log(gs) + pen.log_det_curvature;
  double data = n * (-half_log_2pi(p) + 0.5 * log_det_a);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd ui = gs * (pen.sigma_inv * warped.col(i));
    const double m0 = q.mu_z0_at(i);
    const double e1 = q.var_z1(i) + q.mu_z1(i) * q.mu_z1(i);
    const double e2 = q.var_z2(i) + q.mu_z2(i) * q.mu_z2(i);
    double quad = warped.col(i).dot(ui);
    quad -= 2.0 * (m0 * vA.dot(warped.col(i)) + q.mu_z1(i) * ui.dot(q.mu_f1) +
                   kap * q.mu_z2(i) * ui.dot(q.mu_f2));
    quad += e1 * t1 + kap * kap * e2 * t2;
    quad += 2.0 * (m0 * q.mu_z1(i) * one_af1 + kap * m0 * q.mu_z2(i) * one_af2 +
                   kap * q.mu_z1(i) * q.mu_z2(i) * cross12);
    data -= 0.5 * quad;
  }
  const double mu0_sum = q.mu_z0.sum();
  const double cross0 = mu0_sum * mu0_sum - q.mu_z0.squaredNorm();
  data -= (q.var_z0.sum() + q.mu_z0.squaredNorm() + 0.5 * cross0) * one_A_one;
  terms.data = data;

  // Factor blocks.
  const double e_eta = q.e_eta();
  const double e_lambda = q.e_lambda();
  const double e_log_eta = digamma(q.g_eta.shape) - std::log(q.g_eta.rate);
  const double e_log_lambda = digamma(q.g_lambda.shape) - std::log(q.g_lambda.rate);
  const auto factor_term = [&](const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    const double m_p1 = (pen.p1 * cov).trace() + mu.dot(pen.p1 * mu);
    const double m_k = (pen.p2_pinv * cov).trace() + mu.dot(pen.p2_pinv * mu);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("elbo_terms: factor covariance not positive definite");
    }
    return 0.5 * (2.0 * e_log_eta + (p - 2) * e_log_lambda + pen.log_det_curvature) -
           0.5 * (e_eta * m_p1 + e_lambda * m_k) + 0.5 * log_det_from_llt(llt) + 0.5 * p;
  };
  terms.f1 = factor_term(q.mu_f1, q.cov_f1);
  terms.f2 = factor_term(q.mu_f2, q.cov_f2);

  // Weight blocks.
  const auto ig_log_moment = [](const GammaPair& g) {
    return std::log(g.rate) - digamma(g.shape);
  };
  const double el0 = ig_log_moment(q.ig_z0);
  for (int i = 0; i + 1 < n; ++i) {
    terms.z0 += -0.5 * el0 -
                0.5 * q.e_inv_var_z0() * (q.var_z0(i) + q.mu_z0(i) * q.mu_z0(i)) +
                0.5 * std::log(q.var_z0(i)) + 0.5;
  }
  const double el1 = ig_log_moment(q.ig_z1);
  for (int i = 0; i < n; ++i) {
    const double dev = q.mu_z1(i) - 1.0;
    terms.z1 += -0.5 * el1 - 0.5 * q.e_inv_var_z1() * (q.var_z1(i) + dev * dev) +
                0.5 * std::log(q.var_z1(i)) + 0.5;
  }
  const double el2 = ig_log_moment(q.ig_z2);
  for (int i = 0; i < n; ++i) {
    terms.z2 += -0.5 * el2 - 0.5 * q.e_inv_var_z2() * (q.var_z2(i) + q.mu_z2(i) * q.mu_z2(i)) +
                0.5 * std::log(q.var_z2(i)) + 0.5;
  }

  // Variance and smoothness hyper-blocks: prior-vs-q cross entropies of
  // matched inverse-gamma / gamma families.
  const auto ig_term = [&](const GammaPair& g) {
    const double e_log = std::log(g.rate) - digamma(g.shape);
    const double e_inv = g.shape / g.rate;
    return cfg.a * std::log(cfg.b) - std::lgamma(cfg.a) -
           (g.shape * std::log(g.rate) - std::lgamma(g.shape)) + (g.shape - cfg.a) * e_log +
           (g.rate - cfg.b) * e_inv;
  };
  terms.var_z0 = ig_term(q.ig_z0);
  terms.var_z1 = ig_term(q.ig_z1);
  terms.var_z2 = ig_term(q.ig_z2);

  const auto gamma_term = [&](const GammaPair& g, double e_log, double e_mean) {
    return cfg.c * std::log(cfg.d) - std::lgamma(cfg.c) -
           (g.shape * std::log(g.rate) - std::lgamma(g.shape)) + (cfg.c - g.shape) * e_log +
           (g.rate - cfg.d) * e_mean;
  };
  terms.eta = gamma_term(q.g_eta, e_log_eta, e_eta);
  terms.lambda = gamma_term(q.g_lambda, e_log_lambda, e_lambda);

  for (int i = 0; i < n; ++i) {
    terms.base_prior += log_base_prior(q.bases[i], pen_reduced, gamma_w_eff,
                                       cfg.lambda_w * (gamma_w_eff / cfg.gamma_w));
  }
  return terms;
}

double elbo(const QState& q, const Dataset& data, const ModelConfig& cfg,
            const PenaltySet& pen, const PenaltySet& pen_reduced) {
  const int n = q.n_functions();
  std::vector<Warp> warps(n);
  for (int i = 0; i < n; ++i) warps[i] = warp_from_base(q.bases[i], data.grid);
  const Eigen::MatrixXd warped = warp_all(data.values, warps, data.grid, cfg.interpolation);
  return elbo_terms(q, warped, cfg, pen, pen_reduced, cfg.gamma_w).total();
}

// ---------------------------------------------------------------------------
// Driver

namespace {

double schedule_multiplier(const std::vector<AnnealStage>& schedule, int iter) {
  double mult = 1.0;
  int best_start = -1;
  for (const AnnealStage& st : schedule) {
    if (st.start_iter <= iter && st.start_iter >= best_start) {
      best_start = st.start_iter;
      mult = st.multiplier;
    }
  }
  return mult;
}

}  // namespace

AvbResult run_avb(const Dataset& data, const ModelConfig& cfg, const AvbOptions& opts) {
  data.validate();
  cfg.validate();
  const PenaltySet pen = build_penalty_set(data.grid);
  const PenaltySet pen_reduced = build_penalty_set(data.grid.truncated());
  const int n = data.n_functions();

  AvbResult out;
  out.q = avb_init(data, cfg, pen, &out.diag.f2_init_fallback);
  QState& q = out.q;

  const bool fixed_schedule = !cfg.anneal_schedule.empty();
  double mult = fixed_schedule ? schedule_multiplier(cfg.anneal_schedule, 1) : 10.0;
  int stall_window_start = 1;
  double crit_window_start = neg_inf;

  Eigen::MatrixXd warped = data.values;  // identity warps at init
  double prev_crit = elbo_terms(q, warped, cfg, pen, pen_reduced, cfg.gamma_w * mult).total();
  out.diag.trace.push_back({0, prev_crit, cfg.gamma_w * mult, 0.0});
  crit_window_start = prev_crit;

  bool gamma_changed = true;  // suppress the convergence test on the first pass
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    const double gamma_eff = cfg.gamma_w * mult;

    const double max_dw =
        maximize_all_bases(q, data, cfg, pen, pen_reduced, gamma_eff, opts, opts.parallel_w);
    std::vector<Warp> warps(n);
    for (int i = 0; i < n; ++i) warps[i] = warp_from_base(q.bases[i], data.grid);
    warped = warp_all(data.values, warps, data.grid, cfg.interpolation);

    // Conjugate updates cycle until the criterion stalls: the weight and
    // factor blocks share a scale ridge along which single passes crawl, so
    // the cheap closed-form part is iterated to (near) convergence between
    // the expensive warp solves.
    double crit = elbo_terms(q, warped, cfg, pen, pen_reduced, gamma_eff).total();
    const int max_passes = std::max(1, opts.q_passes);
    for (int pass = 0; pass < max_passes; ++pass) {
      update_q_f1(q, warped, cfg, pen);
      update_q_f2(q, warped, cfg, pen);
      update_q_z(q, warped, cfg, pen);
      update_q_hyper(q, cfg, pen);
      const double next = elbo_terms(q, warped, cfg, pen, pen_reduced, gamma_eff).total();
      const bool stalled = std::abs(next - crit) < 0.01 * opts.tol * (1.0 + std::abs(next));
      crit = next;
      if (stalled) break;
    }
    out.diag.trace.push_back({iter, crit, gamma_eff, max_dw});
    out.diag.iterations = iter;

    const bool at_floor = fixed_schedule
                              ? mult == schedule_multiplier(cfg.anneal_schedule, opts.max_iters)
                              : mult == 1.0;
    if (!gamma_changed && at_floor &&
        std::abs(crit - prev_crit) < opts.tol * (1.0 + std::abs(prev_crit))) {
      out.diag.converged = true;
      prev_crit = crit;
      break;
    }
    prev_crit = crit;
    gamma_changed = false;

    // Annealing for the next iteration.
    if (fixed_schedule) {
      const double next = schedule_multiplier(cfg.anneal_schedule, iter + 1);
      if (next != mult) {
        mult = next;
        gamma_changed = true;
      }
    } else if (mult > 1.0) {
      const bool stalled = (iter - stall_window_start >= 10) &&
                           (crit - crit_window_start) < 1e-4 * (1.0 + std::abs(crit));
      if (stalled || iter >= opts.max_iters / 2) {
        mult = (mult > 2.0) ? 0.5 * mult : 1.0;
        gamma_changed = true;
        stall_window_start = iter;
        crit_window_start = crit;
      }
    }
    if (iter - stall_window_start >= 10) {
      stall_window_start = iter;
      crit_window_start = crit;
    }
  }

  // Post-processing: remove common drift, re-express factors in centred
  // time, and fix the reflection of the second factor pair.
  out.warps.resize(n);
  for (int i = 0; i < n; ++i) out.warps[i] = warp_from_base(q.bases[i], data.grid);
  if (opts.center_warps) {
    const Warp g_inv = mean_warp_center(out.warps, q.bases, data.grid);
    q.mu_f1 = apply_warp(q.mu_f1, g_inv, data.grid, cfg.interpolation);
    q.mu_f2 = apply_warp(q.mu_f2, g_inv, data.grid, cfg.interpolation);
  }
  int imax = 0;
  q.mu_f2.cwiseAbs().maxCoeff(&imax);
  if (q.mu_f2(imax) < 0.0) {
    q.mu_f2 = -q.mu_f2;
    q.mu_z2 = -q.mu_z2;
  }
  return out;
}

}  // namespace fdareg
