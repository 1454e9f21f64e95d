#include "fdareg/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fdareg/stats.hpp"

namespace fdareg {

void ModelConfig::validate() const {
  if (!(gamma1 > 0.0) || !(gamma2 > 0.0) || !(gamma1 > gamma2)) {
    throw std::invalid_argument("ModelConfig: need gamma1 > gamma2 > 0");
  }
  if (!(gamma_w > 0.0) || !(lambda_w > 0.0)) {
    throw std::invalid_argument("ModelConfig: warp weights must be positive");
  }
  if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0) || !(d > 0.0)) {
    throw std::invalid_argument("ModelConfig: hyperprior parameters must be positive");
  }
  for (const AnnealStage& st : anneal_schedule) {
    if (!(st.multiplier > 0.0) || st.start_iter < 0) {
      throw std::invalid_argument("ModelConfig: invalid annealing stage");
    }
  }
}

std::string ModelConfig::to_json_string() const {
  nlohmann::json j;
  j["gamma1"] = gamma1;
  j["gamma2"] = gamma2;
  j["gamma_w"] = gamma_w;
  j["lambda_w"] = lambda_w;
  j["a"] = a;
  j["b"] = b;
  j["c"] = c;
  j["d"] = d;
  j["interpolation"] =
      interpolation == Interpolant::Kind::monotone_cubic ? "monotone_cubic" : "linear";
  nlohmann::json stages = nlohmann::json::array();
  for (const AnnealStage& st : anneal_schedule) {
    stages.push_back({{"multiplier", st.multiplier}, {"start_iter", st.start_iter}});
  }
  j["anneal_schedule"] = stages;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig cfg;
  cfg.gamma1 = j.value("gamma1", cfg.gamma1);
  cfg.gamma2 = j.value("gamma2", cfg.gamma2);
  cfg.gamma_w = j.value("gamma_w", cfg.gamma_w);
  cfg.lambda_w = j.value("lambda_w", cfg.lambda_w);
  cfg.a = j.value("a", cfg.a);
  cfg.b = j.value("b", cfg.b);
  cfg.c = j.value("c", cfg.c);
  cfg.d = j.value("d", cfg.d);
  if (j.contains("interpolation")) {
    const std::string kind = j["interpolation"].get<std::string>();
    if (kind == "monotone_cubic") {
      cfg.interpolation = Interpolant::Kind::monotone_cubic;
    } else if (kind == "linear") {
      cfg.interpolation = Interpolant::Kind::linear;
    } else {
      throw std::invalid_argument("ModelConfig: unknown interpolation '" + kind + "'");
    }
  }
  if (j.contains("anneal_schedule")) {
    for (const auto& st : j["anneal_schedule"]) {
      cfg.anneal_schedule.push_back(
          {st.at("multiplier").get<double>(), st.at("start_iter").get<int>()});
    }
  }
  cfg.validate();
  return cfg;
}

void Dataset::validate() const {
  if (values.rows() != grid.size()) {
    throw std::invalid_argument("Dataset: row count must match the grid");
  }
  if (values.cols() < 2) {
    throw std::invalid_argument("Dataset: need at least 2 functions");
  }
  if (!values.allFinite()) {
    throw std::invalid_argument("Dataset: values must be finite");
  }
}

Eigen::VectorXd LatentState::z0_full() const {
  const int n = n_functions();
  Eigen::VectorXd z(n);
  z.head(n - 1) = z0_free;
  z(n - 1) = -z0_free.sum();
  return z;
}

LatentState LatentState::zeros(int p, int n) {
  LatentState s;
  s.f1 = Eigen::VectorXd::Zero(p);
  s.f2 = Eigen::VectorXd::Zero(p);
  s.z0_free = Eigen::VectorXd::Zero(n - 1);
  s.z1 = Eigen::VectorXd::Ones(n);
  s.z2 = Eigen::VectorXd::Zero(n);
  s.bases.assign(n, BaseFunction{Eigen::VectorXd::Zero(p - 1)});
  return s;
}

Eigen::VectorXd registered_mean(const LatentState& state, int i, const ModelConfig& cfg) {
  return state.z0(i) * Eigen::VectorXd::Ones(state.f1.size()) + state.z1(i) * state.f1 +
         cfg.kappa() * state.z2(i) * state.f2;
}

double data_loglik(const LatentState& state, const Eigen::MatrixXd& warped,
                   const ModelConfig& cfg, const PenaltySet& pen) {
  const int n = static_cast<int>(warped.cols());
  const double gs = cfg.gamma_sum();
  const int p = pen.size();
  // log|gs * sigma_inv| = p log gs + log|p1 + p2_pinv|; the affine block
  // contributes unit eigenvalues, so only the curvature eigenvalues remain.
  const double log_det_prec = p * std::log(gs) + pen.log_det_curvature;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd r = warped.col(i) - registered_mean(state, i, cfg);
    acc += -0.5 * p * std::log(2.0 * M_PI) + 0.5 * log_det_prec -
           0.5 * gs * r.dot(pen.sigma_inv * r);
  }
  return acc;
}

double log_joint(const LatentState& state, const Dataset& data, const ModelConfig& cfg,
                 const PenaltySet& pen, const PenaltySet& pen_reduced) {
  const int n = data.n_functions();
  std::vector<Warp> warps(n);
  for (int i = 0; i < n; ++i) warps[i] = warp_from_base(state.bases[i], data.grid);
  const Eigen::MatrixXd warped = warp_all(data.values, warps, data.grid, cfg.interpolation);

  double acc = data_loglik(state, warped, cfg, pen);
  for (int i = 0; i < n; ++i) {
    acc += log_base_prior(state.bases[i], pen_reduced, cfg.gamma_w, cfg.lambda_w);
  }
  for (int i = 0; i + 1 < n; ++i) acc += log_normal_pdf(state.z0_free(i), 0.0, state.var_z0);
  for (int i = 0; i < n; ++i) acc += log_normal_pdf(state.z1(i), 1.0, state.var_z1);
  for (int i = 0; i < n; ++i) acc += log_normal_pdf(state.z2(i), 0.0, state.var_z2);
  acc += log_inv_gamma_pdf(state.var_z0, cfg.a, cfg.b);
  acc += log_inv_gamma_pdf(state.var_z1, cfg.a, cfg.b);
  acc += log_inv_gamma_pdf(state.var_z2, cfg.a, cfg.b);

  const FactorCov fc = sigma_f(pen, state.eta_f, state.lambda_f);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(pen.size());
  acc += log_mvn_prec(state.f1, zero, fc.prec, fc.log_det_prec);
  acc += log_mvn_prec(state.f2, zero, fc.prec, fc.log_det_prec);
  acc += log_gamma_pdf(state.eta_f, cfg.c, cfg.d);
  acc += log_gamma_pdf(state.lambda_f, cfg.c, cfg.d);
  return acc;
}

}  // namespace fdareg
