#include "fdareg/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdareg {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("digamma: argument must be positive");
  }
  double acc = 0.0;
  while (x < 8.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  // psi(x) ~ ln x - 1/(2x) - sum B_{2k}/(2k x^{2k}).
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = inv2 * (1.0 / 12.0 -
                  inv2 * (1.0 / 120.0 -
                  inv2 * (1.0 / 252.0 -
                  inv2 * (1.0 / 240.0 -
                  inv2 * (1.0 / 132.0 -
                  inv2 * (691.0 / 32760.0 -
                  inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

double log_mvn_prec(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& prec, double log_det_prec) {
  const Eigen::VectorXd r = x - mean;
  const double quad = r.dot(prec * r);
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI) + 0.5 * log_det_prec -
         0.5 * quad;
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_inv_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * r * r / var;
}

Eigen::VectorXd mvn_draw_from_precision(const Eigen::MatrixXd& prec,
                                        const Eigen::VectorXd& linear, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("mvn_draw_from_precision: precision not positive definite");
  }
  const Eigen::VectorXd mean = llt.solve(linear);
  // prec = L L^T  =>  x = mean + L^-T z has covariance prec^-1.
  const Eigen::VectorXd z = rng.std_normal(static_cast<int>(linear.size()));
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd mvn_draw_from_covariance(const Eigen::MatrixXd& cov,
                                         const Eigen::VectorXd& mean, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("mvn_draw_from_covariance: covariance not positive definite");
  }
  const Eigen::VectorXd z = rng.std_normal(static_cast<int>(mean.size()));
  return mean + llt.matrixL() * z;
}

}  // namespace fdareg
