#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace fdareg {

// Digamma function for positive arguments: recurrence up to x >= 8, then the
// asymptotic series in 1/x^2 (Bernoulli coefficients through order 14).
double digamma(double x);

// Log-density of N(mean, prec^-1) evaluated at x given log|prec|.
double log_mvn_prec(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& prec, double log_det_prec);

double log_gamma_pdf(double x, double shape, double rate);
double log_inv_gamma_pdf(double x, double shape, double rate);
double log_normal_pdf(double x, double mean, double var);

// Stateful random stream: one engine per chain keeps every draw reproducible
// from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }
  // X ~ InvGamma(shape, rate)  <=>  1/X ~ Gamma(shape, rate).
  double inv_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }

  Eigen::VectorXd std_normal(int n) {
    Eigen::VectorXd z(n);
    for (int k = 0; k < n; ++k) z(k) = normal();
    return z;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Draw from N(prec^-1 * linear, prec^-1) using one Cholesky factorization.
Eigen::VectorXd mvn_draw_from_precision(const Eigen::MatrixXd& prec,
                                        const Eigen::VectorXd& linear, Rng& rng);

// Draw from N(mean, cov) via the Cholesky factor of cov.
Eigen::VectorXd mvn_draw_from_covariance(const Eigen::MatrixXd& cov,
                                         const Eigen::VectorXd& mean, Rng& rng);

}  // namespace fdareg
