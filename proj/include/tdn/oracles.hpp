#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdn/filter.hpp"

namespace tdn::oracles {

/// One numerical check. pass <=> |measured - reference| <= tolerance, where
/// the tolerance is scaled by |reference| when `relative` is set.
struct VerificationResult {
  std::string name;
  double measured = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool relative = false;
  bool pass = false;
  long trials = 0;
  std::uint64_t seed = 0;
};

/// (1/T) sum_t ||U diag(lambda) U^T (p + eta_t) - p||^2, eta_t ~ N(0, sigma^2 I).
double mse_monte_carlo(const Eigen::MatrixXd& basis, const Eigen::VectorXd& lambda,
                       const Eigen::VectorXd& p, double sigma, long trials, std::uint64_t seed);

/// sum_i (1 - lambda_i)^2 (u_i^T p)^2 + sigma^2 lambda_i^2.
double mse_analytic(const Eigen::MatrixXd& basis, const Eigen::VectorXd& lambda,
                  const Eigen::VectorXd& p, double sigma);

/// sum_i (1 - lambda_i)^2 g_i + sigma^2 lambda_i^2.
double bmse_analytic(const Eigen::VectorXd& g, const Eigen::VectorXd& lambda, double sigma);

/// First minimizer of f over the grid {0, step, 2 step, ..., 1}.
double grid_argmin(const std::function<double(double)>& f, double grid_step);

/// Grid minimizer of (s + sigma^2)(lambda - s/(s + sigma^2))^2 + gamma pen(lambda)
/// with pen = |lambda| (l1) or [lambda != 0] (l0).
double grid_min_lambda(double s, double sigma, double gamma, PenaltyNorm norm, double grid_step);

/// Haar-distributed orthonormal matrix from the QR factorization of a seeded
/// Gaussian matrix.
Eigen::MatrixXd random_orthonormal(int d, std::uint64_t seed);

/// Fault injection for testing the battery itself.
struct VerifyOptions {
  double bayes_offset = 0.0;  // added to spectrum_bayes before it is checked
};

VerificationResult check_mse_decomposition(std::uint64_t seed);
VerificationResult check_oracle_dominance(std::uint64_t seed);
VerificationResult check_oracle_grid(std::uint64_t seed);
VerificationResult check_basis_optimality(std::uint64_t seed);
VerificationResult check_bayes_grid(std::uint64_t seed, const VerifyOptions& opts = {});
VerificationResult check_bayes_monte_carlo(std::uint64_t seed, const VerifyOptions& opts = {});
VerificationResult check_prior_identity(std::uint64_t seed);
VerificationResult check_rotated_moment_diagonal(std::uint64_t seed);
VerificationResult check_penalized_grid(std::uint64_t seed);

std::vector<VerificationResult> verify_all(std::uint64_t seed, const VerifyOptions& opts = {});

std::string results_to_json(const std::vector<VerificationResult>& results);
std::string results_to_table(const std::vector<VerificationResult>& results);

}  // namespace tdn::oracles
