#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "tdn/imaging.hpp"

namespace tdn {

/// Selected reference patches (columns), their similarity weights (sum 1),
/// and optional per-pixel spatial weights (empty means identity).
struct PatchEnsemble {
  Eigen::MatrixXd patches;
  Eigen::VectorXd weights;
  Eigen::VectorXd spatial_weights;

  int dim() const { return static_cast<int>(patches.rows()); }
  int count() const { return static_cast<int>(patches.cols()); }
  void validate() const;
};

/// Orthonormal basis (columns) with eigenvalues in descending order.
struct Eigenbasis {
  Eigen::MatrixXd basis;
  Eigen::VectorXd eigenvalues;
};

/// The denoising operator U diag(lambda) U^T.
struct SpectralFilter {
  Eigen::MatrixXd basis;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd shrinkage;

  Eigen::MatrixXd matrix() const;
};

struct LocalPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

enum class ShrinkageRule { oracle, bayes, bayes_l1, bayes_l0, bm3d_pilot, lpg };

enum class PenaltyNorm { l0 = 0, l1 = 1 };

std::string_view to_string(ShrinkageRule rule);
ShrinkageRule parse_shrinkage_rule(std::string_view name);

struct ShrinkageConfig {
  ShrinkageRule rule = ShrinkageRule::bayes;
  double sigma = 0.0;
  double gamma = 0.02;
};

/// Sum of the Euclidean norms of the rows.
double l12_norm(const Eigen::MatrixXd& x);

/// Eigendecomposition of Ws^{1/2} P W P^T Ws^{1/2}: the basis minimizing the
/// row-wise l1,2 norm of the weighted ensemble. Eigenvalues are sorted
/// descending and clamped at zero; each eigenvector is signed so its
/// largest-magnitude entry is positive.
Eigenbasis group_sparse_basis(const PatchEnsemble& ens);

/// Weighted mean and covariance of the ensemble.
LocalPrior local_prior(const PatchEnsemble& ens);

// Spectral shrinkage rules. All return lambda in basis-column order.

/// (u_i^T p)^2 / ((u_i^T p)^2 + sigma^2), with the true patch p.
Eigen::VectorXd spectrum_oracle(const Eigen::MatrixXd& basis, const Patch& truth, double sigma);
/// s_i / (s_i + sigma^2).
Eigen::VectorXd spectrum_bayes(const Eigen::VectorXd& eigenvalues, double sigma);
/// l1: max((s_i - gamma/2) / (s_i + sigma^2), 0);
/// l0: s_i / (s_i + sigma^2) if s_i^2 / (s_i + sigma^2) > gamma, else 0.
Eigen::VectorXd spectrum_penalized(const Eigen::VectorXd& eigenvalues, double sigma, double gamma,
                                   PenaltyNorm norm);
/// Oracle formula evaluated at a pilot estimate.
Eigen::VectorXd spectrum_bm3d_pilot(const Eigen::MatrixXd& basis, const Patch& pilot, double sigma);
/// ((u_i^T q)^2 - sigma^2) / (u_i^T q)^2 clamped to [0, 1].
Eigen::VectorXd spectrum_lpg(const Eigen::MatrixXd& basis, const Patch& noisy, double sigma);

/// Inputs a shrinkage rule may need beyond the eigenbasis.
struct ShrinkageInputs {
  const Patch* noisy = nullptr;
  const Patch* pilot = nullptr;
  const Patch* truth = nullptr;
};

/// Dispatches on cfg.rule. Throws ParameterError if a required input is missing.
Eigen::VectorXd compute_shrinkage(const ShrinkageConfig& cfg, const Eigenbasis& eig,
                                  const ShrinkageInputs& inputs);

Patch apply_filter(const SpectralFilter& f, const Patch& q);

}  // namespace tdn
