#include "tdn/filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "tdn/errors.hpp"

namespace tdn {

namespace {

constexpr std::array<std::pair<ShrinkageRule, std::string_view>, 6> kRuleNames{{
    {ShrinkageRule::oracle, "oracle"},
    {ShrinkageRule::bayes, "bayes"},
    {ShrinkageRule::bayes_l1, "bayes_l1"},
    {ShrinkageRule::bayes_l0, "bayes_l0"},
    {ShrinkageRule::bm3d_pilot, "bm3d_pilot"},
    {ShrinkageRule::lpg, "lpg"},
}};

void require_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be finite and >= 0");
}

void require_basis(const Eigen::MatrixXd& basis, const Patch& v) {
  if (basis.rows() != basis.cols()) throw DimensionError("basis must be square");
  if (basis.rows() != v.size())
    throw DimensionError("patch dimension " + std::to_string(v.size()) +
                         " does not match basis dimension " + std::to_string(basis.rows()));
}

// a / (a + sigma^2) with the 0/0 case mapped to 0.
double wiener(double energy, double sigma2) {
  const double denom = energy + sigma2;
  return denom > 0.0 ? energy / denom : 0.0;
}

}  // namespace

std::string_view to_string(ShrinkageRule rule) {
  for (const auto& [r, name] : kRuleNames)
    if (r == rule) return name;
  return "unknown";
}

ShrinkageRule parse_shrinkage_rule(std::string_view name) {
  for (const auto& [r, n] : kRuleNames)
    if (n == name) return r;
  throw ParameterError("unknown shrinkage rule '" + std::string(name) + "'");
}

void PatchEnsemble::validate() const {
  if (patches.cols() < 1 || patches.rows() < 1) throw ParameterError("ensemble must be nonempty");
  if (weights.size() != patches.cols())
    throw DimensionError("ensemble needs one weight per patch");
  if ((weights.array() < 0.0).any()) throw ParameterError("ensemble weights must be >= 0");
  if (std::abs(weights.sum() - 1.0) > 1e-9) throw ParameterError("ensemble weights must sum to 1");
  if (spatial_weights.size() > 0) {
    if (spatial_weights.size() != patches.rows())
      throw DimensionError("spatial weights must have one entry per pixel");
    if ((spatial_weights.array() <= 0.0).any())
      throw ParameterError("spatial weights must be strictly positive");
  }
}

Eigen::MatrixXd SpectralFilter::matrix() const {
  return basis * shrinkage.asDiagonal() * basis.transpose();
}

double l12_norm(const Eigen::MatrixXd& x) { return x.rowwise().norm().sum(); }

Eigenbasis group_sparse_basis(const PatchEnsemble& ens) {
  ens.validate();
  Eigen::MatrixXd weighted = ens.patches * ens.weights.cwiseSqrt().asDiagonal();
  if (ens.spatial_weights.size() > 0)
    weighted = ens.spatial_weights.cwiseSqrt().asDiagonal() * weighted;
  Eigen::MatrixXd m = weighted * weighted.transpose();
  m = 0.5 * (m + m.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition did not converge");

  const Eigen::Index d = m.rows();
  Eigenbasis out{Eigen::MatrixXd(d, d), Eigen::VectorXd(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    // Eigen returns ascending eigenvalues.
    const Eigen::Index src = d - 1 - i;
    out.eigenvalues(i) = std::max(solver.eigenvalues()(src), 0.0);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    out.basis.col(i) = v;
  }
  return out;
}

LocalPrior local_prior(const PatchEnsemble& ens) {
  ens.validate();
  LocalPrior prior;
  prior.mean = ens.patches * ens.weights;
  const Eigen::MatrixXd centered = ens.patches.colwise() - prior.mean;
  prior.covariance = centered * ens.weights.asDiagonal() * centered.transpose();
  prior.covariance = 0.5 * (prior.covariance + prior.covariance.transpose()).eval();
  return prior;
}

Eigen::VectorXd spectrum_oracle(const Eigen::MatrixXd& basis, const Patch& truth, double sigma) {
  require_sigma(sigma);
  require_basis(basis, truth);
  const Eigen::VectorXd proj = basis.transpose() * truth;
  Eigen::VectorXd lambda(proj.size());
  for (Eigen::Index i = 0; i < proj.size(); ++i) lambda(i) = wiener(proj(i) * proj(i), sigma * sigma);
  return lambda;
}

Eigen::VectorXd spectrum_bayes(const Eigen::VectorXd& eigenvalues, double sigma) {
  require_sigma(sigma);
  Eigen::VectorXd lambda(eigenvalues.size());
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) < 0.0) throw ParameterError("eigenvalues must be >= 0");
    lambda(i) = wiener(eigenvalues(i), sigma * sigma);
  }
  return lambda;
}

Eigen::VectorXd spectrum_penalized(const Eigen::VectorXd& eigenvalues, double sigma, double gamma,
                                   PenaltyNorm norm) {
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be >= 0");
  Eigen::VectorXd lambda = spectrum_bayes(eigenvalues, sigma);
  if (gamma == 0.0) return lambda;
  const double sigma2 = sigma * sigma;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double s = eigenvalues(i);
    const double denom = s + sigma2;
    if (norm == PenaltyNorm::l1) {
      lambda(i) = denom > 0.0 ? std::max((s - gamma / 2.0) / denom, 0.0) : 0.0;
    } else if (!(denom > 0.0 && s * s / denom > gamma)) {
      lambda(i) = 0.0;
    }
  }
  return lambda;
}

Eigen::VectorXd spectrum_bm3d_pilot(const Eigen::MatrixXd& basis, const Patch& pilot, double sigma) {
  return spectrum_oracle(basis, pilot, sigma);
}

Eigen::VectorXd spectrum_lpg(const Eigen::MatrixXd& basis, const Patch& noisy, double sigma) {
  require_sigma(sigma);
  require_basis(basis, noisy);
  const Eigen::VectorXd proj = basis.transpose() * noisy;
  const double sigma2 = sigma * sigma;
  Eigen::VectorXd lambda(proj.size());
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    const double e = proj(i) * proj(i);
    lambda(i) = e > 0.0 ? std::clamp((e - sigma2) / e, 0.0, 1.0) : 0.0;
  }
  return lambda;
}

Eigen::VectorXd compute_shrinkage(const ShrinkageConfig& cfg, const Eigenbasis& eig,
                                  const ShrinkageInputs& inputs) {
  auto need = [&](const Patch* p, const char* what) -> const Patch& {
    if (p == nullptr)
      throw ParameterError(std::string("shrinkage rule '") + std::string(to_string(cfg.rule)) +
                           "' requires the " + what + " patch");
    return *p;
  };
  switch (cfg.rule) {
    case ShrinkageRule::oracle:
      return spectrum_oracle(eig.basis, need(inputs.truth, "true"), cfg.sigma);
    case ShrinkageRule::bayes:
      return spectrum_bayes(eig.eigenvalues, cfg.sigma);
    case ShrinkageRule::bayes_l1:
      return spectrum_penalized(eig.eigenvalues, cfg.sigma, cfg.gamma, PenaltyNorm::l1);
    case ShrinkageRule::bayes_l0:
      return spectrum_penalized(eig.eigenvalues, cfg.sigma, cfg.gamma, PenaltyNorm::l0);
    case ShrinkageRule::bm3d_pilot:
      return spectrum_bm3d_pilot(eig.basis, need(inputs.pilot, "pilot"), cfg.sigma);
    case ShrinkageRule::lpg:
      return spectrum_lpg(eig.basis, need(inputs.noisy, "noisy"), cfg.sigma);
  }
  throw ParameterError("unhandled shrinkage rule");
}

Patch apply_filter(const SpectralFilter& f, const Patch& q) {
  require_basis(f.basis, q);
  if (f.shrinkage.size() != q.size()) throw DimensionError("shrinkage length does not match patch");
  return f.basis * (f.shrinkage.asDiagonal() * (f.basis.transpose() * q));
}

}  // namespace tdn
