#include "tdn/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <Eigen/QR>
#include <json.hpp>

#include "tdn/errors.hpp"

namespace tdn::oracles {

namespace {

// splitmix64 step; used to give every check and instance its own stream.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd uniform_vector(int d, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = u(rng);
  return v;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

VerificationResult finish(std::string name, double measured, double reference, double tolerance,
                          long trials, std::uint64_t seed, bool relative = false) {
  VerificationResult r{std::move(name), measured, reference, tolerance, relative, false, trials, seed};
  const double bound = relative ? tolerance * std::abs(reference) : tolerance;
  r.pass = std::isfinite(measured) && std::abs(measured - reference) <= bound;
  return r;
}

// Orthonormal matrix whose first column is p / ||p|| (Householder reflection).
Eigen::MatrixXd basis_aligned_with(const Eigen::VectorXd& p) {
  const Eigen::Index d = p.size();
  Eigen::VectorXd v = -p.normalized();
  v(0) += 1.0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
  const double vv = v.squaredNorm();
  if (vv > 1e-300) h -= 2.0 * v * v.transpose() / vv;
  return h;
}

}  // namespace

double mse_monte_carlo(const Eigen::MatrixXd& basis, const Eigen::VectorXd& lambda,
                       const Eigen::VectorXd& p, double sigma, long trials, std::uint64_t seed) {
  if (trials < 1) throw ParameterError("Monte Carlo needs at least one trial");
  const Eigen::MatrixXd a = basis * lambda.asDiagonal() * basis.transpose();
  const Eigen::VectorXd bias = a * p - p;
  // Without noise every draw is identical.
  if (sigma == 0.0) return bias.squaredNorm();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  Eigen::VectorXd eta(p.size());
  Eigen::VectorXd err(p.size());
  double total = 0.0;
  for (long t = 0; t < trials; ++t) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = gauss(rng);
    err.noalias() = a * eta;
    err += bias;
    total += err.squaredNorm();
  }
  return total / static_cast<double>(trials);
}

double mse_analytic(const Eigen::MatrixXd& basis, const Eigen::VectorXd& lambda,
                  const Eigen::VectorXd& p, double sigma) {
  const Eigen::VectorXd proj = basis.transpose() * p;
  double total = 0.0;
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    const double keep = 1.0 - lambda(i);
    total += keep * keep * proj(i) * proj(i) + sigma * sigma * lambda(i) * lambda(i);
  }
  return total;
}

double bmse_analytic(const Eigen::VectorXd& g, const Eigen::VectorXd& lambda, double sigma) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double keep = 1.0 - lambda(i);
    total += keep * keep * g(i) + sigma * sigma * lambda(i) * lambda(i);
  }
  return total;
}

double grid_argmin(const std::function<double(double)>& f, double grid_step) {
  if (!(grid_step > 0.0) || grid_step > 1.0) throw ParameterError("grid step must be in (0, 1]");
  const auto steps = static_cast<long>(std::llround(1.0 / grid_step));
  double best_x = 0.0;
  double best_f = f(0.0);
  for (long j = 1; j <= steps; ++j) {
    const double x = std::min(1.0, static_cast<double>(j) * grid_step);
    const double v = f(x);
    if (v < best_f) {
      best_f = v;
      best_x = x;
    }
  }
  return best_x;
}

double grid_min_lambda(double s, double sigma, double gamma, PenaltyNorm norm, double grid_step) {
  const double total = s + sigma * sigma;
  const double target = total > 0.0 ? s / total : 0.0;
  return grid_argmin(
      [&](double lambda) {
        const double pen = norm == PenaltyNorm::l1 ? std::abs(lambda) : (lambda != 0.0 ? 1.0 : 0.0);
        return total * (lambda - target) * (lambda - target) + gamma * pen;
      },
      grid_step);
}

Eigen::MatrixXd random_orthonormal(int d, std::uint64_t seed) {
  if (d < 1) throw ParameterError("dimension must be >= 1");
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fixing the signs of diag(R) makes the distribution Haar.
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

// ---------------------------------------------------------------------------
// Battery

VerificationResult check_mse_decomposition(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int instances = 20;
  constexpr long trials = 200000;
  const double sigmas[] = {10.0, 50.0, 100.0};
  double worst = 0.0;
  long total_trials = 0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const Eigen::MatrixXd u = random_orthonormal(d, derive(seed, 1000 + inst));
    const Eigen::VectorXd lambda = uniform_vector(d, 0.0, 1.0, rng);
    const Eigen::VectorXd p = uniform_vector(d, 0.0, 255.0, rng);
    for (int si = 0; si < 3; ++si) {
      const double expected = mse_analytic(u, lambda, p, sigmas[si]);
      const double measured =
          mse_monte_carlo(u, lambda, p, sigmas[si], trials, derive(seed, 5000 + 3 * inst + si));
      worst = std::max(worst, std::abs(measured - expected) / expected);
      total_trials += trials;
    }
  }
  return finish("mse_monte_carlo_rel_error", worst, 0.0, 0.01, total_trials, seed);
}

VerificationResult check_oracle_dominance(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int instances = 20;
  constexpr int perturbations = 1000;
  double worst_violation = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const Eigen::VectorXd p = uniform_vector(d, 0.0, 255.0, rng);
    const double sigma = uniform(rng, 5.0, 100.0);
    const Eigen::MatrixXd u_opt = basis_aligned_with(p);
    const Eigen::VectorXd lambda_opt = spectrum_oracle(u_opt, p, sigma);
    const double best = mse_analytic(u_opt, lambda_opt, p, sigma);
    for (int t = 0; t < perturbations; ++t) {
      Eigen::MatrixXd u;
      Eigen::VectorXd lambda;
      if (t % 2 == 0) {
        u = random_orthonormal(d, derive(seed, 100000 * (inst + 1) + t));
        lambda = uniform_vector(d, 0.0, 1.0, rng);
      } else {
        // Small rotation of the optimum plus jittered coefficients.
        const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(d, d) + 0.05 * gaussian_matrix(d, d, rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int i = 0; i < d; ++i)
          if (r(i, i) < 0.0) q.col(i) = -q.col(i);
        u = u_opt * q;
        lambda = (lambda_opt + 0.05 * gaussian_matrix(d, 1, rng)).cwiseMax(0.0).cwiseMin(1.0);
      }
      const double value = mse_analytic(u, lambda, p, sigma);
      worst_violation = std::max(worst_violation, (best - value) / best);
    }
  }
  return finish("oracle_dominance_violation", worst_violation, 0.0, 1e-9,
                static_cast<long>(instances) * perturbations, seed);
}

VerificationResult check_oracle_grid(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int instances = 20;
  constexpr double step = 1e-4;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const Eigen::VectorXd p = uniform_vector(d, 0.0, 255.0, rng);
    const double sigma = uniform(rng, 5.0, 100.0);
    const Eigen::MatrixXd u = random_orthonormal(d, derive(seed, 1000 + inst));
    const Eigen::VectorXd lambda = spectrum_oracle(u, p, sigma);
    const Eigen::VectorXd proj = u.transpose() * p;
    for (int i = 0; i < d; ++i) {
      const double a2 = proj(i) * proj(i);
      const double grid = grid_argmin(
          [&](double l) { return (1.0 - l) * (1.0 - l) * a2 + sigma * sigma * l * l; }, step);
      worst = std::max(worst, std::abs(grid - lambda(i)));
    }
  }
  return finish("oracle_grid_lambda_deviation", worst, 0.0, step, instances * d, seed);
}

VerificationResult check_basis_optimality(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int k = 20;
  constexpr int instances = 20;
  constexpr int rotations = 1000;
  double worst_violation = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    PatchEnsemble ens;
    ens.patches = 40.0 * gaussian_matrix(d, k, rng);
    ens.patches.colwise() += uniform_vector(d, 0.0, 255.0, rng);
    ens.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    const Eigen::MatrixXd u = group_sparse_basis(ens).basis;
    const double ours = l12_norm(u.transpose() * ens.patches);
    double best_random = std::numeric_limits<double>::infinity();
    for (int t = 0; t < rotations; ++t) {
      const Eigen::MatrixXd r = random_orthonormal(d, derive(seed, 100000 * (inst + 1) + t));
      best_random = std::min(best_random, l12_norm(r.transpose() * ens.patches));
    }
    worst_violation = std::max(worst_violation, ours - best_random);
  }
  return finish("basis_l12_excess_over_random_bases", std::max(worst_violation, 0.0), 0.0, 1e-9,
                static_cast<long>(instances) * rotations, seed);
}

VerificationResult check_bayes_grid(std::uint64_t seed, const VerifyOptions& opts) {
  constexpr int pairs = 50;
  constexpr double step = 1e-4;
  double worst = 0.0;
  std::mt19937_64 rng(derive(seed, 0));
  for (int t = 0; t < pairs; ++t) {
    const double s = t % 10 == 0 ? 0.0 : std::pow(10.0, uniform(rng, -2.0, 3.7));
    const double sigma = uniform(rng, 1.0, 100.0);
    Eigen::VectorXd sv(1);
    sv(0) = s;
    const double closed = spectrum_bayes(sv, sigma)(0) + opts.bayes_offset;
    const double grid = grid_argmin(
        [&](double l) { return (1.0 - l) * (1.0 - l) * s + sigma * sigma * l * l; }, step);
    worst = std::max(worst, std::abs(grid - closed));
  }
  return finish("bayes_grid_lambda_deviation", worst, 0.0, step, pairs, seed);
}

VerificationResult check_bayes_monte_carlo(std::uint64_t seed, const VerifyOptions& opts) {
  constexpr int d = 8;
  constexpr int instances = 5;
  constexpr long trials = 200000;
  constexpr double step = 1e-3;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const Eigen::VectorXd mu = uniform_vector(d, 0.0, 255.0, rng);
    const Eigen::MatrixXd factor = uniform(rng, 5.0, 40.0) * gaussian_matrix(d, d, rng);
    const double sigma = uniform(rng, 10.0, 60.0);
    const Eigen::MatrixXd u = random_orthonormal(d, derive(seed, 1000 + inst));
    const Eigen::MatrixXd second_moment = mu * mu.transpose() + factor * factor.transpose();
    const Eigen::VectorXd g = (u.transpose() * second_moment * u).diagonal();
    Eigen::VectorXd lambda = spectrum_bayes(g, sigma);
    lambda.array() += opts.bayes_offset;

    // Sufficient statistics of x = U^T p and y = U^T q per coordinate.
    Eigen::VectorXd sxx = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sxy = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd syy = Eigen::VectorXd::Zero(d);
    std::mt19937_64 sampler(derive(seed, 2000 + inst));
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::VectorXd z(d), noise(d), p(d), x(d), y(d);
    for (long t = 0; t < trials; ++t) {
      for (int i = 0; i < d; ++i) z(i) = n01(sampler);
      for (int i = 0; i < d; ++i) noise(i) = sigma * n01(sampler);
      p.noalias() = factor * z;
      p += mu;
      x.noalias() = u.transpose() * p;
      y.noalias() = u.transpose() * noise;
      y += x;
      sxx.array() += x.array().square();
      sxy.array() += x.array() * y.array();
      syy.array() += y.array().square();
    }
    for (int i = 0; i < d; ++i) {
      const double grid = grid_argmin(
          [&](double l) { return (l * l * syy(i) - 2.0 * l * sxy(i) + sxx(i)) / trials; }, step);
      worst = std::max(worst, std::abs(grid - lambda(i)));
    }
  }
  return finish("bayes_monte_carlo_minimizer_deviation", worst, 0.0, 0.02,
                static_cast<long>(instances) * trials, seed);
}

VerificationResult check_prior_identity(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int instances = 50;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const int k = 1 + static_cast<int>(rng() % 40);
    PatchEnsemble ens;
    ens.patches = uniform(rng, 1.0, 60.0) * gaussian_matrix(d, k, rng);
    ens.patches.colwise() += uniform_vector(d, 0.0, 255.0, rng);
    ens.weights = uniform_vector(k, 0.01, 1.0, rng);
    ens.weights /= ens.weights.sum();
    const LocalPrior prior = local_prior(ens);
    const Eigen::MatrixXd direct = ens.patches * ens.weights.asDiagonal() * ens.patches.transpose();
    const Eigen::MatrixXd rebuilt = prior.mean * prior.mean.transpose() + prior.covariance;
    worst = std::max(worst, (rebuilt - direct).norm() / direct.norm());
  }
  return finish("prior_second_moment_identity_rel_frobenius", worst, 0.0, 1e-10, instances, seed);
}

VerificationResult check_rotated_moment_diagonal(std::uint64_t seed) {
  constexpr int d = 8;
  constexpr int instances = 50;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(derive(seed, inst));
    const int k = 1 + static_cast<int>(rng() % 40);
    PatchEnsemble ens;
    ens.patches = uniform(rng, 1.0, 60.0) * gaussian_matrix(d, k, rng);
    ens.patches.colwise() += uniform_vector(d, 0.0, 255.0, rng);
    ens.weights = uniform_vector(k, 0.01, 1.0, rng);
    ens.weights /= ens.weights.sum();
    const LocalPrior prior = local_prior(ens);
    const Eigenbasis eig = group_sparse_basis(ens);
    const Eigen::VectorXd g =
        (eig.basis.transpose() * (prior.mean * prior.mean.transpose() + prior.covariance) * eig.basis)
            .diagonal();
    const double scale = eig.eigenvalues(0);
    worst = std::max(worst, (g - eig.eigenvalues).cwiseAbs().maxCoeff() / scale);
  }
  return finish("rotated_moment_diag_equals_eigenvalues", worst, 0.0, 1e-10, instances, seed);
}

VerificationResult check_penalized_grid(std::uint64_t seed) {
  constexpr int triples = 100;
  constexpr double step = 1e-4;
  constexpr double eps = 1e-3;
  double worst = 0.0;
  long checks = 0;
  std::mt19937_64 rng(derive(seed, 0));
  auto check = [&](double s, double sigma, double gamma, PenaltyNorm norm) {
    Eigen::VectorXd sv(1);
    sv(0) = s;
    const double closed = spectrum_penalized(sv, sigma, gamma, norm)(0);
    const double grid = grid_min_lambda(s, sigma, gamma, norm, step);
    worst = std::max(worst, std::abs(grid - closed));
    ++checks;
  };
  for (int t = 0; t < triples; ++t) {
    const double s = std::pow(10.0, uniform(rng, -2.0, 3.7));
    const double sigma = uniform(rng, 5.0, 100.0);
    const double threshold0 = s * s / (s + sigma * sigma);
    switch (t % 5) {
      case 0:  // l1 boundary s = gamma / 2
        check(s, sigma, 2.0 * s, PenaltyNorm::l1);
        check(s, sigma, 2.0 * s, PenaltyNorm::l0);
        break;
      case 1:  // l0 boundary from both sides
        check(s, sigma, threshold0 + eps, PenaltyNorm::l0);
        check(s, sigma, std::max(threshold0 - eps, 0.0), PenaltyNorm::l0);
        break;
      default: {
        check(s, sigma, uniform(rng, 0.0, 4.0 * s), PenaltyNorm::l1);
        check(s, sigma, uniform(rng, 0.0, 2.0 * threshold0), PenaltyNorm::l0);
      }
    }
  }
  return finish("penalized_grid_lambda_deviation", worst, 0.0, step, checks, seed);
}

std::vector<VerificationResult> verify_all(std::uint64_t seed, const VerifyOptions& opts) {
  return {
      check_mse_decomposition(derive(seed, 101)),
      check_oracle_dominance(derive(seed, 201)),
      check_oracle_grid(derive(seed, 202)),
      check_basis_optimality(derive(seed, 301)),
      check_bayes_grid(derive(seed, 401), opts),
      check_bayes_monte_carlo(derive(seed, 402), opts),
      check_prior_identity(derive(seed, 501)),
      check_rotated_moment_diagonal(derive(seed, 502)),
      check_penalized_grid(derive(seed, 601)),
  };
}

std::string results_to_json(const std::vector<VerificationResult>& results) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json item;
    item["name"] = r.name;
    item["measured"] = r.measured;
    item["reference"] = r.reference;
    item["tolerance"] = r.tolerance;
    item["tolerance_mode"] = r.relative ? "relative" : "absolute";
    item["pass"] = r.pass;
    item["trials"] = r.trials;
    item["seed"] = r.seed;
    out.push_back(std::move(item));
  }
  return out.dump(2) + "\n";
}

std::string results_to_table(const std::vector<VerificationResult>& results) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-46s %14s %12s %10s  %s\n", "check", "measured", "reference",
                "tolerance", "result");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-46s %14.6e %12.4e %10.2e  %s\n", r.name.c_str(), r.measured,
                  r.reference, r.tolerance, r.pass ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace tdn::oracles
