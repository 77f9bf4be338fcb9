#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdn/imaging.hpp"

namespace tdn {

struct PatchOrigin {
  std::size_t image = 0;
  Location loc;
};

/// Immutable collection of clean reference patches, stored column-wise.
class Database {
 public:
  /// Origins may be empty (e.g. a database restored from the flat cache);
  /// otherwise there is one origin per column.
  Database(int patch_size, Eigen::MatrixXd patches, std::vector<PatchOrigin> origins = {});

  int patch_size() const { return patch_size_; }
  int dim() const { return static_cast<int>(patches_.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(patches_.cols()); }

  const Eigen::MatrixXd& patches() const { return patches_; }
  auto patch(std::size_t j) const { return patches_.col(static_cast<Eigen::Index>(j)); }
  const std::vector<PatchOrigin>& origins() const { return origins_; }
  bool has_origins() const { return !origins_.empty(); }

  /// Subset of columns, in the given order.
  Database select(std::span<const std::size_t> indices) const;

 private:
  int patch_size_;
  Eigen::MatrixXd patches_;
  std::vector<PatchOrigin> origins_;
};

struct Neighbor {
  std::size_t index = 0;  // database column
  double distance = 0.0;  // ||q - p_j||_2
  double score = 0.0;     // selection objective entry (== distance for plain kNN)
};

/// Linear patch-selection problem: minimize (c + tau * penalty)^T x subject to
/// 1^T x = k, 0 <= x <= 1. The penalty is either the row sums of the
/// cross-distance matrix B, or the first-pass distances e.
struct SelectionProblem {
  Eigen::VectorXd c;
  Eigen::MatrixXd B;  // empty unless cross-similarity mode
  Eigen::VectorXd e;  // empty unless first-pass mode
  double tau = 0.0;
  int k = 1;

  Eigen::VectorXd scores() const;
};

/// Positions (into the problem vectors) of the optimal vertex: the k smallest
/// scores, ties going to the lower tie_key (defaults to the position).
std::vector<std::size_t> solve_selection(const SelectionProblem& problem,
                                         std::span<const std::size_t> tie_keys = {});

struct PatchWeights {
  Eigen::VectorXd w;
  double h = 0.0;
};

Database build_database(std::span<const Image> images, int patch_size, int stride);

/// The k nearest patches by Euclidean distance, ascending; ties by lower index.
std::vector<Neighbor> knn(const Database& db, const Patch& q, int k);

/// Cross-similarity refinement over the m nearest candidates:
/// score_j = c_j + tau * sum_i B_ij.
std::vector<Neighbor> refine_cross_similarity(const Database& db, const Patch& q, int pool_size,
                                              int k, double tau);

/// First-pass refinement over the m nearest candidates:
/// score_j = c_j + tau * ||pbar - p_j||.
std::vector<Neighbor> refine_first_pass(const Database& db, const Patch& q, const Patch& pbar,
                                        int pool_size, int k, double tau);

/// w_j proportional to exp(-||q - p_j||^2 / h^2), normalized to sum 1.
PatchWeights compute_weights(const Patch& q, const Eigen::MatrixXd& selected, double h);

/// Mean over all stride-1 patches of `clean` of min_j ||p_i - p_j|| / sqrt(d).
double database_quality(const Database& db, const Image& clean, int patch_size);

/// Default tau for first-pass refinement: 0.01 below sigma 30, else 1.
double default_tau_first_pass(double sigma);
/// Default tau for cross-similarity refinement: 1/(200 m) below sigma 30, else 1/(2 m).
double default_tau_cross_similarity(double sigma, int pool_size);

// Flat cache: 8-byte magic, u32 patch_size, u64 n_total, then n_total * d
// little-endian IEEE doubles (patch-major). Origins are not stored.
std::vector<std::uint8_t> serialize_database(const Database& db);
Database deserialize_database(std::span<const std::uint8_t> bytes);
void save_database(const Database& db, const std::string& path);
Database load_database(const std::string& path);

/// All *.pgm files in a directory, sorted by file name.
std::vector<std::string> list_pgm_files(const std::string& dir);

}  // namespace tdn
