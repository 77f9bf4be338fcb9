#include "tdn/database.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "tdn/errors.hpp"

namespace tdn {

Database::Database(int patch_size, Eigen::MatrixXd patches, std::vector<PatchOrigin> origins)
    : patch_size_(patch_size), patches_(std::move(patches)), origins_(std::move(origins)) {
  if (patch_size_ < 1) throw ParameterError("patch size must be >= 1");
  if (patches_.rows() != static_cast<Eigen::Index>(patch_size_) * patch_size_)
    throw DimensionError("database rows must equal patch_size^2");
  if (patches_.cols() < 1) throw ParameterError("database must contain at least one patch");
  if (!origins_.empty() && origins_.size() != size())
    throw DimensionError("database origins do not match the number of patches");
  if (!patches_.allFinite()) throw ParameterError("database patches must be finite");
}

Database Database::select(std::span<const std::size_t> indices) const {
  Eigen::MatrixXd sub(patches_.rows(), static_cast<Eigen::Index>(indices.size()));
  std::vector<PatchOrigin> sub_origins;
  if (has_origins()) sub_origins.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ParameterError("database subset index out of range");
    sub.col(static_cast<Eigen::Index>(i)) = patch(indices[i]);
    if (has_origins()) sub_origins.push_back(origins_[indices[i]]);
  }
  return Database(patch_size_, std::move(sub), std::move(sub_origins));
}

// ---------------------------------------------------------------------------
// Selection

Eigen::VectorXd SelectionProblem::scores() const {
  Eigen::VectorXd s = c;
  if (B.size() > 0) {
    if (B.rows() != c.size() || B.cols() != c.size())
      throw DimensionError("cross-distance matrix must be n x n");
    s += tau * B.colwise().sum().transpose();
  }
  if (e.size() > 0) {
    if (e.size() != c.size()) throw DimensionError("first-pass distances must have length n");
    s += tau * e;
  }
  return s;
}

std::vector<std::size_t> solve_selection(const SelectionProblem& problem,
                                         std::span<const std::size_t> tie_keys) {
  const auto n = static_cast<std::size_t>(problem.c.size());
  if (problem.k < 1 || static_cast<std::size_t>(problem.k) > n)
    throw ParameterError("selection count k must satisfy 1 <= k <= n");
  if (!tie_keys.empty() && tie_keys.size() != n)
    throw DimensionError("tie keys must have length n");
  if (problem.tau < 0.0) throw ParameterError("tau must be >= 0");

  const Eigen::VectorXd s = problem.scores();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) { return tie_keys.empty() ? i : tie_keys[i]; };
  const auto k = static_cast<std::ptrdiff_t>(problem.k);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (s(a) != s(b)) return s(a) < s(b);
                      return key(a) < key(b);
                    });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

// ---------------------------------------------------------------------------
// Database construction and search

Database build_database(std::span<const Image> images, int patch_size, int stride) {
  if (images.empty()) throw ParameterError("cannot build a database from zero images");
  std::vector<PatchGrid> grids;
  std::size_t total = 0;
  for (const auto& img : images) {
    grids.push_back(plan_grid(img.width(), img.height(), patch_size, stride));
    total += grids.back().locations.size();
  }
  Eigen::MatrixXd patches(patch_size * patch_size, static_cast<Eigen::Index>(total));
  std::vector<PatchOrigin> origins;
  origins.reserve(total);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& loc : grids[i].locations) {
      patches.col(col++) = extract_patch(images[i], loc, patch_size);
      origins.push_back({i, loc});
    }
  }
  return Database(patch_size, std::move(patches), std::move(origins));
}

namespace {

void require_query(const Database& db, const Patch& q) {
  if (q.size() != db.dim())
    throw DimensionError("query patch has dimension " + std::to_string(q.size()) +
                         ", database has " + std::to_string(db.dim()));
}

}  // namespace

std::vector<Neighbor> knn(const Database& db, const Patch& q, int k) {
  require_query(db, q);
  if (k < 1 || static_cast<std::size_t>(k) > db.size())
    throw ParameterError("k = " + std::to_string(k) + " outside [1, " + std::to_string(db.size()) +
                         "]");
  const Eigen::VectorXd dist2 = (db.patches().colwise() - q).colwise().squaredNorm().transpose();
  std::vector<std::size_t> order(db.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const auto da = dist2(static_cast<Eigen::Index>(a));
                      const auto db2 = dist2(static_cast<Eigen::Index>(b));
                      return da != db2 ? da < db2 : a < b;
                    });
  std::vector<Neighbor> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double d = std::sqrt(dist2(static_cast<Eigen::Index>(order[i])));
    out[i] = {order[i], d, d};
  }
  return out;
}

namespace {

void check_pool(const Database& db, int pool_size, int k) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (k > pool_size)
    throw ParameterError("k = " + std::to_string(k) + " exceeds pool size " +
                         std::to_string(pool_size));
  if (static_cast<std::size_t>(pool_size) > db.size())
    throw ParameterError("pool size " + std::to_string(pool_size) + " exceeds database size " +
                         std::to_string(db.size()));
}

std::vector<Neighbor> pick(const std::vector<Neighbor>& pool, const SelectionProblem& problem) {
  std::vector<std::size_t> keys(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) keys[i] = pool[i].index;
  const auto chosen = solve_selection(problem, keys);
  const Eigen::VectorXd scores = problem.scores();
  std::vector<Neighbor> out;
  out.reserve(chosen.size());
  for (auto pos : chosen) {
    Neighbor n = pool[pos];
    n.score = scores(static_cast<Eigen::Index>(pos));
    out.push_back(n);
  }
  return out;
}

}  // namespace

std::vector<Neighbor> refine_cross_similarity(const Database& db, const Patch& q, int pool_size,
                                              int k, double tau) {
  check_pool(db, pool_size, k);
  const auto pool = knn(db, q, pool_size);
  const auto m = static_cast<Eigen::Index>(pool.size());
  SelectionProblem problem;
  problem.tau = tau;
  problem.k = k;
  problem.c.resize(m);
  problem.B = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    problem.c(i) = pool[i].distance;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double d = (db.patch(pool[i].index) - db.patch(pool[j].index)).norm();
      problem.B(i, j) = d;
      problem.B(j, i) = d;
    }
  }
  return pick(pool, problem);
}

std::vector<Neighbor> refine_first_pass(const Database& db, const Patch& q, const Patch& pbar,
                                        int pool_size, int k, double tau) {
  check_pool(db, pool_size, k);
  require_query(db, pbar);
  const auto pool = knn(db, q, pool_size);
  const auto m = static_cast<Eigen::Index>(pool.size());
  SelectionProblem problem;
  problem.tau = tau;
  problem.k = k;
  problem.c.resize(m);
  problem.e.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    problem.c(i) = pool[i].distance;
    problem.e(i) = (pbar - db.patch(pool[i].index)).norm();
  }
  return pick(pool, problem);
}

PatchWeights compute_weights(const Patch& q, const Eigen::MatrixXd& selected, double h) {
  if (!(h > 0.0)) throw ParameterError("bandwidth h must be > 0");
  if (selected.cols() < 1) throw ParameterError("weights need a nonempty selection");
  if (selected.rows() != q.size()) throw DimensionError("selected patches do not match query");
  const Eigen::VectorXd dist2 = (selected.colwise() - q).colwise().squaredNorm().transpose();
  // Shifting by the minimum leaves the normalized weights unchanged and keeps
  // the largest term at exp(0).
  const double base = dist2.minCoeff();
  Eigen::VectorXd w = ((base - dist2.array()) / (h * h)).exp().matrix();
  w /= w.sum();
  return {std::move(w), h};
}

double database_quality(const Database& db, const Image& clean, int patch_size) {
  if (patch_size != db.patch_size())
    throw DimensionError("patch size " + std::to_string(patch_size) +
                         " does not match database patch size " +
                         std::to_string(db.patch_size()));
  const auto grid = plan_grid(clean.width(), clean.height(), patch_size, 1);
  const auto m = static_cast<Eigen::Index>(grid.locations.size());
  const Eigen::Index d = db.dim();
  Eigen::MatrixXd queries(d, m);
  for (Eigen::Index i = 0; i < m; ++i)
    queries.col(i) = extract_patch(clean, grid.locations[static_cast<std::size_t>(i)], patch_size);

  const Eigen::MatrixXd& refs = db.patches();
  const Eigen::Index n = refs.cols();
  const Eigen::VectorXd ref_norm2 = refs.colwise().squaredNorm().transpose();
  const Eigen::VectorXd query_norm2 = queries.colwise().squaredNorm().transpose();
  const double max_ref_norm2 = ref_norm2.maxCoeff();

  // Blocked ||a||^2 + ||b||^2 - 2 a.b screening; entries within a roundoff
  // margin of the block minimum are re-evaluated exactly.
  Eigen::VectorXd best2 = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
  constexpr Eigen::Index kRefBlock = 2048;
  constexpr Eigen::Index kQueryBlock = 256;
  Eigen::MatrixXd gram;
  for (Eigen::Index q0 = 0; q0 < m; q0 += kQueryBlock) {
    const Eigen::Index qn = std::min(kQueryBlock, m - q0);
    for (Eigen::Index r0 = 0; r0 < n; r0 += kRefBlock) {
      const Eigen::Index rn = std::min(kRefBlock, n - r0);
      gram.noalias() = refs.middleCols(r0, rn).transpose() * queries.middleCols(q0, qn);
      for (Eigen::Index qi = 0; qi < qn; ++qi) {
        const Eigen::Index q = q0 + qi;
        const double margin = 1e-9 * (query_norm2(q) + max_ref_norm2) + 1e-12;
        auto approx = [&](Eigen::Index ri) {
          return ref_norm2(r0 + ri) + query_norm2(q) - 2.0 * gram(ri, qi);
        };
        double block_min = std::numeric_limits<double>::infinity();
        for (Eigen::Index ri = 0; ri < rn; ++ri) block_min = std::min(block_min, approx(ri));
        if (block_min - margin > best2(q)) continue;
        for (Eigen::Index ri = 0; ri < rn; ++ri) {
          if (approx(ri) <= block_min + margin) {
            const double exact = (refs.col(r0 + ri) - queries.col(q)).squaredNorm();
            best2(q) = std::min(best2(q), exact);
          }
        }
      }
    }
  }
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) total += std::sqrt(best2(i)) / sqrt_d;
  return total / static_cast<double>(m);
}

double default_tau_first_pass(double sigma) { return sigma < 30.0 ? 0.01 : 1.0; }

double default_tau_cross_similarity(double sigma, int pool_size) {
  if (pool_size < 1) throw ParameterError("pool size must be >= 1");
  return sigma < 30.0 ? 1.0 / (200.0 * pool_size) : 1.0 / (2.0 * pool_size);
}

// ---------------------------------------------------------------------------
// Flat cache

namespace {

constexpr char kCacheMagic[8] = {'T', 'D', 'N', 'P', 'D', 'B', '0', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[offset + i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

std::vector<std::uint8_t> serialize_database(const Database& db) {
  std::vector<std::uint8_t> out(std::begin(kCacheMagic), std::end(kCacheMagic));
  out.reserve(20 + db.size() * static_cast<std::size_t>(db.dim()) * 8);
  put_le(out, static_cast<std::uint32_t>(db.patch_size()));
  put_le(out, static_cast<std::uint64_t>(db.size()));
  const double* data = db.patches().data();
  for (Eigen::Index i = 0; i < db.patches().size(); ++i) put_le(out, data[i]);
  return out;
}

Database deserialize_database(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 8 + 4 + 8;
  if (bytes.size() < kHeader || !std::equal(std::begin(kCacheMagic), std::end(kCacheMagic),
                                            bytes.begin()))
    throw FormatError("not a patch database cache (bad magic)");
  const auto patch_size = get_le<std::uint32_t>(bytes, 8);
  const auto count = get_le<std::uint64_t>(bytes, 12);
  if (patch_size < 1 || patch_size > 4096 || count < 1)
    throw FormatError("patch database cache: invalid header");
  const std::uint64_t d = static_cast<std::uint64_t>(patch_size) * patch_size;
  if (count > (bytes.size() - kHeader) / (8 * d) || bytes.size() - kHeader != count * d * 8)
    throw FormatError("patch database cache: payload size mismatch");
  Eigen::MatrixXd patches(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(count));
  double* data = patches.data();
  for (std::uint64_t i = 0; i < d * count; ++i) data[i] = get_le<double>(bytes, kHeader + 8 * i);
  return Database(static_cast<int>(patch_size), std::move(patches));
}

void save_database(const Database& db, const std::string& path) {
  const auto bytes = serialize_database(db);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path);
}

Database load_database(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_database(bytes);
}

std::vector<std::string> list_pgm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw FormatError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace tdn
