#include "tdn/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "tdn/errors.hpp"

namespace tdn {

std::string_view to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::automatic: return "auto";
    case SelectionMode::knn: return "knn";
    case SelectionMode::cross_similarity: return "cross_similarity";
    case SelectionMode::first_pass: return "first_pass";
  }
  return "unknown";
}

SelectionMode parse_selection_mode(std::string_view name) {
  for (auto mode : {SelectionMode::automatic, SelectionMode::knn, SelectionMode::cross_similarity,
                    SelectionMode::first_pass})
    if (to_string(mode) == name) return mode;
  throw ParameterError("unknown selection mode '" + std::string(name) + "'");
}

void DenoiseConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be > 0");
  if (patch_size < 1) throw ParameterError("patch size must be >= 1");
  if (stride_pass1 < 1 || stride_pass2 < 1) throw ParameterError("strides must be >= 1");
  if (k < 1) throw ParameterError("k must be >= 1");
  if (k > pool_size) throw ParameterError("k must not exceed the pool size");
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be >= 0");
  if (tau && !(*tau >= 0.0)) throw ParameterError("tau must be >= 0");
  if (h && !(*h > 0.0)) throw ParameterError("h must be > 0");
  if (passes != 1 && passes != 2) throw ParameterError("passes must be 1 or 2");
  if (threads < 1) throw ParameterError("threads must be >= 1");
  if (passes == 1 && (selection == SelectionMode::first_pass || rule == ShrinkageRule::bm3d_pilot))
    throw ParameterError("first-pass selection and the bm3d_pilot rule need two passes");
}

double DenoiseConfig::tau_for(SelectionMode mode) const {
  if (tau) return *tau;
  switch (mode) {
    case SelectionMode::cross_similarity: return default_tau_cross_similarity(sigma, pool_size);
    case SelectionMode::first_pass: return default_tau_first_pass(sigma);
    default: return 0.0;
  }
}

// ---------------------------------------------------------------------------
// Per-patch

std::vector<Neighbor> select_references(const Patch& q, const Database& db,
                                        const DenoiseConfig& cfg, const Patch* pilot) {
  if (static_cast<std::size_t>(cfg.k) > db.size())
    throw ParameterError("database has " + std::to_string(db.size()) + " patches, fewer than k = " +
                         std::to_string(cfg.k));
  SelectionMode mode = cfg.selection;
  if (mode == SelectionMode::automatic)
    mode = pilot != nullptr ? SelectionMode::first_pass : SelectionMode::knn;
  // The candidate pool cannot be larger than the database.
  const int pool = static_cast<int>(std::min<std::size_t>(cfg.pool_size, db.size()));
  switch (mode) {
    case SelectionMode::knn:
      return knn(db, q, cfg.k);
    case SelectionMode::cross_similarity:
      return refine_cross_similarity(db, q, pool, cfg.k, cfg.tau_for(mode));
    case SelectionMode::first_pass:
      if (pilot == nullptr) throw ParameterError("first-pass selection requires a pilot patch");
      return refine_first_pass(db, q, *pilot, pool, cfg.k, cfg.tau_for(mode));
    case SelectionMode::automatic:
      break;
  }
  throw ParameterError("unresolved selection mode");
}

Patch denoise_patch(const Patch& q, const Database& db, const DenoiseConfig& cfg,
                    const Patch* pilot, const Patch* truth) {
  if (q.size() != db.dim()) throw DimensionError("query patch does not match database dimension");
  const auto refs = select_references(q, db, cfg, pilot);

  PatchEnsemble ens;
  ens.patches.resize(db.dim(), static_cast<Eigen::Index>(refs.size()));
  for (std::size_t j = 0; j < refs.size(); ++j)
    ens.patches.col(static_cast<Eigen::Index>(j)) = db.patch(refs[j].index);
  ens.weights = compute_weights(q, ens.patches, cfg.bandwidth()).w;

  const Eigenbasis eig = group_sparse_basis(ens);
  const ShrinkageConfig shrink{cfg.rule, cfg.sigma, cfg.gamma};
  SpectralFilter filter{eig.basis, eig.eigenvalues,
                        compute_shrinkage(shrink, eig, {&q, pilot, truth})};
  return apply_filter(filter, q);
}

// ---------------------------------------------------------------------------
// Whole image

namespace {

// Runs fn(i) for i in [0, n) on `threads` workers. Each index is handled by
// exactly one worker, so writes to per-index slots need no synchronization.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Image run_pass(const Image& noisy, const Database& db, const DenoiseConfig& cfg, int stride,
               const Image* pilot_image, const Image* clean) {
  const auto grid = plan_grid(noisy.width(), noisy.height(), cfg.patch_size, stride);
  std::vector<PatchEstimate> estimates(grid.locations.size());
  parallel_for(grid.locations.size(), cfg.threads, [&](std::size_t i) {
    const Location loc = grid.locations[i];
    const Patch q = extract_patch(noisy, loc, cfg.patch_size);
    Patch pilot;
    Patch truth;
    if (pilot_image != nullptr) pilot = extract_patch(*pilot_image, loc, cfg.patch_size);
    if (clean != nullptr && cfg.rule == ShrinkageRule::oracle)
      truth = extract_patch(*clean, loc, cfg.patch_size);
    estimates[i] = {loc, denoise_patch(q, db, cfg, pilot_image ? &pilot : nullptr,
                                       truth.size() > 0 ? &truth : nullptr)};
  });
  // Serial aggregation in grid order keeps results independent of the
  // thread count.
  return aggregate(estimates, noisy.width(), noisy.height());
}

}  // namespace

DenoiseResult denoise_image(const Image& noisy, const Database& db, const DenoiseConfig& cfg,
                            const Image* clean) {
  cfg.validate();
  if (db.patch_size() != cfg.patch_size)
    throw DimensionError("database patch size does not match the configured patch size");
  if (cfg.rule == ShrinkageRule::oracle && clean == nullptr)
    throw ParameterError("the oracle rule requires the clean image");
  if (clean != nullptr && (clean->width() != noisy.width() || clean->height() != noisy.height()))
    throw DimensionError("clean and noisy images differ in size");

  using clock = std::chrono::steady_clock;
  Report report;
  report.config = cfg;

  DenoiseConfig first = cfg;
  if (first.selection != SelectionMode::knn && first.selection != SelectionMode::cross_similarity)
    first.selection = SelectionMode::knn;
  if (first.rule == ShrinkageRule::bm3d_pilot) first.rule = ShrinkageRule::bayes;

  auto t0 = clock::now();
  Image basic = run_pass(noisy, db, first, cfg.stride_pass1, nullptr, clean);
  report.pass_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());

  Image final_image = basic;
  if (cfg.passes == 2) {
    DenoiseConfig second = cfg;
    if (second.selection == SelectionMode::automatic) second.selection = SelectionMode::first_pass;
    t0 = clock::now();
    final_image = run_pass(noisy, db, second, cfg.stride_pass2, &basic, clean);
    report.pass_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }

  if (clean != nullptr) {
    report.psnr_noisy = psnr(*clean, noisy);
    report.psnr_denoised = psnr(*clean, final_image);
    if (clean->width() >= 11 && clean->height() >= 11) {
      report.ssim_noisy = ssim(*clean, noisy);
      report.ssim_denoised = ssim(*clean, final_image);
    }
  }
  return {std::move(final_image), std::move(basic), std::move(report)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::ordered_json metric(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "+inf" : "-inf";
  return *v;
}

template <typename T>
nlohmann::ordered_json optional_value(const std::optional<T>& v, const char* fallback) {
  if (v) return *v;
  return fallback;
}

}  // namespace

std::string report_to_json(const Report& report, bool include_timing) {
  const auto& c = report.config;
  nlohmann::ordered_json config;
  config["sigma"] = c.sigma;
  config["patch_size"] = c.patch_size;
  config["stride_pass1"] = c.stride_pass1;
  config["stride_pass2"] = c.stride_pass2;
  config["k"] = c.k;
  config["pool_size"] = c.pool_size;
  config["selection"] = std::string(to_string(c.selection));
  config["rule"] = std::string(to_string(c.rule));
  config["gamma"] = c.gamma;
  config["tau"] = optional_value(c.tau, "auto");
  config["h"] = optional_value(c.h, "auto");
  config["seed"] = c.seed;
  config["passes"] = c.passes;

  nlohmann::ordered_json metrics;
  metrics["psnr_noisy"] = metric(report.psnr_noisy);
  metrics["psnr_denoised"] = metric(report.psnr_denoised);
  metrics["ssim_noisy"] = metric(report.ssim_noisy);
  metrics["ssim_denoised"] = metric(report.ssim_denoised);

  nlohmann::ordered_json out;
  out["config"] = std::move(config);
  out["metrics"] = std::move(metrics);
  out["database_quality"] = metric(report.database_quality);
  if (include_timing) out["pass_seconds"] = report.pass_seconds;
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Sweeps

std::uint64_t sweep_cell_seed(std::uint64_t seed, double sigma, ShrinkageRule rule) {
  // FNV-1a over the bit pattern of sigma followed by the rule name.
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint8_t byte) {
    hash ^= byte;
    hash *= 0x100000001b3ULL;
  };
  std::uint64_t bits;
  std::memcpy(&bits, &sigma, sizeof bits);
  for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
  for (char ch : to_string(rule)) mix(static_cast<std::uint8_t>(ch));
  return seed ^ hash;
}

std::vector<SweepRow> run_sweep(const Image& clean, const Database& db, const DenoiseConfig& base,
                                const std::vector<double>& sigmas,
                                const std::vector<ShrinkageRule>& rules) {
  std::vector<SweepRow> rows;
  rows.reserve(sigmas.size() * rules.size());
  for (double sigma : sigmas) {
    for (auto rule : rules) {
      DenoiseConfig cfg = base;
      cfg.sigma = sigma;
      cfg.rule = rule;
      const auto start = std::chrono::steady_clock::now();
      const Image noisy = add_gaussian_noise(clean, {sigma, sweep_cell_seed(base.seed, sigma, rule)});
      const auto result = denoise_image(noisy, db, cfg, &clean);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rows.push_back({sigma, rule, psnr(clean, result.image), ssim(clean, result.image), seconds});
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool include_timing) {
  std::string out = "sigma,rule,psnr,ssim,seconds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.6f,%.6f,", r.sigma,
                  std::string(to_string(r.rule)).c_str(), r.psnr, r.ssim);
    out += buf;
    if (include_timing) {
      std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace tdn
