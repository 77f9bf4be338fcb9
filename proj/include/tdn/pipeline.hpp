#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdn/database.hpp"
#include "tdn/filter.hpp"
#include "tdn/imaging.hpp"

namespace tdn {

enum class SelectionMode {
  automatic,         // kNN in the first pass, first-pass refinement in the second
  knn,
  cross_similarity,
  first_pass,
};

std::string_view to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view name);

struct DenoiseConfig {
  double sigma = 0.0;
  int patch_size = 8;
  int stride_pass1 = 6;
  int stride_pass2 = 4;
  int k = 40;
  int pool_size = 200;
  SelectionMode selection = SelectionMode::automatic;
  ShrinkageRule rule = ShrinkageRule::bayes;
  double gamma = 0.02;
  std::optional<double> tau;  // unset: sigma-dependent schedule
  std::optional<double> h;    // unset: h = sigma
  std::uint64_t seed = 0;
  int passes = 2;
  int threads = 1;

  void validate() const;
  double bandwidth() const { return h.value_or(sigma); }
  /// tau for the given refinement mode (explicit value or default schedule).
  double tau_for(SelectionMode mode) const;
};

struct Report {
  std::optional<double> psnr_noisy;
  std::optional<double> psnr_denoised;
  std::optional<double> ssim_noisy;
  std::optional<double> ssim_denoised;
  std::optional<double> database_quality;
  std::vector<double> pass_seconds;
  DenoiseConfig config;
};

/// JSON with a fixed key order. Wall-clock timings are only emitted when
/// requested so that the default output is reproducible byte for byte.
std::string report_to_json(const Report& report, bool include_timing = false);

/// Per-patch denoiser: select k reference patches, weight them, learn
/// the eigenbasis of P W P^T, shrink, and filter q. `pilot` is required for
/// first-pass selection and the bm3d_pilot rule; `truth` only for the oracle
/// rule. With SelectionMode::automatic, first-pass selection is used when a
/// pilot is given and kNN otherwise.
Patch denoise_patch(const Patch& q, const Database& db, const DenoiseConfig& cfg,
                    const Patch* pilot = nullptr, const Patch* truth = nullptr);

/// The reference patches chosen for q under cfg (exposed for diagnostics).
std::vector<Neighbor> select_references(const Patch& q, const Database& db,
                                        const DenoiseConfig& cfg, const Patch* pilot);

struct DenoiseResult {
  Image image;
  Image first_pass;
  Report report;
};

/// Whole-image denoising: one pass on the stride_pass1 grid, optionally a
/// second pass on the stride_pass2 grid that uses the first-pass output as
/// pilot. `clean`, when given, is used for the report metrics and by the
/// oracle rule only.
DenoiseResult denoise_image(const Image& noisy, const Database& db, const DenoiseConfig& cfg,
                            const Image* clean = nullptr);

struct SweepRow {
  double sigma = 0.0;
  ShrinkageRule rule = ShrinkageRule::bayes;
  double psnr = 0.0;
  double ssim = 0.0;
  double seconds = 0.0;
};

/// Noise seed for one (sigma, rule) cell of a sweep.
std::uint64_t sweep_cell_seed(std::uint64_t seed, double sigma, ShrinkageRule rule);

std::vector<SweepRow> run_sweep(const Image& clean, const Database& db, const DenoiseConfig& base,
                                const std::vector<double>& sigmas,
                                const std::vector<ShrinkageRule>& rules);

/// CSV with header "sigma,rule,psnr,ssim,seconds"; the seconds field is left
/// empty unless timing is requested.
std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool include_timing = false);

}  // namespace tdn
