// Acceptance suite: one PASS/FAIL line per criterion. Exit status is
// nonzero if any criterion fails.
//
// usage: acceptance <path-to-tdn-executable>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "scene.hpp"
#include "tdn/database.hpp"
#include "tdn/filter.hpp"
#include "tdn/oracles.hpp"
#include "tdn/pipeline.hpp"

using namespace tdn;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2016;
constexpr int kDatabaseStride = 2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome from_checks(const std::vector<oracles::VerificationResult>& checks) {
  Outcome o{true, ""};
  for (const auto& r : checks) {
    o.pass = o.pass && r.pass;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("%s |%.3g - %.3g| tol %.1e%s %s", r.name.c_str(), r.measured, r.reference,
                    r.tolerance, r.relative ? " rel" : "", r.pass ? "ok" : "FAILED");
  }
  return o;
}

struct SceneData {
  tdn::testing::TextScene scene = tdn::testing::make_text_scene(kSeed);
  Database db = build_database(scene.database, 8, kDatabaseStride);
};

const SceneData& scene_data() {
  static const SceneData data;
  return data;
}

DenoiseConfig pipeline_config(double sigma, std::uint64_t seed = kSeed) {
  DenoiseConfig cfg;
  cfg.sigma = sigma;
  cfg.seed = seed;
  cfg.threads = 1;
  return cfg;
}

// 1. Monte Carlo MSE against the closed form, under 30 s.
Outcome criterion1() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o = from_checks({oracles::check_mse_decomposition(kSeed + 1)});
  const double t = seconds_since(start);
  o.pass = o.pass && t < 30.0;
  o.detail += fmt("; %.1f s (limit 30 s)", t);
  return o;
}

// 2. Oracle filter optimality: random perturbations and grid search.
Outcome criterion2() {
  return from_checks({oracles::check_oracle_dominance(kSeed + 2),
                      oracles::check_oracle_grid(kSeed + 3)});
}

// 3. Learned basis against random orthonormal bases.
Outcome criterion3() { return from_checks({oracles::check_basis_optimality(kSeed + 4)}); }

// 4. Bayes spectrum minimizes the separable BMSE; second-moment identity.
Outcome criterion4() {
  return from_checks({oracles::check_bayes_grid(kSeed + 5), oracles::check_prior_identity(kSeed + 6),
                      oracles::check_rotated_moment_diagonal(kSeed + 7)});
}

// 5. Penalized spectra against 1-D grid search, boundary cases included.
Outcome criterion5() { return from_checks({oracles::check_penalized_grid(kSeed + 8)}); }

// 6. End-to-end on the synthetic scene.
Outcome criterion6() {
  const auto start = std::chrono::steady_clock::now();
  const auto& d = scene_data();
  const Image noisy = add_gaussian_noise(d.scene.clean, {50.0, kSeed});
  const auto result = denoise_image(noisy, d.db, pipeline_config(50.0), &d.scene.clean);
  const double gain = *result.report.psnr_denoised - *result.report.psnr_noisy;

  DenoiseConfig base = pipeline_config(0.0);
  const auto rows = run_sweep(d.scene.clean, d.db, base, {60.0, 80.0},
                              {ShrinkageRule::bayes, ShrinkageRule::lpg});
  const bool order60 = rows[0].psnr >= rows[1].psnr;
  const bool order80 = rows[2].psnr >= rows[3].psnr;
  const double t = seconds_since(start);

  Outcome o;
  o.pass = gain >= 8.0 && order60 && order80 && t < 120.0;
  o.detail = fmt("sigma 50: noisy %.2f dB -> %.2f dB (gain %.2f, need >= 8); "
                 "sigma 60 bayes %.2f vs lpg %.2f; sigma 80 bayes %.2f vs lpg %.2f; %.1f s (limit 120 s)",
                 *result.report.psnr_noisy, *result.report.psnr_denoised, gain, rows[0].psnr,
                 rows[1].psnr, rows[2].psnr, rows[3].psnr, t);
  return o;
}

// 7. First-pass refinement selects closer patches and the second pass helps.
Outcome criterion7() {
  const auto& d = scene_data();
  const double sigma = 50.0;
  const Image noisy = add_gaussian_noise(d.scene.clean, {sigma, kSeed});
  const auto result = denoise_image(noisy, d.db, pipeline_config(sigma), &d.scene.clean);

  DenoiseConfig knn_cfg = pipeline_config(sigma);
  knn_cfg.selection = SelectionMode::knn;
  DenoiseConfig fp_cfg = pipeline_config(sigma);
  fp_cfg.selection = SelectionMode::first_pass;

  double knn_total = 0.0;
  double fp_total = 0.0;
  long count = 0;
  const auto grid = plan_grid(noisy.width(), noisy.height(), 8, fp_cfg.stride_pass2);
  for (const auto& loc : grid.locations) {
    const Patch q = extract_patch(noisy, loc, 8);
    const Patch truth = extract_patch(d.scene.clean, loc, 8);
    const Patch pilot = extract_patch(result.first_pass, loc, 8);
    auto mean_distance = [&](const std::vector<Neighbor>& sel) {
      double s = 0.0;
      for (const auto& n : sel) s += (d.db.patch(n.index) - truth).norm();
      return s / static_cast<double>(sel.size());
    };
    knn_total += mean_distance(select_references(q, d.db, knn_cfg, nullptr));
    fp_total += mean_distance(select_references(q, d.db, fp_cfg, &pilot));
    ++count;
  }
  const double knn_mean = knn_total / static_cast<double>(count);
  const double fp_mean = fp_total / static_cast<double>(count);
  const double one_pass = psnr(d.scene.clean, result.first_pass);
  const double two_pass = psnr(d.scene.clean, result.image);

  Outcome o;
  o.pass = fp_mean <= knn_mean && two_pass >= one_pass;
  o.detail = fmt("mean distance to truth: first_pass %.3f vs knn %.3f over %ld patches; "
                 "PSNR one pass %.2f dB, two passes %.2f dB",
                 fp_mean, knn_mean, count, one_pass, two_pass);
  return o;
}

// 8. Penalized spectra cost at most 1e-6 of analytic BMSE over the Bayes
// spectrum. Ensembles are the k nearest database patches of each noisy
// first-pass grid patch; BMSE uses g = s and is reported per pixel.
Outcome criterion8() {
  const auto& d = scene_data();
  const double gamma = 0.02;
  const double bound = 1e-6;
  Outcome o{true, ""};
  for (double sigma : {30.0, 50.0, 70.0}) {
    const Image noisy = add_gaussian_noise(d.scene.clean, {sigma, kSeed});
    const DenoiseConfig cfg = pipeline_config(sigma);
    const auto grid = plan_grid(noisy.width(), noisy.height(), 8, cfg.stride_pass1);
    double excess_l1 = 0.0, excess_l0 = 0.0, worst_l1 = 0.0, worst_l0 = 0.0;
    for (const auto& loc : grid.locations) {
      const Patch q = extract_patch(noisy, loc, 8);
      const auto sel = knn(d.db, q, cfg.k);
      Eigen::MatrixXd p(d.db.dim(), cfg.k);
      for (int j = 0; j < cfg.k; ++j) p.col(j) = d.db.patch(sel[static_cast<std::size_t>(j)].index);
      const auto w = compute_weights(q, p, cfg.bandwidth());
      const auto eig = group_sparse_basis({p, w.w, {}});
      const auto& s = eig.eigenvalues;
      const double dim = static_cast<double>(s.size());
      const double base = oracles::bmse_analytic(s, spectrum_bayes(s, sigma), sigma) / dim;
      const double l1 =
          oracles::bmse_analytic(s, spectrum_penalized(s, sigma, gamma, PenaltyNorm::l1), sigma) / dim - base;
      const double l0 =
          oracles::bmse_analytic(s, spectrum_penalized(s, sigma, gamma, PenaltyNorm::l0), sigma) / dim - base;
      excess_l1 += l1;
      excess_l0 += l0;
      worst_l1 = std::max(worst_l1, l1);
      worst_l0 = std::max(worst_l0, l0);
    }
    const double n = static_cast<double>(grid.locations.size());
    const bool ok = worst_l1 <= bound && worst_l0 <= bound;
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("sigma %g: excess l1 mean %.2e max %.2e, l0 mean %.2e max %.2e", sigma,
                    excess_l1 / n, worst_l1, excess_l0 / n, worst_l0);
  }
  o.detail += fmt(" (bound %.0e)", bound);
  return o;
}

// 9. Shrinking the database raises d-bar and does not raise PSNR.
Outcome criterion9() {
  const auto& d = scene_data();
  const double sigma = 20.0;
  const Image noisy = add_gaussian_noise(d.scene.clean, {sigma, kSeed});
  Outcome o{true, ""};
  double previous_dbar = -1.0;
  double previous_psnr = std::numeric_limits<double>::infinity();
  for (std::size_t images : {std::size_t{4}, std::size_t{2}, std::size_t{1}}) {
    const std::vector<Image> subset(d.scene.database.begin(),
                                    d.scene.database.begin() + static_cast<std::ptrdiff_t>(images));
    const Database db = build_database(subset, 8, kDatabaseStride);
    const double dbar = database_quality(db, d.scene.clean, 8);
    const double value = psnr(d.scene.clean, denoise_image(noisy, db, pipeline_config(sigma)).image);
    o.pass = o.pass && dbar > previous_dbar && value <= previous_psnr;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("%zu images: %zu patches, d_bar %.3f, PSNR %.2f dB", images, db.size(), dbar, value);
    previous_dbar = dbar;
    previous_psnr = value;
  }
  return o;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 10. Byte-identical CLI outputs across reruns.
Outcome criterion10(const std::string& exe) {
  const auto& d = scene_data();
  const fs::path dir = fs::temp_directory_path() / "tdn_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir / "db");
  for (std::size_t i = 0; i < d.scene.database.size(); ++i)
    save_pgm(d.scene.database[i], (dir / "db" / ("ref" + std::to_string(i) + ".pgm")).string());
  save_pgm(d.scene.clean, (dir / "clean.pgm").string());
  save_pgm(add_gaussian_noise(d.scene.clean, {30.0, kSeed}), (dir / "noisy.pgm").string());

  auto sh = [&](const std::string& args) {
    const std::string cmd = "\"" + exe + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  const std::string d_ = dir.string() + "/";
  bool ran = true;
  for (const char* tag : {"1", "2"}) {
    const std::string t = tag;
    ran = sh("verify --seed 7 --json " + d_ + "verify" + t + ".json") && ran;
    ran = sh("denoise --input " + d_ + "noisy.pgm --clean " + d_ + "clean.pgm --db " + d_ +
             "db --db-stride " + std::to_string(kDatabaseStride) + " --sigma 30 --seed 3 --out " +
             d_ + "denoised" + t + ".pgm --report " + d_ + "report" + t + ".json") && ran;
    ran = sh("sweep --clean " + d_ + "clean.pgm --db " + d_ + "db --db-stride 3 --sigmas 20,60 " +
             "--rules bayes,lpg --seed 3 --out " + d_ + "sweep" + t + ".csv") && ran;
  }
  Outcome o{ran, ran ? "" : "a command exited nonzero; "};
  for (const char* stem : {"verify", "denoised", "report", "sweep"}) {
    const std::string ext = std::string(stem) == "denoised" ? ".pgm"
                            : std::string(stem) == "sweep"  ? ".csv"
                                                            : ".json";
    const std::string a = slurp(dir / (std::string(stem) + "1" + ext));
    const std::string b = slurp(dir / (std::string(stem) + "2" + ext));
    const bool same = !a.empty() && a == b;
    o.pass = o.pass && same;
    o.detail += fmt("%s%s %s (%zu bytes)", stem == std::string("verify") ? "" : ", ", stem,
                    same ? "identical" : "DIFFERENT", a.size());
  }
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <tdn-executable>\n", argv[0]);
    return 2;
  }
  const std::string exe = argv[1];
  struct Entry {
    int id;
    Outcome (*run)(const std::string&);
  };
  const Entry entries[] = {
      {1, [](const std::string&) { return criterion1(); }},
      {2, [](const std::string&) { return criterion2(); }},
      {3, [](const std::string&) { return criterion3(); }},
      {4, [](const std::string&) { return criterion4(); }},
      {5, [](const std::string&) { return criterion5(); }},
      {6, [](const std::string&) { return criterion6(); }},
      {7, [](const std::string&) { return criterion7(); }},
      {8, [](const std::string&) { return criterion8(); }},
      {9, [](const std::string&) { return criterion9(); }},
      {10, criterion10},
  };
  int failures = 0;
  for (const auto& e : entries) {
    Outcome o;
    try {
      o = e.run(exe);
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d: %s  %s\n", e.id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(entries)) - failures,
              std::size(entries));
  return failures == 0 ? 0 : 1;
}
