#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdn/database.hpp"
#include "tdn/errors.hpp"
#include "tdn/imaging.hpp"
#include "tdn/oracles.hpp"
#include "tdn/pipeline.hpp"

namespace tdn::cli {

namespace {

// Raised for bad flag values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatabaseFlags {
  std::string path;
  int stride = 1;
  std::string cache;
};

struct PipelineFlags {
  int patch = 8;
  int k = 40;
  int pool = 200;
  double tau = 0.0;
  double gamma = 0.02;
  double h = 0.0;
  std::string rule = "bayes";
  std::string selection = "auto";
  int passes = 2;
  int stride1 = 6;
  int stride2 = 4;
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  CLI::Option* tau_opt = nullptr;
  CLI::Option* h_opt = nullptr;
};

void add_database_flags(CLI::App* cmd, DatabaseFlags& f, bool required) {
  auto* db = cmd->add_option("--db", f.path,
                             "Directory of clean reference PGM images, or a database cache file");
  if (required) db->required();
  cmd->add_option("--db-stride", f.stride, "Patch stride used when building the database")
      ->capture_default_str();
  cmd->add_option("--db-cache", f.cache,
                  "Cache file: loaded if it exists, otherwise written after building");
}

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
  // "-h" would collide with the bandwidth flag --h.
  cmd->set_help_flag("--help", "Print this help message and exit");
  cmd->add_option("--patch", f.patch, "Patch side length")->capture_default_str();
  cmd->add_option("--k", f.k, "Reference patches per query")->capture_default_str();
  cmd->add_option("--pool", f.pool, "Candidate pool size for refined selection")
      ->capture_default_str();
  f.tau_opt = cmd->add_option("--tau", f.tau, "Selection penalty weight (default: sigma schedule)");
  cmd->add_option("--gamma", f.gamma, "Penalty weight of the bayes_l1/bayes_l0 rules")
      ->capture_default_str();
  f.h_opt = cmd->add_option("--h", f.h, "Similarity bandwidth (default: sigma)");
  cmd->add_option("--rule", f.rule, "oracle|bayes|bayes_l1|bayes_l0|bm3d_pilot|lpg")
      ->capture_default_str();
  cmd->add_option("--selection", f.selection, "auto|knn|cross_similarity|first_pass")
      ->capture_default_str();
  cmd->add_option("--passes", f.passes, "1 or 2")->capture_default_str();
  cmd->add_option("--stride1", f.stride1, "Grid stride of the first pass")->capture_default_str();
  cmd->add_option("--stride2", f.stride2, "Grid stride of the second pass")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads (results do not depend on this)")
      ->capture_default_str();
}

DenoiseConfig make_config(const PipelineFlags& f, double sigma) {
  DenoiseConfig cfg;
  cfg.sigma = sigma;
  cfg.patch_size = f.patch;
  cfg.k = f.k;
  cfg.pool_size = f.pool;
  cfg.gamma = f.gamma;
  if (f.tau_opt && f.tau_opt->count() > 0) cfg.tau = f.tau;
  if (f.h_opt && f.h_opt->count() > 0) cfg.h = f.h;
  try {
    cfg.rule = parse_shrinkage_rule(f.rule);
    cfg.selection = parse_selection_mode(f.selection);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  cfg.passes = f.passes;
  cfg.stride_pass1 = f.stride1;
  cfg.stride_pass2 = f.stride2;
  cfg.seed = f.seed;
  cfg.threads = f.threads;
  return cfg;
}

Database open_database(const DatabaseFlags& f, int patch_size) {
  namespace fs = std::filesystem;
  if (!f.cache.empty() && fs::exists(f.cache)) {
    auto db = load_database(f.cache);
    if (db.patch_size() != patch_size) throw UsageError("database cache has a different patch size");
    return db;
  }
  if (fs::is_regular_file(f.path)) return load_database(f.path);
  const auto files = list_pgm_files(f.path);
  if (files.empty()) throw FormatError("no .pgm files in database directory " + f.path);
  std::vector<Image> images;
  for (const auto& file : files) images.push_back(load_pgm(file));
  auto db = build_database(images, patch_size, f.stride);
  if (!f.cache.empty()) save_database(db, f.cache);
  return db;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("write failed: " + path);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) items.push_back(item);
  if (items.empty()) throw UsageError("empty list: '" + text + "'");
  return items;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw UsageError("not a number: '" + s + "'");
  return v;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream ss;
  ss.precision(4);
  ss << std::fixed << *v;
  return ss.str();
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Targeted-database patch denoising toolkit", "tdn"};
  app.require_subcommand(1);

  // denoise
  auto* denoise = app.add_subcommand("denoise", "Denoise a PGM image with a targeted database");
  std::string input;
  std::string clean_path;
  std::string out_path = "denoised.pgm";
  std::string report_path = "report.json";
  double sigma = 0.0;
  bool timing = false;
  bool with_quality = false;
  DatabaseFlags dbf;
  PipelineFlags pf;
  denoise->add_option("--input", input, "Noisy input PGM")->required();
  denoise->add_option("--sigma", sigma, "Noise standard deviation (> 0)")->required();
  denoise->add_option("--clean", clean_path, "Clean reference PGM for PSNR/SSIM");
  denoise->add_option("--out", out_path, "Output PGM")->capture_default_str();
  denoise->add_option("--report", report_path, "Output JSON report")->capture_default_str();
  denoise->add_flag("--timing", timing, "Include wall-clock timings in the report");
  denoise->add_flag("--with-quality", with_quality,
                    "Also compute the database quality score (needs --clean)");
  add_database_flags(denoise, dbf, true);
  add_pipeline_flags(denoise, pf);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "PSNR/SSIM over noise levels and shrinkage rules");
  std::string sweep_clean;
  std::string sigmas_text;
  std::string rules_text;
  std::string sweep_out = "sweep.csv";
  bool sweep_timing = false;
  DatabaseFlags sweep_dbf;
  PipelineFlags sweep_pf;
  sweep->add_option("--clean", sweep_clean, "Clean PGM")->required();
  sweep->add_option("--sigmas", sigmas_text, "Comma-separated noise levels")->required();
  sweep->add_option("--rules", rules_text, "Comma-separated shrinkage rules")->required();
  sweep->add_option("--out", sweep_out, "Output CSV")->capture_default_str();
  sweep->add_flag("--timing", sweep_timing, "Fill the seconds column");
  add_database_flags(sweep, sweep_dbf, true);
  add_pipeline_flags(sweep, sweep_pf);

  // verify
  auto* verify = app.add_subcommand("verify", "Run the numerical verification battery");
  std::uint64_t verify_seed = 0;
  std::string verify_json;
  verify->add_option("--seed", verify_seed, "Battery seed")->capture_default_str();
  verify->add_option("--json", verify_json, "Write results as JSON");

  // quality
  auto* quality = app.add_subcommand("quality", "Average patch-to-database distance");
  std::string quality_clean;
  int quality_patch = 8;
  DatabaseFlags quality_dbf;
  quality->add_option("--clean", quality_clean, "Clean PGM")->required();
  quality->add_option("--patch", quality_patch, "Patch side length")->capture_default_str();
  add_database_flags(quality, quality_dbf, true);

  // noise
  auto* noise = app.add_subcommand("noise", "Add seeded Gaussian noise to a PGM");
  std::string noise_in;
  std::string noise_out;
  std::string noise_report;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  noise->add_option("--input", noise_in, "Input PGM")->required();
  noise->add_option("--sigma", noise_sigma, "Noise standard deviation (>= 0)")->required();
  noise->add_option("--seed", noise_seed, "Random seed")->required();
  noise->add_option("--out", noise_out, "Output PGM")->required();
  noise->add_option("--report", noise_report, "Write JSON with the empirical noise std");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageOrIoError;
  }

  try {
    if (denoise->parsed()) {
      if (!(sigma > 0.0)) throw UsageError("--sigma must be > 0");
      const DenoiseConfig cfg = make_config(pf, sigma);
      cfg.validate();
      const Image noisy = load_pgm(input);
      std::optional<Image> clean;
      if (!clean_path.empty()) clean = load_pgm(clean_path);
      if (with_quality && !clean) throw UsageError("--with-quality needs --clean");
      const Database db = open_database(dbf, cfg.patch_size);
      auto result = denoise_image(noisy, db, cfg, clean ? &*clean : nullptr);
      if (with_quality) result.report.database_quality = database_quality(db, *clean, cfg.patch_size);
      save_pgm(result.image, out_path);
      write_text(report_path, report_to_json(result.report, timing));
      out << "denoised " << noisy.width() << "x" << noisy.height() << " with " << db.size()
          << " reference patches -> " << out_path << "\n";
      if (clean)
        out << "PSNR " << format_metric(result.report.psnr_noisy) << " -> "
            << format_metric(result.report.psnr_denoised) << " dB, SSIM "
            << format_metric(result.report.ssim_noisy) << " -> "
            << format_metric(result.report.ssim_denoised) << "\n";
      return kOk;
    }

    if (sweep->parsed()) {
      std::vector<double> sigmas;
      for (const auto& s : split_list(sigmas_text)) {
        sigmas.push_back(parse_double(s));
        if (!(sigmas.back() > 0.0)) throw UsageError("sweep noise levels must be > 0");
      }
      std::vector<ShrinkageRule> rules;
      for (const auto& r : split_list(rules_text)) {
        try {
          rules.push_back(parse_shrinkage_rule(r));
        } catch (const ParameterError& e) {
          throw UsageError(e.what());
        }
      }
      DenoiseConfig base = make_config(sweep_pf, sigmas.front());
      base.validate();
      const Image clean = load_pgm(sweep_clean);
      const Database db = open_database(sweep_dbf, base.patch_size);
      const auto rows = run_sweep(clean, db, base, sigmas, rules);
      const auto csv = sweep_to_csv(rows, sweep_timing);
      write_text(sweep_out, csv);
      out << csv;
      return kOk;
    }

    if (verify->parsed()) {
      const auto results = oracles::verify_all(verify_seed);
      out << oracles::results_to_table(results);
      if (!verify_json.empty()) write_text(verify_json, oracles::results_to_json(results));
      const bool all = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
      out << (all ? "all checks passed\n" : "some checks FAILED\n");
      return all ? kOk : kCheckFailed;
    }

    if (quality->parsed()) {
      const Image clean = load_pgm(quality_clean);
      const Database db = open_database(quality_dbf, quality_patch);
      const double dbar = database_quality(db, clean, quality_patch);
      const auto clean_patches =
          plan_grid(clean.width(), clean.height(), quality_patch, 1).locations.size();
      out << "d_bar " << dbar << "\n";
      out << "clean_patches " << clean_patches << "\n";
      out << "database_patches " << db.size() << "\n";
      return kOk;
    }

    if (noise->parsed()) {
      if (!(noise_sigma >= 0.0)) throw UsageError("--sigma must be >= 0");
      const Image img = load_pgm(noise_in);
      const Image noisy = add_gaussian_noise(img, {noise_sigma, noise_seed});
      double sum = 0.0;
      double sum2 = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) {
        const double diff = noisy.pixels()[i] - img.pixels()[i];
        sum += diff;
        sum2 += diff * diff;
      }
      const double n = static_cast<double>(img.size());
      const double mean = sum / n;
      const double std_dev = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1))) : 0.0;
      save_pgm(noisy, noise_out);
      if (!noise_report.empty()) {
        nlohmann::ordered_json j;
        j["sigma"] = noise_sigma;
        j["seed"] = noise_seed;
        j["pixels"] = img.size();
        j["empirical_std"] = std_dev;
        write_text(noise_report, j.dump(2) + "\n");
      }
      out << "empirical noise std " << std_dev << " (before clamping) -> " << noise_out << "\n";
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageOrIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsageOrIoError;
  }
  return kUsageOrIoError;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("tdn");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace tdn::cli
