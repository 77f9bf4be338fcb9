#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tdn {

/// Vectorized square patch, row-major pixel order.
using Patch = Eigen::VectorXd;

struct Location {
  int row = 0;
  int col = 0;
  friend bool operator==(const Location&, const Location&) = default;
};

/// Grayscale raster with row-major floating intensities, nominally in [0, 255].
class Image {
 public:
  Image(int width, int height, double fill = 0.0);
  Image(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  double operator()(int row, int col) const { return data_[index(row, col)]; }
  double& operator()(int row, int col) { return data_[index(row, col)]; }

  std::span<const double> pixels() const { return data_; }
  std::span<double> pixels() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_;
  int height_;
  std::vector<double> data_;
};

struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct PatchGrid {
  int patch_size = 0;
  int stride = 0;
  std::vector<Location> locations;
};

struct PatchEstimate {
  Location loc;
  Patch values;
};

// PGM (binary P5, maxval 255).
Image read_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pgm(const Image& img);
Image load_pgm(const std::string& path);
void save_pgm(const Image& img, const std::string& path);

/// Adds i.i.d. N(0, sigma^2) noise per pixel. No clamping; the result is a
/// pure function of (img, sigma, seed).
Image add_gaussian_noise(const Image& img, const NoiseModel& noise);

/// Top-left patch offsets on a regular grid. The last row/column offset is
/// clamped to (dim - patch_size) so every pixel is covered.
PatchGrid plan_grid(int width, int height, int patch_size, int stride);

/// Offsets along one axis, as used by plan_grid.
std::vector<int> grid_offsets(int extent, int patch_size, int stride);

Patch extract_patch(const Image& img, Location loc, int patch_size);

/// Per-pixel uniform average of all overlapping estimates. Throws
/// CoverageError if some pixel is not covered.
Image aggregate(std::span<const PatchEstimate> estimates, int width, int height);

/// 10 log10(255^2 / MSE); +inf for identical images.
double psnr(const Image& ref, const Image& test);
double mse(const Image& ref, const Image& test);

/// Mean SSIM over the valid region, 11x11 Gaussian window (std 1.5),
/// K1 = 0.01, K2 = 0.03, L = 255.
double ssim(const Image& ref, const Image& test);

}  // namespace tdn
