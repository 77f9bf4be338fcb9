#include "tdn/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

#include "tdn/errors.hpp"

namespace tdn {

Image::Image(int width, int height, double fill)
    : Image(width, height,
            std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                    static_cast<std::size_t>(std::max(height, 0)),
                                fill)) {}

Image::Image(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1)
    throw ParameterError("image dimensions must be positive, got " + std::to_string(width) +
                         "x" + std::to_string(height));
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw DimensionError("image data length does not match width x height");
  for (double v : data_)
    if (!std::isfinite(v)) throw ParameterError("image intensities must be finite");
}

// ---------------------------------------------------------------------------
// PGM

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_whitespace_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (is_space(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_whitespace_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > std::numeric_limits<int>::max())
        throw FormatError(std::string("PGM header: ") + what + " too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PGM header: expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw FormatError("PGM header: missing whitespace after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  static bool is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image read_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("not a binary PGM (expected magic P5)");
  HeaderReader reader(bytes);
  reader.advance(2);
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const long maxval = reader.read_uint("maxval");
  if (width < 1 || height < 1) throw FormatError("PGM header: zero dimension");
  if (maxval != 255) throw FormatError("PGM maxval must be 255, got " + std::to_string(maxval));
  reader.consume_single_space();

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - reader.pos() < count)
    throw FormatError("PGM payload truncated: expected " + std::to_string(count) + " bytes");

  std::vector<double> data(count);
  const auto payload = bytes.subspan(reader.pos(), count);
  std::transform(payload.begin(), payload.end(), data.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b); });
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

std::vector<std::uint8_t> write_pgm(const Image& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (double v : img.pixels()) {
    // std::round rounds half away from zero.
    const double clamped = std::clamp(std::round(v), 0.0, 255.0);
    out.push_back(static_cast<std::uint8_t>(clamped));
  }
  return out;
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return read_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_pgm(const Image& img, const std::string& path) {
  const auto bytes = write_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Noise

Image add_gaussian_noise(const Image& img, const NoiseModel& noise) {
  if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma))
    throw ParameterError("noise sigma must be finite and >= 0");
  Image out = img;
  if (noise.sigma == 0.0) return out;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, noise.sigma);
  for (double& v : out.pixels()) v += gauss(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Patch grid

std::vector<int> grid_offsets(int extent, int patch_size, int stride) {
  if (patch_size < 1) throw ParameterError("patch size must be >= 1");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  if (patch_size > extent)
    throw ParameterError("patch size " + std::to_string(patch_size) + " exceeds image extent " +
                         std::to_string(extent));
  const int last = extent - patch_size;
  std::vector<int> offsets;
  for (int o = 0; o < last; o += stride) offsets.push_back(o);
  offsets.push_back(last);
  return offsets;
}

PatchGrid plan_grid(int width, int height, int patch_size, int stride) {
  const auto rows = grid_offsets(height, patch_size, stride);
  const auto cols = grid_offsets(width, patch_size, stride);
  PatchGrid grid{patch_size, stride, {}};
  grid.locations.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) grid.locations.push_back({r, c});
  return grid;
}

Patch extract_patch(const Image& img, Location loc, int patch_size) {
  if (patch_size < 1 || loc.row < 0 || loc.col < 0 || loc.row + patch_size > img.height() ||
      loc.col + patch_size > img.width())
    throw ParameterError("patch at (" + std::to_string(loc.row) + "," + std::to_string(loc.col) +
                         ") size " + std::to_string(patch_size) + " lies outside the image");
  Patch p(patch_size * patch_size);
  for (int r = 0; r < patch_size; ++r)
    for (int c = 0; c < patch_size; ++c) p(r * patch_size + c) = img(loc.row + r, loc.col + c);
  return p;
}

Image aggregate(std::span<const PatchEstimate> estimates, int width, int height) {
  Image sum(width, height, 0.0);
  std::vector<int> count(sum.size(), 0);
  for (const auto& est : estimates) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(est.values.size()))));
    if (side * side != est.values.size())
      throw DimensionError("patch estimate length is not a perfect square");
    if (est.loc.row < 0 || est.loc.col < 0 || est.loc.row + side > height ||
        est.loc.col + side > width)
      throw ParameterError("patch estimate lies outside the output image");
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const int row = est.loc.row + r;
        const int col = est.loc.col + c;
        sum(row, col) += est.values(r * side + c);
        ++count[static_cast<std::size_t>(row) * width + col];
      }
    }
  }
  auto px = sum.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (count[i] == 0)
      throw CoverageError("pixel (" + std::to_string(i / width) + "," + std::to_string(i % width) +
                          ") is not covered by any patch estimate");
    px[i] /= count[i];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {
void require_same_shape(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DimensionError("image dimensions differ: " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
}
}  // namespace

double mse(const Image& ref, const Image& test) {
  require_same_shape(ref, test);
  const auto a = ref.pixels();
  const auto b = test.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double psnr(const Image& ref, const Image& test) {
  const double err = mse(ref, test);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / err);
}

namespace {

constexpr int kSsimWindow = 11;

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  const double sd = 1.5;
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    k[i] = std::exp(-x * x / (2.0 * sd * sd));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable 'valid' correlation with the SSIM window.
std::vector<double> filter_valid(const std::vector<double>& src, int width, int height,
                                 const std::array<double, kSsimWindow>& k) {
  const int ow = width - kSsimWindow + 1;
  const int oh = height - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * src[static_cast<std::size_t>(r) * width + c + i];
      tmp[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * tmp[static_cast<std::size_t>(r + i) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Image& ref, const Image& test) {
  require_same_shape(ref, test);
  if (ref.width() < kSsimWindow || ref.height() < kSsimWindow)
    throw ParameterError("SSIM needs images of at least 11x11 pixels");

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const auto k = ssim_kernel();
  const int w = ref.width();
  const int h = ref.height();

  std::vector<double> x(ref.pixels().begin(), ref.pixels().end());
  std::vector<double> y(test.pixels().begin(), test.pixels().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = filter_valid(x, w, h, k);
  const auto mu_y = filter_valid(y, w, h, k);
  const auto e_xx = filter_valid(xx, w, h, k);
  const auto e_yy = filter_valid(yy, w, h, k);
  const auto e_xy = filter_valid(xy, w, h, k);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i];
    const double my = mu_y[i];
    const double vx = e_xx[i] - mx * mx;
    const double vy = e_yy[i] - my * my;
    const double cov = e_xy[i] - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mu_x.size());
}

}  // namespace tdn
