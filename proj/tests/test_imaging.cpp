#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "scene.hpp"
#include "tdn/errors.hpp"
#include "tdn/imaging.hpp"

using namespace tdn;

namespace {

std::vector<std::uint8_t> pgm_bytes(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 255.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("Image rejects invalid construction") {
  CHECK_THROWS_AS(Image(0, 3), ParameterError);
  CHECK_THROWS_AS(Image(2, 2, std::vector<double>(3, 0.0)), DimensionError);
  CHECK_THROWS_AS(Image(1, 1, std::vector<double>{std::nan("")}), ParameterError);
  CHECK_THROWS_AS(Image(1, 1, std::vector<double>{std::numeric_limits<double>::infinity()}),
                  ParameterError);
}

TEST_CASE("read_pgm decodes a minimal P5 file") {
  const auto bytes = pgm_bytes("P5 2 2 255\n", {0, 255, 128, 64});
  const Image img = read_pgm(bytes);
  REQUIRE(img.width() == 2);
  REQUIRE(img.height() == 2);
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 255.0);
  CHECK(img(1, 0) == 128.0);
  CHECK(img(1, 1) == 64.0);
}

TEST_CASE("read_pgm accepts header comments") {
  const auto bytes = pgm_bytes("P5\n# made by hand\n3 1\n# max\n255\n", {1, 2, 3});
  const Image img = read_pgm(bytes);
  CHECK(img.width() == 3);
  CHECK(img(0, 2) == 3.0);
}

TEST_CASE("read_pgm rejects malformed input") {
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P2 2 2 255\n", {0, 1, 2, 3})), FormatError);
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P5 2 2 65535\n", {0, 1, 2, 3})), FormatError);
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P5 2 2 255\n", {0, 1, 2})), FormatError);
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P5 2 x 255\n", {0, 1, 2, 3})), FormatError);
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P5 2 2 255", {})), FormatError);
  CHECK_THROWS_AS(read_pgm(pgm_bytes("P5 0 2 255\n", {})), FormatError);
  CHECK_THROWS_AS(read_pgm(std::vector<std::uint8_t>{}), FormatError);
}

TEST_CASE("write_pgm uses the canonical header, rounds and clamps") {
  const auto bytes = write_pgm(Image(2, 1, std::vector<double>{127.5, 3.49}));
  const std::string header(bytes.begin(), bytes.begin() + 11);
  CHECK(header == "P5\n2 1\n255\n");
  REQUIRE(bytes.size() == 13);
  CHECK(bytes[11] == 128);
  CHECK(bytes[12] == 3);

  const auto high = write_pgm(Image(3, 2, 300.0));
  for (std::size_t i = high.size() - 6; i < high.size(); ++i) CHECK(high[i] == 255);
  const auto low = write_pgm(Image(3, 2, -5.0));
  for (std::size_t i = low.size() - 6; i < low.size(); ++i) CHECK(low[i] == 0);
}

TEST_CASE("PGM round trip is the identity on canonical files") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 40);
    const int h = 1 + static_cast<int>(rng() % 40);
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(w * h));
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    const auto bytes = pgm_bytes(header, payload);
    CHECK(write_pgm(read_pgm(bytes)) == bytes);
  }
}

TEST_CASE("add_gaussian_noise") {
  const Image img = testing::make_text_scene().clean;

  SUBCASE("sigma zero is the identity") { CHECK(add_gaussian_noise(img, {0.0, 9}) == img); }

  SUBCASE("same seed gives bit-identical output") {
    CHECK(add_gaussian_noise(img, {15.0, 42}) == add_gaussian_noise(img, {15.0, 42}));
    CHECK_FALSE(add_gaussian_noise(img, {15.0, 42}) == add_gaussian_noise(img, {15.0, 43}));
  }

  SUBCASE("empirical moments on 256x256") {
    const Image base(256, 256, 100.0);
    const Image noisy = add_gaussian_noise(base, {20.0, 7});
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double d = noisy.pixels()[i] - base.pixels()[i];
      sum += d;
      sum2 += d * d;
    }
    const double n = static_cast<double>(base.size());
    const double mean = sum / n;
    const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
    CHECK(sd >= 19.5);
    CHECK(sd <= 20.5);
    CHECK(std::abs(mean) < 0.5);
  }

  SUBCASE("no clamping in the float domain") {
    const Image noisy = add_gaussian_noise(Image(64, 64, 0.0), {30.0, 1});
    bool negative = false;
    for (double v : noisy.pixels()) negative |= v < 0.0;
    CHECK(negative);
  }

  SUBCASE("negative sigma is rejected") {
    CHECK_THROWS_AS(add_gaussian_noise(img, {-1.0, 0}), ParameterError);
  }
}

TEST_CASE("plan_grid") {
  SUBCASE("single patch") {
    const auto g = plan_grid(8, 8, 8, 6);
    REQUIRE(g.locations.size() == 1);
    CHECK(g.locations[0] == Location{0, 0});
  }
  SUBCASE("final offset is clamped to the border") {
    CHECK(grid_offsets(20, 8, 6) == std::vector<int>{0, 6, 12});
    CHECK(grid_offsets(14, 8, 6) == std::vector<int>{0, 6});
    CHECK(grid_offsets(15, 8, 6) == std::vector<int>{0, 6, 7});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(plan_grid(7, 20, 8, 6), ParameterError);
    CHECK_THROWS_AS(plan_grid(20, 20, 8, 0), ParameterError);
  }
  SUBCASE("every pixel is covered and every patch is inside") {
    const int sizes[][2] = {{301, 218}, {128, 128}, {8, 9}, {60, 80}, {33, 17}};
    for (auto [w, h] : sizes) {
      for (int stride : {1, 4, 6, 7}) {
        const auto g = plan_grid(w, h, 8, stride);
        std::vector<int> hits(static_cast<std::size_t>(w * h), 0);
        for (const auto& loc : g.locations) {
          REQUIRE(loc.row >= 0);
          REQUIRE(loc.col >= 0);
          REQUIRE(loc.row + 8 <= h);
          REQUIRE(loc.col + 8 <= w);
          for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) ++hits[static_cast<std::size_t>((loc.row + r) * w + loc.col + c)];
        }
        CHECK(std::count(hits.begin(), hits.end(), 0) == 0);
      }
    }
  }
}

TEST_CASE("extract_patch") {
  SUBCASE("constant image") {
    const Patch p = extract_patch(Image(10, 10, 7.0), {1, 2}, 8);
    CHECK(p.size() == 64);
    CHECK((p.array() == 7.0).all());
  }
  SUBCASE("whole image in row-major order") {
    const Image img = random_image(8, 8, 5);
    const Patch p = extract_patch(img, {0, 0}, 8);
    for (int i = 0; i < 64; ++i) CHECK(p(i) == img.pixels()[static_cast<std::size_t>(i)]);
  }
  SUBCASE("out of bounds") {
    CHECK_THROWS_AS(extract_patch(Image(10, 10), {3, 0}, 8), ParameterError);
    CHECK_THROWS_AS(extract_patch(Image(10, 10), {0, -1}, 8), ParameterError);
  }
}

TEST_CASE("aggregate") {
  SUBCASE("single full-image patch") {
    const Image img = random_image(8, 8, 1);
    const PatchEstimate est{{0, 0}, extract_patch(img, {0, 0}, 8)};
    CHECK(aggregate(std::span(&est, 1), 8, 8) == img);
  }
  SUBCASE("overlapping constants average uniformly") {
    const std::vector<PatchEstimate> ests{{{0, 0}, Patch::Constant(16, 0.0)},
                                          {{0, 2}, Patch::Constant(16, 10.0)}};
    const Image out = aggregate(ests, 6, 4);
    CHECK(out(0, 0) == 0.0);
    CHECK(out(2, 2) == 5.0);
    CHECK(out(3, 3) == 5.0);
    CHECK(out(1, 5) == 10.0);

    const std::vector<PatchEstimate> same{{{0, 0}, Patch::Constant(16, 3.0)},
                                          {{0, 2}, Patch::Constant(16, 3.0)}};
    const Image flat = aggregate(same, 6, 4);
    for (double v : flat.pixels()) CHECK(v == 3.0);
  }
  SUBCASE("unmodified extraction reproduces the image") {
    const Image img = random_image(37, 29, 2);
    for (int stride : {1, 3, 6}) {
      std::vector<PatchEstimate> ests;
      for (const auto& loc : plan_grid(37, 29, 8, stride).locations)
        ests.push_back({loc, extract_patch(img, loc, 8)});
      const Image out = aggregate(ests, 37, 29);
      for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(out.pixels()[i] == doctest::Approx(img.pixels()[i]).epsilon(1e-12));
    }
  }
  SUBCASE("uncovered pixels are an error") {
    const PatchEstimate est{{0, 0}, Patch::Constant(16, 1.0)};
    CHECK_THROWS_AS(aggregate(std::span(&est, 1), 5, 4), CoverageError);
  }
}

TEST_CASE("psnr") {
  const Image ref = random_image(20, 20, 4);
  CHECK(std::isinf(psnr(ref, ref)));
  CHECK(psnr(ref, ref) > 0);

  Image plus255 = ref;
  for (double& v : plus255.pixels()) v += 255.0;
  CHECK(psnr(ref, plus255) == doctest::Approx(0.0).epsilon(1e-12));

  Image plus10 = ref;
  for (double& v : plus10.pixels()) v += 10.0;
  CHECK(psnr(ref, plus10) == doctest::Approx(20.0 * std::log10(25.5)));
  CHECK(psnr(ref, plus10) == doctest::Approx(28.1308).epsilon(1e-5));
  CHECK(psnr(plus10, ref) == psnr(ref, plus10));

  // Strictly decreasing in MSE.
  double previous = std::numeric_limits<double>::infinity();
  for (double offset : {0.5, 1.0, 2.0, 8.0, 40.0}) {
    Image shifted = ref;
    for (double& v : shifted.pixels()) v += offset;
    const double value = psnr(ref, shifted);
    CHECK(value < previous);
    previous = value;
  }
  CHECK_THROWS_AS(psnr(ref, Image(20, 21)), DimensionError);
}

TEST_CASE("ssim") {
  const Image ref = testing::make_text_scene().clean;
  CHECK(ssim(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(Image(16, 16, 90.0), Image(16, 16, 90.0)) == doctest::Approx(1.0).epsilon(1e-12));

  Image inverted = ref;
  for (double& v : inverted.pixels()) v = 255.0 - v;
  const double inv = ssim(ref, inverted);
  CHECK(inv < 0.5);
  CHECK(inv >= -1.0);

  const Image noisy = add_gaussian_noise(ref, {25.0, 3});
  const double s = ssim(ref, noisy);
  CHECK(s < 1.0);
  CHECK(s > inv);

  CHECK_THROWS_AS(ssim(Image(10, 30), Image(10, 30)), ParameterError);
  CHECK_THROWS_AS(ssim(ref, Image(12, 12)), DimensionError);
}
