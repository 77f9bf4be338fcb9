#pragma once

#include <cstdint>
#include <vector>

#include "tdn/imaging.hpp"

namespace tdn::testing {

/// Binary glyph bitmaps (row-major, 1 = ink).
struct GlyphSet {
  int size = 0;
  std::vector<std::vector<std::uint8_t>> masks;
};

GlyphSet make_glyphs(int count, int size, std::uint64_t seed);

struct TextLayout {
  int pitch_x = 9;   // horizontal glyph cell size
  int pitch_y = 12;  // line height
  int margin = 3;
  double paper = 225.0;
  double ink = 30.0;
  double blank_fraction = 0.12;
};

/// Lines of randomly chosen glyphs stamped on a flat background.
Image render_text(const GlyphSet& glyphs, int width, int height, std::uint64_t seed,
                  const TextLayout& layout = {});

struct TextScene {
  Image clean;
  std::vector<Image> database;
};

/// 128x128 text-like test image plus four database images stamped from the
/// same glyph set with different random arrangements.
TextScene make_text_scene(std::uint64_t seed = 2016, int size = 128, int database_images = 4);

}  // namespace tdn::testing
