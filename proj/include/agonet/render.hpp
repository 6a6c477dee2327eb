#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "agonet/feature_map.hpp"
#include "agonet/geometry.hpp"
#include "agonet/voxel_grid.hpp"

namespace agonet {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  bool operator==(const Rgb&) const = default;
};

static_assert(sizeof(Rgb) == 3);

inline constexpr Rgb kGtColor{0, 255, 0};
inline constexpr Rgb kBaselineColor{255, 255, 0};
inline constexpr Rgb kAdaptedColor{255, 0, 0};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major

  Image() = default;
  Image(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Image&) const = default;
};

// Viridis-like ramp over [0, 1]; inputs are clamped.
Rgb colormap(double t);

// Image pixel (column, row) of BEV cell (i, j) at scale 1. Forward x points
// up the image and +y to the left.
struct PixelPos {
  int col = 0;
  int row = 0;
};
PixelPos cell_to_pixel(int i, int j, int bev_height, int bev_width);

// Channel-mean heatmap normalized by its maximum; an all-zero map renders
// uniformly as colormap(0). Each cell becomes a scale x scale block.
Image render_heatmap(const FeatureMap& map, int scale = 1);

// Set cells white, others black.
Image render_mask(const BevMask& mask, int scale = 1);

// Footprint outline of `box` in the grid's BEV frame.
void draw_box(Image& image, const Box3D& box, const GridConfig& grid, Rgb color, int scale = 1);

// Deterministic 8-bit RGB PNG encoding.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace agonet
