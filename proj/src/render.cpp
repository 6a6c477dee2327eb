#include "agonet/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>

#include <png.h>

#include "agonet/container.hpp"
#include "agonet/error.hpp"

namespace agonet {

Rgb colormap(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {{
      {68, 1, 84},
      {59, 82, 139},
      {33, 145, 140},
      {94, 201, 98},
      {253, 231, 37},
  }};
  if (!(t > 0.0)) t = 0.0;
  if (t > 1.0) t = 1.0;
  const double pos = t * (stops.size() - 1);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
  const double f = pos - static_cast<double>(k);
  auto mix = [&](int c) {
    return static_cast<std::uint8_t>(std::lround(stops[k][c] + f * (stops[k + 1][c] - stops[k][c])));
  };
  return {mix(0), mix(1), mix(2)};
}

PixelPos cell_to_pixel(int i, int j, int bev_height, int bev_width) {
  return {bev_width - 1 - j, bev_height - 1 - i};
}

namespace {

void fill_block(Image& img, PixelPos p, int scale, Rgb c) {
  for (int dy = 0; dy < scale; ++dy) {
    for (int dx = 0; dx < scale; ++dx) img.at(p.col * scale + dx, p.row * scale + dy) = c;
  }
}

}  // namespace

Image render_heatmap(const FeatureMap& map, int scale) {
  if (scale < 1) throw DomainError("render: scale must be >= 1");
  Image img(map.width * scale, map.height * scale, colormap(0.0));
  if (map.channels == 0) return img;
  std::vector<double> mean(map.plane(), 0.0);
  for (int c = 0; c < map.channels; ++c) {
    const auto ch = map.channel(c);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += ch[k];
  }
  double peak = 0.0;
  for (double& v : mean) {
    v /= map.channels;
    peak = std::max(peak, v);
  }
  for (int i = 0; i < map.height; ++i) {
    for (int j = 0; j < map.width; ++j) {
      const double v = mean[static_cast<std::size_t>(i) * map.width + j];
      const double t = peak > 0.0 ? v / peak : 0.0;
      fill_block(img, cell_to_pixel(i, j, map.height, map.width), scale, colormap(t));
    }
  }
  return img;
}

Image render_mask(const BevMask& mask, int scale) {
  if (scale < 1) throw DomainError("render: scale must be >= 1");
  Image img(mask.width * scale, mask.height * scale, Rgb{0, 0, 0});
  for (int i = 0; i < mask.height; ++i) {
    for (int j = 0; j < mask.width; ++j) {
      if (mask.at(i, j)) fill_block(img, cell_to_pixel(i, j, mask.height, mask.width), scale, {255, 255, 255});
    }
  }
  return img;
}

void draw_box(Image& image, const Box3D& box, const GridConfig& grid, Rgb color, int scale) {
  const int H = grid.bev_height();
  const int W = grid.bev_width();
  auto to_px = [&](const Vec2& v) {
    const double u = (W - (v.y - grid.range.y_min) / grid.cell_y()) * scale;
    const double r = (H - (v.x - grid.range.x_min) / grid.cell_x()) * scale;
    return std::array<double, 2>{u, r};
  };
  const auto corners = box.footprint();
  for (int k = 0; k < 4; ++k) {
    const auto a = to_px(corners[k]);
    const auto b = to_px(corners[(k + 1) % 4]);
    const double len = std::max(std::abs(b[0] - a[0]), std::abs(b[1] - a[1]));
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const int x = static_cast<int>(std::floor(a[0] + t * (b[0] - a[0])));
      const int y = static_cast<int>(std::floor(a[1] + t * (b[1] - a[1])));
      if (x >= 0 && y >= 0 && x < image.width && y < image.height) image.at(x, y) = color;
    }
  }
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw DomainError("png: empty image");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png: cannot create info");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  auto* base = const_cast<Rgb*>(image.pixels.data());
  for (int y = 0; y < image.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(base + static_cast<std::size_t>(y) * image.width);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  write_file_bytes(path, bytes);
}

}  // namespace agonet
