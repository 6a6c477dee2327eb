#include <doctest.h>

#include "agonet/error.hpp"
#include "agonet/render.hpp"
#include "oracles.hpp"

using namespace agonet;

TEST_SUITE("render") {
  TEST_CASE("colormap endpoints and clamping") {
    CHECK(colormap(-1.0) == colormap(0.0));
    CHECK(colormap(2.0) == colormap(1.0));
    CHECK_FALSE(colormap(0.0) == colormap(1.0));
  }

  TEST_CASE("cell_to_pixel orientation") {
    const PixelPos p = cell_to_pixel(0, 0, 16, 16);
    CHECK(p.col == 15);
    CHECK(p.row == 15);
    const PixelPos q = cell_to_pixel(15, 15, 16, 16);
    CHECK(q.col == 0);
    CHECK(q.row == 0);
  }

  TEST_CASE("all-zero heatmap is uniform") {
    const FeatureMap m(3, 5, 6);
    const Image img = render_heatmap(m, 2);
    CHECK(img.width == 12);
    CHECK(img.height == 10);
    for (const auto& px : img.pixels) CHECK(px == colormap(0.0));
  }

  TEST_CASE("single hot cell renders at its pixel") {
    FeatureMap m(2, 4, 5);
    m.at(0, 1, 3) = 2.0;
    m.at(1, 1, 3) = 4.0;
    const Image img = render_heatmap(m, 1);
    const PixelPos p = cell_to_pixel(1, 3, 4, 5);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const bool hot = x == p.col && y == p.row;
        CHECK(img.at(x, y) == (hot ? colormap(1.0) : colormap(0.0)));
      }
    }
    CHECK_THROWS_AS(render_heatmap(m, 0), DomainError);
  }

  TEST_CASE("mask pixels equal the foreground oracle") {
    const GridConfig g = GridConfig::desk();
    oracle::Rng rng(60);
    for (int t = 0; t < 10; ++t) {
      std::vector<Box3D> boxes;
      for (int k = 0; k < 3; ++k) {
        boxes.push_back(Box3D::make(rng.uniform(1, 7), rng.uniform(-3, 3), -1, 1.6, 3.9, 1.5, rng.uniform(-kPi, kPi)));
      }
      const BevMask mask = foreground_mask(boxes, g);
      const auto want = oracle::foreground_cells(boxes, g);
      const int scale = 2;
      const Image img = render_mask(mask, scale);
      for (int i = 0; i < g.bev_height(); ++i) {
        for (int j = 0; j < g.bev_width(); ++j) {
          const PixelPos p = cell_to_pixel(i, j, g.bev_height(), g.bev_width());
          const bool set = want[static_cast<std::size_t>(i) * g.bev_width() + j] != 0;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) {
              CHECK(img.at(p.col * scale + dx, p.row * scale + dy) == (set ? Rgb{255, 255, 255} : Rgb{0, 0, 0}));
            }
          }
        }
      }
    }
  }

  TEST_CASE("draw_box marks pixels in the box color") {
    const GridConfig g = GridConfig::desk();
    Image img(g.bev_width() * 4, g.bev_height() * 4);
    draw_box(img, Box3D::make(4, 0, -1, 1.6, 3.9, 1.5, 0.2), g, kGtColor, 4);
    std::size_t colored = 0;
    for (const auto& px : img.pixels) colored += px == kGtColor;
    CHECK(colored > 20);
  }

  TEST_CASE("png encoding is deterministic") {
    FeatureMap m(1, 3, 4);
    m.at(0, 2, 1) = 1.0;
    const Image img = render_heatmap(m, 3);
    const auto a = encode_png(img);
    const auto b = encode_png(img);
    CHECK(a == b);
    REQUIRE(a.size() > 8);
    const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    for (int k = 0; k < 8; ++k) CHECK(a[k] == sig[k]);
  }
}
