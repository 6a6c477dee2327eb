#include <doctest.h>

#include "agonet/error.hpp"
#include "agonet/voxel_grid.hpp"
#include "oracles.hpp"

using namespace agonet;

namespace {

GridConfig kitti_grid() { return GridConfig::kitti(); }

}  // namespace

TEST_SUITE("voxel_grid") {
  TEST_CASE("grid construction") {
    const GridConfig k = kitti_grid();
    CHECK(k.dims == std::array<int, 3>{1408, 1600, 40});
    CHECK(k.bev_height() == 176);
    CHECK(k.bev_width() == 200);
    const GridConfig d = GridConfig::desk();
    CHECK(d.dims == std::array<int, 3>{16, 16, 8});
    CHECK(d.bev_downsample == 1);
    CHECK_THROWS_AS(GridConfig::make(CropRange{0, 10, 0, 10, 0, 1}, {1, 1, 1}, 3), DomainError);
  }

  TEST_CASE("quantize_point examples") {
    const GridConfig k = kitti_grid();
    const auto origin = quantize_point({0.0, -40.0, -3.0, 0}, k);
    REQUIRE(origin);
    CHECK(*origin == VoxelIndex{0, 0, 0});
    const auto a = quantize_point({10.0, -5.0, -1.0, 0}, k);
    REQUIRE(a);
    CHECK(*a == VoxelIndex{200, 700, 20});
    const auto b = quantize_point({70.39, 39.99, 0.99, 0}, k);
    REQUIRE(b);
    CHECK(*b == VoxelIndex{1407, 1599, 39});
    CHECK_FALSE(quantize_point({-0.01, 0, 0, 0}, k));
    CHECK_FALSE(quantize_point({70.4, 0, 0, 0}, k));
  }

  TEST_CASE("quantize_point is monotone per axis") {
    const GridConfig k = kitti_grid();
    oracle::Rng rng(10);
    for (int i = 0; i < 1000; ++i) {
      const Point3 p{rng.uniform(0, 70), rng.uniform(-40, 39), rng.uniform(-3, 0.9), 0};
      Point3 q = p;
      q.x += rng.uniform(0, 0.3);
      const auto a = quantize_point(p, k);
      const auto b = quantize_point(q, k);
      REQUIRE(a);
      REQUIRE(b);
      CHECK(b->x >= a->x);
    }
  }

  TEST_CASE("voxelize overwrite rule") {
    const GridConfig k = kitti_grid();
    CHECK(voxelize(PointCloud{}, k).entries.empty());
    PointCloud c;
    c.points = {{10.01, 0.01, 0.01, 0.1}, {10.02, 0.02, 0.02, 0.9}, {-5, 0, 0, 0}};
    const auto t = voxelize(c, k);
    REQUIRE(t.entries.size() == 1);
    CHECK(t.entries.begin()->second == c.points[1]);
    CHECK(t.dropped == 1);
  }

  TEST_CASE("voxel occupancy equals the index-set oracle") {
    const GridConfig k = kitti_grid();
    oracle::Rng rng(11);
    PointCloud c;
    for (int i = 0; i < 10000; ++i) {
      c.points.push_back({rng.uniform(-2, 72), rng.uniform(-41, 41), rng.uniform(-3.5, 1.5), 0});
    }
    const auto expected = oracle::occupancy_set(c, k);
    for (std::size_t workers : {1, 3, 8}) {
      const auto t = voxelize(c, k, workers);
      std::set<oracle::Index3> got;
      for (const auto& [idx, p] : t.entries) got.insert({idx.x, idx.y, idx.z});
      CHECK(got == expected);
    }
  }

  TEST_CASE("voxelize is independent of the worker count") {
    const GridConfig d = GridConfig::desk();
    oracle::Rng rng(12);
    PointCloud c;
    for (int i = 0; i < 20000; ++i) {
      c.points.push_back({rng.uniform(0, 8), rng.uniform(-4, 4), rng.uniform(-2, 2), rng.uniform(0, 1)});
    }
    const auto serial = voxelize(c, d, 1);
    for (std::size_t w : {2, 5, 16}) CHECK(voxelize(c, d, w).entries == serial.entries);
  }

  TEST_CASE("permuting points keeps the occupied set") {
    const GridConfig d = GridConfig::desk();
    oracle::Rng rng(13);
    PointCloud c;
    for (int i = 0; i < 500; ++i) c.points.push_back({rng.uniform(0, 8), rng.uniform(-4, 4), rng.uniform(-2, 2), 0});
    PointCloud r = c;
    std::shuffle(r.points.begin(), r.points.end(), rng.gen);
    std::set<VoxelIndex> a, b;
    for (const auto& [i, p] : voxelize(c, d).entries) a.insert(i);
    for (const auto& [i, p] : voxelize(r, d).entries) b.insert(i);
    CHECK(a == b);
  }

  TEST_CASE("BEV occupancy") {
    const GridConfig k = kitti_grid();
    SparseVoxelTensor empty;
    empty.config = k;
    const FeatureMap zero = to_bev_occupancy(empty);
    CHECK(zero.channels == 40);
    CHECK(zero.height == 176);
    CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; }));

    SparseVoxelTensor one;
    one.config = k;
    one.entries[{203, 707, 12}] = Point3{};
    const FeatureMap m = to_bev_occupancy(one);
    CHECK(m.at(12, 25, 88) == 1.0);
    double sum = 0.0;
    for (double v : m.values) sum += v;
    CHECK(sum == 1.0);
  }

  TEST_CASE("BEV occupancy equals the projection oracle") {
    const GridConfig k = kitti_grid();
    oracle::Rng rng(14);
    PointCloud c;
    for (int i = 0; i < 5000; ++i) c.points.push_back({rng.uniform(0, 70), rng.uniform(-40, 40), rng.uniform(-3, 1), 0});
    const auto t = voxelize(c, k);
    const auto expected = oracle::bev_projection(oracle::occupancy_set(c, k), k.bev_downsample);
    const FeatureMap m = to_bev_occupancy(t);
    std::set<oracle::Index3> got;
    for (int ch = 0; ch < m.channels; ++ch) {
      for (int i = 0; i < m.height; ++i) {
        for (int j = 0; j < m.width; ++j) {
          if (m.at(ch, i, j) != 0.0) got.insert({ch, i, j});
        }
      }
    }
    CHECK(got == expected);
    const BevMask occ = occupancy_mask(t);
    std::size_t cells = 0;
    for (int i = 0; i < occ.height; ++i) {
      for (int j = 0; j < occ.width; ++j) {
        bool any = false;
        for (int ch = 0; ch < m.channels; ++ch) any = any || m.at(ch, i, j) != 0.0;
        CHECK(static_cast<bool>(occ.at(i, j)) == any);
        cells += any;
      }
    }
    CHECK(occ.count() == cells);
  }

  TEST_CASE("foreground_mask examples") {
    const GridConfig g = GridConfig::make(CropRange{0, 8, -4, 4, -2, 2}, {0.5, 0.5, 0.5}, 2);
    CHECK(foreground_mask({}, g).count() == 0);
    const BevMask m = foreground_mask({Box3D::make(2.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0)}, g);
    CHECK(m.count() == 4);
    CHECK(m.at(1, 3) == 1);
    CHECK(m.at(1, 4) == 1);
    CHECK(m.at(2, 3) == 1);
    CHECK(m.at(2, 4) == 1);
  }

  TEST_CASE("foreground_mask equals the per-cell oracle") {
    const GridConfig g = GridConfig::desk();
    oracle::Rng rng(15);
    for (int t = 0; t < 50; ++t) {
      std::vector<Box3D> boxes;
      const int n = rng.integer(1, 4);
      for (int i = 0; i < n; ++i) {
        boxes.push_back(Box3D::make(rng.uniform(0, 8), rng.uniform(-4, 4), -1, rng.uniform(0.5, 2.5),
                                    rng.uniform(0.5, 5), 1.5, rng.uniform(-kPi, kPi)));
      }
      const BevMask m = foreground_mask(boxes, g);
      CHECK(m.cells == oracle::foreground_cells(boxes, g));
      const Box3D& b = boxes[0];
      const auto aabb = oracle::footprint_aabb(b);
      if (aabb[0] < 0 || aabb[1] > 8 || aabb[2] < -4 || aabb[3] > 4) continue;
      const BevMask single = foreground_mask({b}, g);
      const double area = single.count() * g.cell_x() * g.cell_y();
      const double band = 2.0 * (b.w + b.l) * g.cell_x();
      CHECK(std::abs(area - b.bev_area()) <= band);
    }
  }
}
