#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "agonet/feature_map.hpp"
#include "agonet/geometry.hpp"
#include "agonet/scene_io.hpp"

namespace agonet {

struct GridConfig {
  std::array<double, 3> steps{0.05, 0.05, 0.1};
  CropRange range;
  std::array<int, 3> dims{1408, 1600, 40};
  int bev_downsample = 8;

  // Derives dims from range and steps; throws DomainError when the
  // downsample factor does not divide the horizontal dims.
  static GridConfig make(const CropRange& range, std::array<double, 3> steps,
                         int bev_downsample);
  // Full KITTI grid: 1408 x 1600 x 40 voxels, 176 x 200 BEV cells.
  static GridConfig kitti();
  // Desk-scale world: 8 m x 8 m x 4 m at 0.5 m, no downsampling.
  static GridConfig desk();

  int bev_height() const noexcept { return dims[0] / bev_downsample; }
  int bev_width() const noexcept { return dims[1] / bev_downsample; }
  double cell_x() const noexcept { return steps[0] * bev_downsample; }
  double cell_y() const noexcept { return steps[1] * bev_downsample; }
  // Center of BEV cell (i, j) in world coordinates.
  Vec2 cell_center(int i, int j) const noexcept;

  bool operator==(const GridConfig&) const = default;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct SparseVoxelTensor {
  std::map<VoxelIndex, Point3> entries;
  GridConfig config;
  std::size_t dropped = 0;  // points outside the grid
};

// Per-cell binary map at BEV feature resolution.
struct BevMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;
  GridConfig config;

  std::uint8_t at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * width + j];
  }
  std::size_t count() const noexcept;
};

// floor((C - origin) / S) per axis; nullopt when any axis falls outside.
std::optional<VoxelIndex> quantize_point(const Point3& p, const GridConfig& config);

// Later points overwrite earlier ones that share a voxel. Work is split into
// contiguous input-order chunks and merged in chunk order.
SparseVoxelTensor voxelize(const PointCloud& cloud, const GridConfig& config,
                           std::size_t workers = 1);

// One channel per z-bin, max-pooled over bev_downsample x bev_downsample.
FeatureMap to_bev_occupancy(const SparseVoxelTensor& tensor);

// Cell is set iff any voxel projects into it.
BevMask occupancy_mask(const SparseVoxelTensor& tensor);

// Cell is set iff its center lies inside the rotated footprint of a box.
BevMask foreground_mask(const std::vector<Box3D>& boxes, const GridConfig& config);

}  // namespace agonet
