#include "agonet/voxel_grid.hpp"

#include <algorithm>
#include <cmath>

#include "agonet/error.hpp"
#include "agonet/parallel.hpp"

namespace agonet {

GridConfig GridConfig::make(const CropRange& range, std::array<double, 3> steps,
                            int bev_downsample) {
  if (!range.valid()) throw DomainError("GridConfig: invalid range");
  if (bev_downsample < 1) throw DomainError("GridConfig: bev_downsample must be >= 1");
  GridConfig g;
  g.range = range;
  g.steps = steps;
  g.bev_downsample = bev_downsample;
  const std::array<double, 3> extent{range.x_max - range.x_min,
                                     range.y_max - range.y_min,
                                     range.z_max - range.z_min};
  for (int a = 0; a < 3; ++a) {
    if (!(steps[a] > 0.0)) throw DomainError("GridConfig: steps must be positive");
    // Quotients such as 70.4 / 0.05 land a few ulps above the integer.
    g.dims[a] = static_cast<int>(std::ceil(extent[a] / steps[a] - 1e-9));
  }
  if (g.dims[0] % bev_downsample != 0 || g.dims[1] % bev_downsample != 0) {
    throw DomainError("GridConfig: bev_downsample must divide the horizontal dims");
  }
  return g;
}

GridConfig GridConfig::kitti() {
  return make(CropRange{}, {0.05, 0.05, 0.1}, 8);
}

GridConfig GridConfig::desk() {
  return make(CropRange{0.0, 8.0, -4.0, 4.0, -2.0, 2.0}, {0.5, 0.5, 0.5}, 1);
}

Vec2 GridConfig::cell_center(int i, int j) const noexcept {
  return {range.x_min + (i + 0.5) * cell_x(), range.y_min + (j + 0.5) * cell_y()};
}

std::size_t BevMask::count() const noexcept {
  std::size_t n = 0;
  for (auto c : cells) n += c;
  return n;
}

std::optional<VoxelIndex> quantize_point(const Point3& p, const GridConfig& config) {
  const std::array<double, 3> c{p.x - config.range.x_min, p.y - config.range.y_min,
                                p.z - config.range.z_min};
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double q = std::floor(c[a] / config.steps[a]);
    if (!(q >= 0.0) || q >= static_cast<double>(config.dims[a])) return std::nullopt;
    idx[a] = static_cast<int>(q);
  }
  return VoxelIndex{idx[0], idx[1], idx[2]};
}

SparseVoxelTensor voxelize(const PointCloud& cloud, const GridConfig& config,
                           std::size_t workers) {
  SparseVoxelTensor out;
  out.config = config;
  const std::size_t n = cloud.size();
  if (workers == 0) workers = default_workers();
  workers = std::max<std::size_t>(1, std::min(workers, n / 4096 + 1));
  struct Chunk {
    std::map<VoxelIndex, Point3> entries;
    std::size_t dropped = 0;
  };
  std::vector<Chunk> chunks(workers);
  parallel_for(workers, workers, [&](std::size_t w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    Chunk& ch = chunks[w];
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = quantize_point(cloud.points[i], config);
      if (!idx) {
        ++ch.dropped;
        continue;
      }
      ch.entries.insert_or_assign(*idx, cloud.points[i]);
    }
  });
  for (auto& ch : chunks) {
    out.dropped += ch.dropped;
    for (auto& [idx, p] : ch.entries) out.entries.insert_or_assign(idx, p);
  }
  return out;
}

FeatureMap to_bev_occupancy(const SparseVoxelTensor& tensor) {
  const GridConfig& g = tensor.config;
  FeatureMap map(g.dims[2], g.bev_height(), g.bev_width(), FeatureRole::Occupancy);
  for (const auto& [idx, p] : tensor.entries) {
    map.at(idx.z, idx.x / g.bev_downsample, idx.y / g.bev_downsample) = 1.0;
  }
  return map;
}

BevMask occupancy_mask(const SparseVoxelTensor& tensor) {
  const GridConfig& g = tensor.config;
  BevMask m;
  m.height = g.bev_height();
  m.width = g.bev_width();
  m.config = g;
  m.cells.assign(static_cast<std::size_t>(m.height) * m.width, 0);
  for (const auto& [idx, p] : tensor.entries) {
    m.cells[static_cast<std::size_t>(idx.x / g.bev_downsample) * m.width +
            idx.y / g.bev_downsample] = 1;
  }
  return m;
}

BevMask foreground_mask(const std::vector<Box3D>& boxes, const GridConfig& config) {
  BevMask m;
  m.height = config.bev_height();
  m.width = config.bev_width();
  m.config = config;
  m.cells.assign(static_cast<std::size_t>(m.height) * m.width, 0);
  for (const auto& box : boxes) {
    // Only visit cells inside the footprint's bounding rectangle.
    const double reach = 0.5 * std::hypot(box.w, box.l);
    const int i0 = std::max(0, static_cast<int>(std::floor((box.cx - reach - config.range.x_min) / config.cell_x())));
    const int i1 = std::min(m.height - 1, static_cast<int>(std::floor((box.cx + reach - config.range.x_min) / config.cell_x())));
    const int j0 = std::max(0, static_cast<int>(std::floor((box.cy - reach - config.range.y_min) / config.cell_y())));
    const int j1 = std::min(m.width - 1, static_cast<int>(std::floor((box.cy + reach - config.range.y_min) / config.cell_y())));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const Vec2 c = config.cell_center(i, j);
        if (footprint_contains(box, c.x, c.y)) {
          m.cells[static_cast<std::size_t>(i) * m.width + j] = 1;
        }
      }
    }
  }
  return m;
}

}  // namespace agonet
