#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "agonet/geometry.hpp"
#include "agonet/scene_io.hpp"

namespace agonet {

// Gaussian box dimensions for one object archetype.
struct Archetype {
  Category category = Category::Car;
  double w_mean = 1.6, w_std = 0.06;
  double l_mean = 3.9, l_std = 0.15;
  double h_mean = 1.56, h_std = 0.05;
};

struct SyntheticSpec {
  std::size_t train_scenes = 200;
  std::size_t val_scenes = 50;
  int objects_min = 1;
  int objects_max = 4;
  std::vector<Archetype> archetypes{Archetype{}};
  // Expected surface points per m^2 of projected area at 1 m; falls off as
  // 1 / r^2 with the object's distance from the sensor.
  double density = 200.0;
  double ground_density = 300.0;  // ground points per scene
  int clutter_max = 2;            // unlabeled occluders per scene
  std::array<double, 3> noise{0.01, 0.01, 0.01};
  Point3 sensor{0.0, 0.0, 1.0, 0.0};
  double ground_z = -1.7;
  CropRange range{0.0, 8.0, -4.0, 4.0, -2.0, 2.0};
  double placement_margin = 0.7;  // keep object centers this far inside range
  std::uint64_t seed = 0;

  void validate() const;
};

// Expected number of surface points for a box seen from the sensor,
// ignoring occlusion.
double expected_point_count(const Box3D& box, const SyntheticSpec& spec);

// True when the segment from `origin` to `p` passes through `box`.
bool segment_hits_box(const Point3& origin, const Point3& p, const Box3D& box);

// Poisson-sampled surface points on the sensor-facing faces of `box`,
// dropping those shadowed by any of `occluders`. `unoccluded` receives the
// count before shadowing.
std::vector<Point3> sample_box_surface(const Box3D& box, const std::vector<Box3D>& occluders,
                                       const SyntheticSpec& spec, std::mt19937_64& rng,
                                       std::size_t* unoccluded = nullptr);

// Scene `index` depends only on (spec, index). Coordinates are rounded to
// float so the scene survives a round trip through KITTI files.
Scene generate_scene(const SyntheticSpec& spec, std::size_t index);

std::string scene_id(std::size_t index);

// Writes train + val scenes in KITTI layout with ImageSets/{train,val}.txt.
void write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root,
                             std::size_t workers = 1);

}  // namespace agonet
