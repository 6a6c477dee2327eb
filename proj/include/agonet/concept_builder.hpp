#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "agonet/geometry.hpp"
#include "agonet/scene_io.hpp"

namespace agonet {

enum class ConstructionStrategy { AddWithRemoval, Replace };

struct ConstructionConfig {
  int groups = 24;                // M
  double top_percent = 20.0;      // K
  double removal_radius = 0.25;   // theta, meters
  ConstructionStrategy strategy = ConstructionStrategy::AddWithRemoval;
  std::size_t min_model_points = 5;
  bool match_within_group = false;
  DistanceMode distance = DistanceMode::Directed;

  void validate() const;
};

// Yaw bin k covers [-pi + k * 2pi/M, -pi + (k + 1) * 2pi/M).
int yaw_group(double yaw, int groups);

// Bins objects by yaw and keeps, per bin, the ceil(K% * bin size) objects
// with the most interior points (ties: earlier input first). Objects below
// min_model_points are never kept.
ConceptualModelBank build_bank(const std::vector<LabeledObject>& objects,
                               const ConstructionConfig& config);

struct ModelMatch {
  std::size_t group = 0;
  std::size_t member = 0;
  std::size_t flat_index = 0;  // position in group-major order
  double distance = 0.0;
};

// Bank member minimizing the average closest point distance from the
// object's local points to the member's local points. Ties prefer more
// model points, then the lower flat index.
ModelMatch find_model(const LabeledObject& object, const ConceptualModelBank& bank,
                      const ConstructionConfig& config = {});

const LabeledObject& match_model(const LabeledObject& object,
                                 const ConceptualModelBank& bank,
                                 const ConstructionConfig& config = {});

struct CompletionStats {
  std::size_t original = 0;
  std::size_t model = 0;
  std::size_t removed = 0;
  std::size_t added = 0;
};

// Scales the model per axis to the object's box, poses it into the object's
// world frame and merges it with `world_points` (the object's original
// points in world coordinates) according to the strategy.
PointCloud complete_object(const LabeledObject& object, const LabeledObject& model,
                           const ConstructionConfig& config,
                           const std::vector<Point3>& world_points,
                           CompletionStats* stats = nullptr);

// Same, with the original points taken from object.interior_points.
PointCloud complete_object(const LabeledObject& object, const LabeledObject& model,
                           const ConstructionConfig& config);

struct ConstructionReport {
  std::size_t scenes = 0;
  std::size_t objects = 0;
  std::size_t completed = 0;
  std::size_t skipped = 0;  // objects without points or failed matches
  std::size_t points_added = 0;
  std::size_t points_removed = 0;

  void merge(const ConstructionReport& other);
};

// Background points are kept in order; each object's points are replaced by
// its completion. Boxes and labels are untouched.
Scene build_conceptual_scene(const Scene& scene, const ConceptualModelBank& bank,
                             const ConstructionConfig& config,
                             ConstructionReport* report = nullptr);

std::vector<Scene> build_conceptual_scenes(const std::vector<Scene>& scenes,
                                           const ConceptualModelBank& bank,
                                           const ConstructionConfig& config,
                                           ConstructionReport* report = nullptr,
                                           std::size_t workers = 1);

// JSON summary of a bank and construction run.
std::string construction_report_json(const ConceptualModelBank& bank,
                                     const ConstructionReport& report,
                                     const ConstructionConfig& config);

// ---------------------------------------------------------------------------
// Paired augmentation

// A ground-truth object cut from a training scene, in world coordinates,
// together with its completed counterpart.
struct SampledObject {
  LabeledObject object;
  std::vector<Point3> perceptual_points;
  std::vector<Point3> conceptual_points;
};

struct SamplerDb {
  std::vector<SampledObject> samples;
};

// Collects every object with at least `min_points` points from aligned
// perceptual/conceptual scene pairs.
SamplerDb build_sampler_db(const std::vector<Scene>& perceptual,
                           const std::vector<Scene>& conceptual,
                           std::size_t min_points = 5);

struct AugmentConfig {
  int max_samples = 2;               // pasted objects per scene
  int retry_budget = 20;
  double rotation_range = kPi / 8;   // uniform in +-range
  double scale_min = 0.95;
  double scale_max = 1.05;
  bool flip_y = true;
  CropRange range = {0.0, 8.0, -4.0, 4.0, -2.0, 2.0};
};

struct AugmentedPair {
  Scene perceptual;
  Scene conceptual;
  std::size_t pasted = 0;
  std::size_t skipped = 0;
};

// Cut-and-paste sampling followed by a global rotation, scaling and flip,
// all drawn once from `seed` and applied identically to both scenes.
AugmentedPair paired_augment(const Scene& perceptual, const Scene& conceptual,
                             const SamplerDb& db, std::uint64_t seed,
                             const AugmentConfig& config = {});

}  // namespace agonet
