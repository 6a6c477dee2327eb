#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "agonet/geometry.hpp"

namespace agonet {

// Axis-aligned region of interest; membership is strict on every side.
struct CropRange {
  double x_min = 0.0, x_max = 70.4;
  double y_min = -40.0, y_max = 40.0;
  double z_min = -3.0, z_max = 1.0;

  bool valid() const noexcept;
  bool contains(double x, double y, double z) const noexcept;
  bool contains(const Point3& p) const noexcept { return contains(p.x, p.y, p.z); }

  bool operator==(const CropRange&) const = default;
};

// R0_rect and Tr_velo_to_cam from a KITTI calib file.
struct Calibration {
  std::array<double, 9> rect_rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 12> velo_to_cam{0, -1, 0, 0, 0, 0, -1, 0, 1, 0, 0, 0};

  // Identity rectification and the bare LiDAR->camera axis permutation
  // (x forward -> z, y left -> -x, z up -> -y).
  static Calibration canonical() { return {}; }

  bool valid() const noexcept;

  // LiDAR point -> rectified camera coordinates.
  std::array<double, 3> lidar_to_camera(const std::array<double, 3>& p) const;
  std::array<double, 3> camera_to_lidar(const std::array<double, 3>& p) const;
  // Heading conversions between camera rotation_y and LiDAR yaw.
  double lidar_yaw_from_camera(double rotation_y) const;
  double camera_yaw_from_lidar(double yaw) const;
};

struct Scene {
  PointCloud cloud;
  std::vector<LabeledObject> objects;
  std::string id;

  bool operator==(const Scene&) const = default;
};

// Rotation-grouped library of object-local model clouds.
struct ConceptualModelBank {
  std::vector<std::vector<LabeledObject>> groups;
  std::vector<std::size_t> group_sizes;  // objects binned per group at build
  double selection_percent = 20.0;

  std::size_t group_count() const noexcept { return groups.size(); }
  std::size_t model_count() const noexcept;
  bool empty() const noexcept { return model_count() == 0; }

  bool operator==(const ConceptualModelBank&) const = default;
};

// One raw line of a KITTI label file.
struct KittiLabel {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom (pixels)
  double h = 0.0, w = 0.0, l = 0.0;
  std::array<double, 3> location{};  // bottom center, camera frame
  double rotation_y = 0.0;
  double score = 1.0;
  bool has_score = false;
};

struct ParsedLabels {
  std::vector<LabeledObject> objects;
  std::vector<KittiLabel> ignored;  // DontCare regions
};

// Standard KITTI difficulty from 2D height, occlusion and truncation.
Difficulty kitti_difficulty(const KittiLabel& label);

// --- velodyne ---------------------------------------------------------------

PointCloud read_velodyne_bin(const std::filesystem::path& path);
PointCloud decode_velodyne(const std::vector<std::uint8_t>& bytes);
void write_velodyne_bin(const std::filesystem::path& path, const PointCloud& cloud);

// --- labels and calibration -------------------------------------------------

KittiLabel parse_kitti_label_line(const std::string& line, std::size_t line_number);
ParsedLabels parse_kitti_label_text(const std::string& text, const Calibration& calib);
ParsedLabels parse_kitti_label(const std::filesystem::path& path, const Calibration& calib);

// LiDAR-frame object -> KITTI label line. Truncation, occlusion and 2D box
// height are synthesized so that the stored difficulty survives a reparse.
KittiLabel to_kitti_label(const LabeledObject& object, const Calibration& calib);
std::string format_kitti_label(const KittiLabel& label);
std::string serialize_kitti_labels(const std::vector<LabeledObject>& objects,
                                   const Calibration& calib);

// Result-format lines (label line with the score appended).
std::string serialize_kitti_detections(const std::vector<Detection>& dets,
                                       const Calibration& calib);
std::vector<Detection> parse_kitti_detections(const std::string& text,
                                              const Calibration& calib);

Calibration parse_calibration_text(const std::string& text);
Calibration read_calibration(const std::filesystem::path& path);
std::string serialize_calibration(const Calibration& calib);

// --- scene operations --------------------------------------------------------

// Fills each object's interior_points (object-local) from the scene cloud.
void assign_interior_points(Scene& scene, double tolerance = 1e-6);

// Keeps points strictly inside `range` and objects whose centers are inside.
Scene crop_scene(const Scene& scene, const CropRange& range);

// Drops points outside a symmetric horizontal camera field of view.
Scene crop_to_camera_fov(const Scene& scene, const Calibration& calib,
                         double half_angle_rad);

// --- native containers -------------------------------------------------------

void save_bank(const ConceptualModelBank& bank, const std::filesystem::path& path);
ConceptualModelBank load_bank(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_bank(const ConceptualModelBank& bank);
ConceptualModelBank decode_bank(std::vector<std::uint8_t> bytes);

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

// --- KITTI directory layout ---------------------------------------------------

// <root>/training/{velodyne,label_2,calib}/<id>.{bin,txt} plus
// <root>/ImageSets/<split>.txt.
struct KittiLayout {
  std::filesystem::path root;

  std::filesystem::path velodyne(const std::string& id) const;
  std::filesystem::path label(const std::string& id) const;
  std::filesystem::path calib(const std::string& id) const;
  std::filesystem::path split_file(const std::string& split) const;

  std::vector<std::string> read_split(const std::string& split) const;
  void write_split(const std::string& split, const std::vector<std::string>& ids) const;

  // Loads cloud, labels and calibration and assigns interior points.
  Scene load_scene(const std::string& id) const;
  void save_scene(const Scene& scene, const Calibration& calib) const;
};

}  // namespace agonet
