#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace agonet {

inline constexpr double kPi = 3.14159265358979323846;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  bool operator==(const Point3&) const = default;
};

struct PointCloud {
  std::vector<Point3> points;
  std::string frame_id;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  bool operator==(const PointCloud&) const = default;
};

// Wraps an angle into [-pi, pi).
double normalize_yaw(double yaw);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Gravity-aligned oriented box. `l` runs along the heading (local x), `w`
// along local y and `h` along z. The center is the geometric center.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  double yaw = 0.0;

  // Validates dimensions and normalizes yaw; throws DomainError.
  static Box3D make(double cx, double cy, double cz, double w, double l,
                    double h, double yaw);

  bool valid() const noexcept;
  double bev_area() const noexcept { return w * l; }
  double volume() const noexcept { return w * l * h; }
  double z_min() const noexcept { return cz - 0.5 * h; }
  double z_max() const noexcept { return cz + 0.5 * h; }

  // Footprint corners in counter-clockwise order.
  std::array<Vec2, 4> footprint() const;

  bool operator==(const Box3D&) const = default;
};

enum class Category { Car, Pedestrian, Cyclist, Other };
enum class Difficulty { Easy, Mod, Hard, Unknown };

const char* to_string(Category c);
const char* to_string(Difficulty d);
Category category_from_string(const std::string& name);

struct LabeledObject {
  Box3D box;
  Category category = Category::Car;
  PointCloud interior_points;  // object-local coordinates
  Difficulty difficulty = Difficulty::Unknown;

  bool operator==(const LabeledObject&) const = default;
};

struct Detection {
  Box3D box;
  double score = 0.0;
  Category category = Category::Car;

  bool operator==(const Detection&) const = default;
};

Point3 to_local(const Box3D& box, const Point3& p);
Point3 to_world(const Box3D& box, const Point3& p);

// Translate by -center, then rotate by -yaw.
PointCloud transform_to_local(const Box3D& box, const PointCloud& cloud);
// Exact inverse of transform_to_local up to rounding.
PointCloud transform_to_world(const Box3D& box, const PointCloud& cloud);

// Closed-box containment of a world point, with a slack in meters.
bool contains(const Box3D& box, const Point3& p, double tolerance = 0.0);
bool footprint_contains(const Box3D& box, double x, double y,
                        double tolerance = 0.0);

// Axis-aligned BEV IoU after snapping each yaw to the nearest multiple of
// pi/2 (odd multiples swap w and l).
double bev_rect_iou(const Box3D& a, const Box3D& b);

// Area of the intersection of the two rotated footprints.
double bev_intersection_area(const Box3D& a, const Box3D& b);

// Exact rotated-rectangle IoU in the ground plane.
double rotated_bev_iou(const Box3D& a, const Box3D& b);

// Rotated footprint overlap times vertical overlap over the union volume.
double iou_3d(const Box3D& a, const Box3D& b);

// Area of the convex polygon obtained by clipping `subject` against the
// counter-clockwise convex polygon `clip`.
double convex_clip_area(std::span<const Vec2> subject,
                        std::span<const Vec2> clip);

// Uniform-grid nearest-neighbor index over a fixed point set. Queries are
// exact: the returned distance equals a brute-force scan bit for bit.
class NearestNeighborGrid {
 public:
  explicit NearestNeighborGrid(std::span<const Point3> points);
  NearestNeighborGrid(std::span<const Point3> points, double cell_size);

  // Euclidean distance to the closest indexed point. Throws DomainError if
  // the index is empty.
  double nearest_distance(const Point3& query) const;

  double cell_size() const noexcept { return cell_size_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  void build();
  long cell_coord(double v, int axis) const;

  std::vector<Point3> points_;
  double cell_size_ = 1.0;
  std::array<double, 3> origin_{};
  std::array<long, 3> dims_{};
  std::vector<std::size_t> cell_start_;  // CSR offsets, size cells + 1
  std::vector<std::size_t> cell_items_;
};

// Median nearest-neighbor spacing estimated from a deterministic sample.
double estimate_spacing(std::span<const Point3> points);

double point_distance(const Point3& a, const Point3& b);

enum class DistanceMode { Directed, Symmetric };

// Mean over `src` of the distance to the nearest `dst` point. The symmetric
// mode averages both directions. Throws DomainError on empty inputs.
double avg_closest_point_distance(const PointCloud& src, const PointCloud& dst,
                                  DistanceMode mode = DistanceMode::Directed);

}  // namespace agonet
