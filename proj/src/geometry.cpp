#include "agonet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "agonet/error.hpp"

namespace agonet {

double normalize_yaw(double yaw) {
  if (yaw >= -kPi && yaw < kPi) return yaw;
  if (!std::isfinite(yaw)) throw DomainError("normalize_yaw: non-finite yaw");
  double wrapped = std::fmod(yaw + kPi, 2.0 * kPi);
  if (wrapped < 0.0) wrapped += 2.0 * kPi;
  double out = wrapped - kPi;
  if (out >= kPi) out = -kPi;
  if (out < -kPi) out = -kPi;
  return out;
}

Box3D Box3D::make(double cx, double cy, double cz, double w, double l,
                  double h, double yaw) {
  Box3D b{cx, cy, cz, w, l, h, 0.0};
  if (!(w > 0.0 && l > 0.0 && h > 0.0)) {
    throw DomainError("Box3D: dimensions must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(cz) ||
      !std::isfinite(w) || !std::isfinite(l) || !std::isfinite(h)) {
    throw DomainError("Box3D: non-finite field");
  }
  b.yaw = normalize_yaw(yaw);
  return b;
}

bool Box3D::valid() const noexcept {
  return w > 0.0 && l > 0.0 && h > 0.0 && std::isfinite(cx) &&
         std::isfinite(cy) && std::isfinite(cz) && std::isfinite(w) &&
         std::isfinite(l) && std::isfinite(h) && yaw >= -kPi && yaw < kPi;
}

std::array<Vec2, 4> Box3D::footprint() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = 0.5 * l;
  const double hw = 0.5 * w;
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {c * local[i].x - s * local[i].y + cx,
              s * local[i].x + c * local[i].y + cy};
  }
  return out;
}

const char* to_string(Category c) {
  switch (c) {
    case Category::Car: return "Car";
    case Category::Pedestrian: return "Pedestrian";
    case Category::Cyclist: return "Cyclist";
    case Category::Other: return "Other";
  }
  return "Other";
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "Easy";
    case Difficulty::Mod: return "Mod";
    case Difficulty::Hard: return "Hard";
    case Difficulty::Unknown: return "Unknown";
  }
  return "Unknown";
}

Category category_from_string(const std::string& name) {
  if (name == "Car") return Category::Car;
  if (name == "Pedestrian") return Category::Pedestrian;
  if (name == "Cyclist") return Category::Cyclist;
  return Category::Other;
}

Point3 to_local(const Box3D& box, const Point3& p) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - box.cz, p.intensity};
}

Point3 to_world(const Box3D& box, const Point3& p) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  return {c * p.x - s * p.y + box.cx, s * p.x + c * p.y + box.cy,
          p.z + box.cz, p.intensity};
}

PointCloud transform_to_local(const Box3D& box, const PointCloud& cloud) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(to_local(box, p));
  return out;
}

PointCloud transform_to_world(const Box3D& box, const PointCloud& cloud) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(to_world(box, p));
  return out;
}

bool contains(const Box3D& box, const Point3& p, double tolerance) {
  const Point3 q = to_local(box, p);
  return std::abs(q.x) <= 0.5 * box.l + tolerance &&
         std::abs(q.y) <= 0.5 * box.w + tolerance &&
         std::abs(q.z) <= 0.5 * box.h + tolerance;
}

bool footprint_contains(const Box3D& box, double x, double y,
                        double tolerance) {
  const Point3 q = to_local(box, {x, y, box.cz, 0.0});
  return std::abs(q.x) <= 0.5 * box.l + tolerance &&
         std::abs(q.y) <= 0.5 * box.w + tolerance;
}

namespace {

struct Rect {
  double x0, x1, y0, y1;
};

Rect snapped_rect(const Box3D& b) {
  const long k = std::lround(b.yaw / (0.5 * kPi));
  const bool swap = (k % 2) != 0;
  const double ex = 0.5 * (swap ? b.w : b.l);
  const double ey = 0.5 * (swap ? b.l : b.w);
  return {b.cx - ex, b.cx + ex, b.cy - ey, b.cy + ey};
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    acc += a.x * b.y - a.y * b.x;
  }
  return 0.5 * std::abs(acc);
}

// Strict total order on boxes so pairwise routines can pick a canonical
// argument order and stay exactly symmetric.
bool box_less(const Box3D& a, const Box3D& b) {
  const std::array<double, 7> ka{a.cx, a.cy, a.cz, a.w, a.l, a.h, a.yaw};
  const std::array<double, 7> kb{b.cx, b.cy, b.cz, b.w, b.l, b.h, b.yaw};
  return ka < kb;
}

constexpr double kCollinearEps = 1e-12;

}  // namespace

double bev_rect_iou(const Box3D& a, const Box3D& b) {
  const Rect ra = snapped_rect(a);
  const Rect rb = snapped_rect(b);
  const double iw = std::min(ra.x1, rb.x1) - std::max(ra.x0, rb.x0);
  const double ih = std::min(ra.y1, rb.y1) - std::max(ra.y0, rb.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (ra.x1 - ra.x0) * (ra.y1 - ra.y0);
  const double area_b = (rb.x1 - rb.x0) * (rb.y1 - rb.y0);
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

double convex_clip_area(std::span<const Vec2> subject,
                        std::span<const Vec2> clip) {
  std::vector<Vec2> poly(subject.begin(), subject.end());
  std::vector<Vec2> next;
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Vec2& c0 = clip[e];
    const Vec2& c1 = clip[(e + 1) % clip.size()];
    next.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& p = poly[i];
      const Vec2& q = poly[(i + 1) % poly.size()];
      const double dp = cross(c0, c1, p);
      const double dq = cross(c0, c1, q);
      const bool p_in = dp >= -kCollinearEps;
      const bool q_in = dq >= -kCollinearEps;
      if (p_in) next.push_back(p);
      if (p_in != q_in) {
        const double denom = dp - dq;
        if (std::abs(denom) > kCollinearEps) {
          const double t = dp / denom;
          next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
      }
    }
    poly.swap(next);
  }
  const double area = polygon_area(poly);
  return area > kCollinearEps ? area : 0.0;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const Box3D& first = box_less(b, a) ? b : a;
  const Box3D& second = box_less(b, a) ? a : b;
  const double dx = first.cx - second.cx;
  const double dy = first.cy - second.cy;
  const double reach = 0.5 * (std::hypot(first.w, first.l) +
                              std::hypot(second.w, second.l));
  if (dx * dx + dy * dy > reach * reach) return 0.0;
  const auto pa = first.footprint();
  const auto pb = second.footprint();
  return convex_clip_area(pa, pb);
}

double rotated_bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const bool swap = box_less(b, a);
  const double area_first = swap ? b.bev_area() : a.bev_area();
  const double area_second = swap ? a.bev_area() : b.bev_area();
  const double uni = area_first + area_second - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * dz;
  if (inter <= 0.0) return 0.0;
  const bool swap = box_less(b, a);
  const double vol_first = swap ? b.volume() : a.volume();
  const double vol_second = swap ? a.volume() : b.volume();
  const double uni = vol_first + vol_second - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Nearest-neighbor grid

double point_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double estimate_spacing(std::span<const Point3> points) {
  const std::size_t n = points.size();
  if (n < 2) return 1.0;
  const std::size_t samples = std::min<std::size_t>(n, 64);
  const std::size_t stride = n / samples;
  std::vector<double> nn;
  nn.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = s * stride;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      best = std::min(best, point_distance(points[i], points[j]));
    }
    nn.push_back(best);
  }
  std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
  return nn[nn.size() / 2];
}

NearestNeighborGrid::NearestNeighborGrid(std::span<const Point3> points)
    : NearestNeighborGrid(points, estimate_spacing(points)) {}

NearestNeighborGrid::NearestNeighborGrid(std::span<const Point3> points,
                                         double cell_size)
    : points_(points.begin(), points.end()), cell_size_(cell_size) {
  build();
}

long NearestNeighborGrid::cell_coord(double v, int axis) const {
  const double c = std::floor((v - origin_[axis]) / cell_size_);
  return static_cast<long>(std::clamp(c, -1e9, 1e9));
}

void NearestNeighborGrid::build() {
  if (points_.empty()) return;
  std::array<double, 3> lo{points_[0].x, points_[0].y, points_[0].z};
  std::array<double, 3> hi = lo;
  for (const auto& p : points_) {
    const std::array<double, 3> v{p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_)) {
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    cell_size_ = extent > 0.0 ? extent / std::cbrt(static_cast<double>(points_.size()))
                              : 1.0;
  }
  // Bound the number of cells relative to the point count.
  const double max_cells = 8.0 * static_cast<double>(points_.size()) + 64.0;
  for (;;) {
    double cells = 1.0;
    for (int a = 0; a < 3; ++a) cells *= std::floor((hi[a] - lo[a]) / cell_size_) + 1.0;
    if (cells <= max_cells) break;
    cell_size_ *= 1.5;
  }
  origin_ = lo;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = static_cast<long>(std::floor((hi[a] - lo[a]) / cell_size_)) + 1;
  }
  const std::size_t n_cells =
      static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> cell_of(points_.size());
  cell_start_.assign(n_cells + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const long cx = std::clamp(cell_coord(points_[i].x, 0), 0L, dims_[0] - 1);
    const long cy = std::clamp(cell_coord(points_[i].y, 1), 0L, dims_[1] - 1);
    const long cz = std::clamp(cell_coord(points_[i].z, 2), 0L, dims_[2] - 1);
    cell_of[i] = static_cast<std::size_t>((cx * dims_[1] + cy) * dims_[2] + cz);
    ++cell_start_[cell_of[i] + 1];
  }
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  cell_items_.resize(points_.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cell_items_[fill[cell_of[i]]++] = i;
  }
}

double NearestNeighborGrid::nearest_distance(const Point3& q) const {
  if (points_.empty()) throw DomainError("nearest_distance: empty index");
  const std::array<long, 3> qc{cell_coord(q.x, 0), cell_coord(q.y, 1),
                               cell_coord(q.z, 2)};
  long r_start = 0;
  long r_end = 0;
  for (int a = 0; a < 3; ++a) {
    const long below = -qc[a];
    const long above = qc[a] - (dims_[a] - 1);
    r_start = std::max({r_start, below, above});
    r_end = std::max({r_end, std::abs(qc[a]), std::abs(qc[a] - (dims_[a] - 1))});
  }
  double best_sq = std::numeric_limits<double>::infinity();
  auto scan_cell = [&](long i, long j, long k) {
    const std::size_t c = static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k);
    for (std::size_t t = cell_start_[c]; t < cell_start_[c + 1]; ++t) {
      const Point3& p = points_[cell_items_[t]];
      const double dx = q.x - p.x;
      const double dy = q.y - p.y;
      const double dz = q.z - p.z;
      best_sq = std::min(best_sq, dx * dx + dy * dy + dz * dz);
    }
  };
  for (long r = r_start; r <= r_end; ++r) {
    const long i0 = std::max(0L, qc[0] - r), i1 = std::min(dims_[0] - 1, qc[0] + r);
    const long j0 = std::max(0L, qc[1] - r), j1 = std::min(dims_[1] - 1, qc[1] + r);
    const long k0 = std::max(0L, qc[2] - r), k1 = std::min(dims_[2] - 1, qc[2] + r);
    for (long i = i0; i <= i1; ++i) {
      const bool edge_i = std::abs(i - qc[0]) == r;
      for (long j = j0; j <= j1; ++j) {
        const bool edge_j = std::abs(j - qc[1]) == r;
        if (edge_i || edge_j) {
          for (long k = k0; k <= k1; ++k) scan_cell(i, j, k);
        } else {
          if (qc[2] - r >= 0 && qc[2] - r < dims_[2]) scan_cell(i, j, qc[2] - r);
          if (r > 0 && qc[2] + r >= 0 && qc[2] + r < dims_[2]) scan_cell(i, j, qc[2] + r);
        }
      }
    }
    // Anything in ring r + 1 or beyond is at least (r - 1) cells away even
    // if the query's own cell was rounded into a neighbor.
    const double bound = static_cast<double>(r - 1) * cell_size_;
    if (bound > 0.0 && best_sq <= bound * bound) break;
  }
  return std::sqrt(best_sq);
}

double avg_closest_point_distance(const PointCloud& src, const PointCloud& dst,
                                  DistanceMode mode) {
  if (src.empty() || dst.empty()) {
    throw DomainError("avg_closest_point_distance: empty point cloud");
  }
  auto directed = [](const PointCloud& from, const PointCloud& to) {
    const NearestNeighborGrid index(to.points);
    double sum = 0.0;
    for (const auto& p : from.points) sum += index.nearest_distance(p);
    return sum / static_cast<double>(from.size());
  };
  if (mode == DistanceMode::Directed) return directed(src, dst);
  return 0.5 * (directed(src, dst) + directed(dst, src));
}

}  // namespace agonet
