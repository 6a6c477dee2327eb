#include "agonet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "agonet/error.hpp"
#include "agonet/parallel.hpp"

namespace agonet {

void SyntheticSpec::validate() const {
  if (objects_min < 0 || objects_max < objects_min) throw DomainError("synth: bad object count range");
  if (!(density > 0.0) || !(ground_density >= 0.0)) throw DomainError("synth: densities must be positive");
  if (archetypes.empty()) throw DomainError("synth: no archetypes");
  if (!range.valid()) throw DomainError("synth: invalid range");
  if (clutter_max < 0) throw DomainError("synth: clutter_max must be >= 0");
  for (double n : noise) {
    if (!(n >= 0.0)) throw DomainError("synth: noise must be >= 0");
  }
}

namespace {

struct Face {
  // Local-frame outward normal and the two in-plane axes with half extents.
  std::array<double, 3> normal;
  int axis_u, axis_v;
  double area;
};

std::array<Face, 6> box_faces(const Box3D& b) {
  return {{
      {{1, 0, 0}, 1, 2, b.w * b.h},
      {{-1, 0, 0}, 1, 2, b.w * b.h},
      {{0, 1, 0}, 0, 2, b.l * b.h},
      {{0, -1, 0}, 0, 2, b.l * b.h},
      {{0, 0, 1}, 0, 1, b.l * b.w},
      {{0, 0, -1}, 0, 1, b.l * b.w},
  }};
}

std::array<double, 3> rotate_normal(const Box3D& b, const std::array<double, 3>& n) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  return {c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]};
}

// Unit vector from the box center to the sensor and the distance.
std::array<double, 3> view_dir(const Box3D& b, const Point3& sensor, double& r) {
  const double dx = sensor.x - b.cx;
  const double dy = sensor.y - b.cy;
  const double dz = sensor.z - b.cz;
  r = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (r == 0.0) return {0, 0, 0};
  return {dx / r, dy / r, dz / r};
}

double face_rate(const Box3D& b, const Face& f, const std::array<double, 3>& d, double r,
                 double density) {
  const auto n = rotate_normal(b, f.normal);
  const double cosine = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
  if (cosine <= 0.0) return 0.0;
  return density * f.area * cosine / (r * r);
}

double quantize(double v) { return std::round(v * 1024.0) / 1024.0; }

Point3 to_float(const Point3& p) {
  return {static_cast<double>(static_cast<float>(p.x)), static_cast<double>(static_cast<float>(p.y)),
          static_cast<double>(static_cast<float>(p.z)),
          static_cast<double>(static_cast<float>(p.intensity))};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool shadowed(const Point3& sensor, const Point3& p, const std::vector<Box3D>& occluders) {
  for (const auto& o : occluders) {
    if (segment_hits_box(sensor, p, o)) return true;
  }
  return false;
}

}  // namespace

double expected_point_count(const Box3D& box, const SyntheticSpec& spec) {
  double r = 0.0;
  const auto d = view_dir(box, spec.sensor, r);
  if (r == 0.0) return 0.0;
  double total = 0.0;
  for (const auto& f : box_faces(box)) total += face_rate(box, f, d, r, spec.density);
  return total;
}

bool segment_hits_box(const Point3& origin, const Point3& p, const Box3D& box) {
  const Point3 o = to_local(box, origin);
  const Point3 e = to_local(box, p);
  const double half[3] = {0.5 * box.l, 0.5 * box.w, 0.5 * box.h};
  const double start[3] = {o.x, o.y, o.z};
  const double dir[3] = {e.x - o.x, e.y - o.y, e.z - o.z};
  double t0 = 0.0;
  double t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dir[k]) < 1e-15) {
      if (start[k] < -half[k] || start[k] > half[k]) return false;
      continue;
    }
    double a = (-half[k] - start[k]) / dir[k];
    double b = (half[k] - start[k]) / dir[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  return t1 - t0 > 1e-12 && t0 < 1.0 - 1e-9;
}

std::vector<Point3> sample_box_surface(const Box3D& box, const std::vector<Box3D>& occluders,
                                       const SyntheticSpec& spec, std::mt19937_64& rng,
                                       std::size_t* unoccluded) {
  double r = 0.0;
  const auto d = view_dir(box, spec.sensor, r);
  std::vector<Point3> out;
  std::size_t raw = 0;
  if (r == 0.0) {
    if (unoccluded) *unoccluded = 0;
    return out;
  }
  const double half[3] = {0.5 * box.l, 0.5 * box.w, 0.5 * box.h};
  const double max_noise = 2.0 * std::max({spec.noise[0], spec.noise[1], spec.noise[2]});
  const double inset = max_noise + 1e-4;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& f : box_faces(box)) {
    const double rate = face_rate(box, f, d, r, spec.density);
    if (rate <= 0.0) continue;
    std::poisson_distribution<int> count(rate);
    const int n = count(rng);
    raw += static_cast<std::size_t>(n);
    const int axis_n = f.normal[0] != 0 ? 0 : (f.normal[1] != 0 ? 1 : 2);
    const double sign = f.normal[axis_n];
    for (int i = 0; i < n; ++i) {
      double local[3];
      local[axis_n] = sign * (half[axis_n] - inset);
      for (int axis : {f.axis_u, f.axis_v}) {
        const double lim = std::max(0.0, half[axis] - inset);
        local[axis] = (2.0 * unit(rng) - 1.0) * lim;
      }
      for (int k = 0; k < 3; ++k) {
        const double sigma = spec.noise[k];
        const double z = std::clamp(gauss(rng), -2.0, 2.0);
        local[k] += sigma * z;
      }
      Point3 p = to_world(box, {local[0], local[1], local[2], 0.0});
      p.intensity = unit(rng);
      if (shadowed(spec.sensor, p, occluders)) continue;
      out.push_back(p);
    }
  }
  if (unoccluded) *unoccluded = raw;
  return out;
}

std::string scene_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

Scene generate_scene(const SyntheticSpec& spec, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(index + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto randint = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  const CropRange& R = spec.range;
  const double m = spec.placement_margin;
  std::vector<Box3D> placed;
  auto try_place = [&](double w, double l, double h) -> bool {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double x = quantize(uniform(R.x_min + m, R.x_max - m));
      const double y = quantize(uniform(R.y_min + m, R.y_max - m));
      const double yaw = uniform(-kPi, kPi);
      const Box3D b = Box3D::make(x, y, quantize(spec.ground_z + 0.5 * h), w, l, h, yaw);
      const double dx = b.cx - spec.sensor.x;
      const double dy = b.cy - spec.sensor.y;
      if (std::sqrt(dx * dx + dy * dy) < 1.5) continue;
      Box3D padded = b;
      padded.w += 0.3;
      padded.l += 0.3;
      bool clear = true;
      for (const auto& o : placed) {
        if (bev_intersection_area(padded, o) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      placed.push_back(b);
      return true;
    }
    return false;
  };

  const int n_objects = randint(spec.objects_min, spec.objects_max);
  std::vector<Category> categories;
  for (int k = 0; k < n_objects; ++k) {
    const Archetype& a = spec.archetypes[randint(0, static_cast<int>(spec.archetypes.size()) - 1)];
    const double w = quantize(std::max(0.5 * a.w_mean, a.w_mean + a.w_std * gauss(rng)));
    const double l = quantize(std::max(0.5 * a.l_mean, a.l_mean + a.l_std * gauss(rng)));
    const double h = quantize(std::max(0.5 * a.h_mean, a.h_mean + a.h_std * gauss(rng)));
    if (try_place(w, l, h)) categories.push_back(a.category);
  }
  const std::size_t labeled = placed.size();
  const int n_clutter = randint(0, spec.clutter_max);
  for (int k = 0; k < n_clutter; ++k) {
    try_place(quantize(uniform(0.3, 0.8)), quantize(uniform(0.3, 0.8)), quantize(uniform(0.6, 1.6)));
  }

  Scene scene;
  scene.id = scene_id(index);
  std::vector<double> visible(labeled, 0.0);
  std::vector<std::size_t> observed(labeled, 0);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    std::vector<Box3D> others;
    for (std::size_t o = 0; o < placed.size(); ++o) {
      if (o != k) others.push_back(placed[o]);
    }
    std::size_t raw = 0;
    std::vector<Point3> pts = sample_box_surface(placed[k], others, spec, rng, &raw);
    for (auto& p : pts) {
      p = to_float(p);
      if (R.contains(p)) scene.cloud.points.push_back(p);
    }
    if (k < labeled) {
      observed[k] = pts.size();
      visible[k] = raw == 0 ? 0.0 : static_cast<double>(pts.size()) / static_cast<double>(raw);
    }
  }
  std::poisson_distribution<int> ground_count(spec.ground_density);
  const int n_ground = spec.ground_density > 0.0 ? ground_count(rng) : 0;
  const double r_lo = 1.0;
  const double r_hi = 12.0;
  for (int i = 0; i < n_ground; ++i) {
    const double r = r_lo * std::pow(r_hi / r_lo, unit(rng));
    const double theta = uniform(-kPi / 2, kPi / 2);
    Point3 p{spec.sensor.x + r * std::cos(theta), spec.sensor.y + r * std::sin(theta),
             spec.ground_z + spec.noise[2] * std::clamp(gauss(rng), -2.0, 2.0), unit(rng)};
    if (!R.contains(p)) continue;
    if (shadowed(spec.sensor, p, placed)) continue;
    scene.cloud.points.push_back(to_float(p));
  }

  for (std::size_t k = 0; k < labeled; ++k) {
    LabeledObject o;
    o.box = placed[k];
    o.category = categories[k];
    if (observed[k] == 0) {
      o.difficulty = Difficulty::Unknown;
    } else if (visible[k] >= 0.7) {
      o.difficulty = Difficulty::Easy;
    } else if (visible[k] >= 0.35) {
      o.difficulty = Difficulty::Mod;
    } else {
      o.difficulty = Difficulty::Hard;
    }
    scene.objects.push_back(o);
  }
  assign_interior_points(scene);
  return scene;
}

void write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root,
                             std::size_t workers) {
  spec.validate();
  const std::size_t total = spec.train_scenes + spec.val_scenes;
  const KittiLayout layout{root};
  const Calibration calib = Calibration::canonical();
  parallel_for(total, workers, [&](std::size_t i) { layout.save_scene(generate_scene(spec, i), calib); });
  std::vector<std::string> train, val;
  for (std::size_t i = 0; i < total; ++i) (i < spec.train_scenes ? train : val).push_back(scene_id(i));
  layout.write_split("train", train);
  layout.write_split("val", val);
}

}  // namespace agonet
