#include "agonet/scene_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "agonet/container.hpp"
#include "agonet/error.hpp"

namespace agonet {

namespace fs = std::filesystem;

bool CropRange::valid() const noexcept {
  return x_min < x_max && y_min < y_max && z_min < z_max;
}

bool CropRange::contains(double x, double y, double z) const noexcept {
  return x > x_min && x < x_max && y > y_min && y < y_max && z > z_min &&
         z < z_max;
}

std::size_t ConceptualModelBank::model_count() const noexcept {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

// ---------------------------------------------------------------------------
// Calibration

bool Calibration::valid() const noexcept {
  const auto& r = rect_rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[i * 3 + k] * r[j * 3 + k];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-4) return false;
    }
  }
  for (double v : velo_to_cam) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 rotate_rect(const std::array<double, 9>& r, const Vec3& p) {
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2],
          r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2]};
}

Vec3 rotate_rect_t(const std::array<double, 9>& r, const Vec3& p) {
  return {r[0] * p[0] + r[3] * p[1] + r[6] * p[2],
          r[1] * p[0] + r[4] * p[1] + r[7] * p[2],
          r[2] * p[0] + r[5] * p[1] + r[8] * p[2]};
}

Vec3 rigid_rotate(const std::array<double, 12>& t, const Vec3& p) {
  return {t[0] * p[0] + t[1] * p[1] + t[2] * p[2],
          t[4] * p[0] + t[5] * p[1] + t[6] * p[2],
          t[8] * p[0] + t[9] * p[1] + t[10] * p[2]};
}

Vec3 rigid_rotate_t(const std::array<double, 12>& t, const Vec3& p) {
  return {t[0] * p[0] + t[4] * p[1] + t[8] * p[2],
          t[1] * p[0] + t[5] * p[1] + t[9] * p[2],
          t[2] * p[0] + t[6] * p[1] + t[10] * p[2]};
}

}  // namespace

std::array<double, 3> Calibration::lidar_to_camera(const std::array<double, 3>& p) const {
  Vec3 c = rigid_rotate(velo_to_cam, p);
  c[0] += velo_to_cam[3];
  c[1] += velo_to_cam[7];
  c[2] += velo_to_cam[11];
  return rotate_rect(rect_rotation, c);
}

std::array<double, 3> Calibration::camera_to_lidar(const std::array<double, 3>& p) const {
  Vec3 q = rotate_rect_t(rect_rotation, p);
  q[0] -= velo_to_cam[3];
  q[1] -= velo_to_cam[7];
  q[2] -= velo_to_cam[11];
  return rigid_rotate_t(velo_to_cam, q);
}

double Calibration::lidar_yaw_from_camera(double rotation_y) const {
  const Vec3 d{std::cos(rotation_y), 0.0, -std::sin(rotation_y)};
  const Vec3 v = rigid_rotate_t(velo_to_cam, rotate_rect_t(rect_rotation, d));
  return normalize_yaw(std::atan2(v[1], v[0]));
}

double Calibration::camera_yaw_from_lidar(double yaw) const {
  const Vec3 v{std::cos(yaw), std::sin(yaw), 0.0};
  const Vec3 d = rotate_rect(rect_rotation, rigid_rotate(velo_to_cam, v));
  return normalize_yaw(std::atan2(-d[2], d[0]));
}

// ---------------------------------------------------------------------------
// Text helpers

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// Velodyne

PointCloud decode_velodyne(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("velodyne: length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16; trailing partial record at byte offset " +
                      std::to_string(bytes.size() - bytes.size() % 16));
  }
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / 16);
  ByteReader r(bytes);
  while (r.remaining() > 0) {
    Point3 p;
    p.x = r.get_f32();
    p.y = r.get_f32();
    p.z = r.get_f32();
    p.intensity = r.get_f32();
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud read_velodyne_bin(const fs::path& path) {
  try {
    PointCloud cloud = decode_velodyne(read_file_bytes(path));
    cloud.frame_id = path.stem().string();
    return cloud;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_velodyne_bin(const fs::path& path, const PointCloud& cloud) {
  ByteWriter w;
  for (const auto& p : cloud.points) {
    w.put_f32(static_cast<float>(p.x));
    w.put_f32(static_cast<float>(p.y));
    w.put_f32(static_cast<float>(p.z));
    w.put_f32(static_cast<float>(p.intensity));
  }
  write_file_bytes(path, w.bytes());
}

// ---------------------------------------------------------------------------
// Labels

Difficulty kitti_difficulty(const KittiLabel& label) {
  const double height = label.bbox[3] - label.bbox[1];
  if (height >= 40.0 && label.occluded <= 0 && label.truncated <= 0.15) return Difficulty::Easy;
  if (height >= 25.0 && label.occluded <= 1 && label.truncated <= 0.30) return Difficulty::Mod;
  if (height >= 25.0 && label.occluded <= 2 && label.truncated <= 0.50) return Difficulty::Hard;
  return Difficulty::Unknown;
}

KittiLabel parse_kitti_label_line(const std::string& line, std::size_t line_number) {
  const auto tok = split_ws(line);
  const std::string where = "line " + std::to_string(line_number) + ": ";
  if (tok.size() != 15 && tok.size() != 16) {
    throw FormatError(where + "expected 15 or 16 fields, got " + std::to_string(tok.size()));
  }
  std::array<double, 15> v{};
  for (std::size_t i = 1; i < tok.size(); ++i) {
    if (!parse_double(tok[i], v[i - 1])) {
      throw FormatError(where + "invalid number '" + tok[i] + "' in field " + std::to_string(i + 1));
    }
  }
  KittiLabel out;
  out.type = tok[0];
  out.truncated = v[0];
  out.occluded = static_cast<int>(v[1]);
  out.alpha = v[2];
  out.bbox = {v[3], v[4], v[5], v[6]};
  out.h = v[7];
  out.w = v[8];
  out.l = v[9];
  out.location = {v[10], v[11], v[12]};
  out.rotation_y = v[13];
  if (tok.size() == 16) {
    out.score = v[14];
    out.has_score = true;
  }
  return out;
}

namespace {

Box3D box_from_label(const KittiLabel& label, const Calibration& calib,
                     std::size_t line_number) {
  const std::array<double, 3> center_cam{label.location[0],
                                         label.location[1] - 0.5 * label.h,
                                         label.location[2]};
  const auto c = calib.camera_to_lidar(center_cam);
  try {
    return Box3D::make(c[0], c[1], c[2], label.w, label.l, label.h,
                       calib.lidar_yaw_from_camera(label.rotation_y));
  } catch (const DomainError& e) {
    throw FormatError("line " + std::to_string(line_number) + ": " + e.what());
  }
}

}  // namespace

ParsedLabels parse_kitti_label_text(const std::string& text, const Calibration& calib) {
  if (!calib.valid()) throw DomainError("parse_kitti_label: invalid calibration");
  ParsedLabels out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (split_ws(line).empty()) continue;
    KittiLabel label = parse_kitti_label_line(line, line_number);
    if (label.type == "DontCare") {
      out.ignored.push_back(label);
      continue;
    }
    LabeledObject obj;
    obj.box = box_from_label(label, calib, line_number);
    obj.category = category_from_string(label.type);
    obj.difficulty = kitti_difficulty(label);
    out.objects.push_back(std::move(obj));
  }
  return out;
}

ParsedLabels parse_kitti_label(const fs::path& path, const Calibration& calib) {
  try {
    return parse_kitti_label_text(read_text(path), calib);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

KittiLabel to_kitti_label(const LabeledObject& object, const Calibration& calib) {
  KittiLabel out;
  out.type = to_string(object.category);
  const Box3D& b = object.box;
  const auto c = calib.lidar_to_camera({b.cx, b.cy, b.cz});
  out.h = b.h;
  out.w = b.w;
  out.l = b.l;
  out.location = {c[0], c[1] + 0.5 * b.h, c[2]};
  out.rotation_y = calib.camera_yaw_from_lidar(b.yaw);
  out.alpha = normalize_yaw(out.rotation_y - std::atan2(c[0], c[2]));
  double height = 50.0;
  switch (object.difficulty) {
    case Difficulty::Easy: out.truncated = 0.0; out.occluded = 0; height = 50.0; break;
    case Difficulty::Mod: out.truncated = 0.0; out.occluded = 1; height = 30.0; break;
    case Difficulty::Hard: out.truncated = 0.4; out.occluded = 2; height = 30.0; break;
    case Difficulty::Unknown: out.truncated = 0.9; out.occluded = 3; height = 10.0; break;
  }
  out.bbox = {100.0, 100.0, 200.0, 100.0 + height};
  return out;
}

std::string format_kitti_label(const KittiLabel& l) {
  std::string s = l.type + " " + fmt(l.truncated) + " " + std::to_string(l.occluded) +
                  " " + fmt(l.alpha);
  for (double v : l.bbox) s += " " + fmt(v);
  s += " " + fmt(l.h) + " " + fmt(l.w) + " " + fmt(l.l);
  for (double v : l.location) s += " " + fmt(v);
  s += " " + fmt(l.rotation_y);
  if (l.has_score) s += " " + fmt(l.score);
  return s;
}

std::string serialize_kitti_labels(const std::vector<LabeledObject>& objects,
                                   const Calibration& calib) {
  std::string out;
  for (const auto& o : objects) out += format_kitti_label(to_kitti_label(o, calib)) + "\n";
  return out;
}

std::string serialize_kitti_detections(const std::vector<Detection>& dets,
                                       const Calibration& calib) {
  std::string out;
  for (const auto& d : dets) {
    LabeledObject o;
    o.box = d.box;
    o.category = d.category;
    o.difficulty = Difficulty::Easy;
    KittiLabel l = to_kitti_label(o, calib);
    l.truncated = -1.0;
    l.occluded = -1;
    l.score = d.score;
    l.has_score = true;
    out += format_kitti_label(l) + "\n";
  }
  return out;
}

std::vector<Detection> parse_kitti_detections(const std::string& text,
                                              const Calibration& calib) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (split_ws(line).empty()) continue;
    const KittiLabel l = parse_kitti_label_line(line, line_number);
    if (!l.has_score) {
      throw FormatError("line " + std::to_string(line_number) + ": detection without score");
    }
    out.push_back({box_from_label(l, calib, line_number), l.score,
                   category_from_string(l.type)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration files

Calibration parse_calibration_text(const std::string& text) {
  Calibration calib;
  bool have_rect = false;
  bool have_tr = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const auto tok = split_ws(line.substr(colon + 1));
    auto fill = [&](auto& dst) {
      if (tok.size() != dst.size()) {
        throw FormatError("calib line " + std::to_string(line_number) + ": " + key +
                          " expects " + std::to_string(dst.size()) + " values, got " +
                          std::to_string(tok.size()));
      }
      for (std::size_t i = 0; i < tok.size(); ++i) {
        if (!parse_double(tok[i], dst[i])) {
          throw FormatError("calib line " + std::to_string(line_number) +
                            ": invalid number '" + tok[i] + "'");
        }
      }
    };
    if (key == "R0_rect") {
      fill(calib.rect_rotation);
      have_rect = true;
    } else if (key == "Tr_velo_to_cam") {
      fill(calib.velo_to_cam);
      have_tr = true;
    }
  }
  if (!have_rect || !have_tr) throw FormatError("calib: missing R0_rect or Tr_velo_to_cam");
  if (!calib.valid()) throw FormatError("calib: R0_rect is not orthonormal");
  return calib;
}

Calibration read_calibration(const fs::path& path) {
  try {
    return parse_calibration_text(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_calibration(const Calibration& calib) {
  auto row = [](const std::string& key, auto values) {
    std::string s = key + ":";
    for (double v : values) s += " " + fmt(v);
    return s + "\n";
  };
  const std::array<double, 12> p{721.5377, 0, 609.5593, 0, 0, 721.5377, 172.854, 0, 0, 0, 1, 0};
  std::string out;
  out += row("P0", p);
  out += row("P1", p);
  out += row("P2", p);
  out += row("P3", p);
  out += row("R0_rect", calib.rect_rotation);
  out += row("Tr_velo_to_cam", calib.velo_to_cam);
  return out;
}

// ---------------------------------------------------------------------------
// Scene operations

void assign_interior_points(Scene& scene, double tolerance) {
  for (auto& obj : scene.objects) {
    obj.interior_points.points.clear();
    obj.interior_points.frame_id = scene.cloud.frame_id;
    for (const auto& p : scene.cloud.points) {
      if (contains(obj.box, p, tolerance)) {
        obj.interior_points.points.push_back(to_local(obj.box, p));
      }
    }
  }
}

Scene crop_scene(const Scene& scene, const CropRange& range) {
  if (!range.valid()) throw DomainError("crop_scene: invalid range");
  Scene out;
  out.id = scene.id;
  out.cloud.frame_id = scene.cloud.frame_id;
  for (const auto& p : scene.cloud.points) {
    if (range.contains(p)) out.cloud.points.push_back(p);
  }
  for (const auto& obj : scene.objects) {
    if (!range.contains(obj.box.cx, obj.box.cy, obj.box.cz)) continue;
    LabeledObject kept = obj;
    kept.interior_points.points.clear();
    for (const auto& q : obj.interior_points.points) {
      if (range.contains(to_world(obj.box, q))) kept.interior_points.points.push_back(q);
    }
    out.objects.push_back(std::move(kept));
  }
  return out;
}

Scene crop_to_camera_fov(const Scene& scene, const Calibration& calib,
                         double half_angle_rad) {
  const double slope = std::tan(half_angle_rad);
  auto visible = [&](const Point3& p) {
    const auto c = calib.lidar_to_camera({p.x, p.y, p.z});
    return c[2] > 0.0 && std::abs(c[0]) < slope * c[2];
  };
  Scene out;
  out.id = scene.id;
  out.cloud.frame_id = scene.cloud.frame_id;
  for (const auto& p : scene.cloud.points) {
    if (visible(p)) out.cloud.points.push_back(p);
  }
  out.objects = scene.objects;
  for (auto& obj : out.objects) {
    std::vector<Point3> kept;
    for (const auto& q : obj.interior_points.points) {
      if (visible(to_world(obj.box, q))) kept.push_back(q);
    }
    obj.interior_points.points = std::move(kept);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Native containers

namespace {

void put_cloud(ByteWriter& w, const PointCloud& c) {
  w.put_string(c.frame_id);
  w.put_u64(c.points.size());
  for (const auto& p : c.points) {
    w.put_f64(p.x);
    w.put_f64(p.y);
    w.put_f64(p.z);
    w.put_f64(p.intensity);
  }
}

PointCloud get_cloud(ByteReader& r) {
  PointCloud c;
  c.frame_id = r.get_string();
  const auto n = r.get_count(32);
  c.points.resize(n);
  for (auto& p : c.points) {
    p.x = r.get_f64();
    p.y = r.get_f64();
    p.z = r.get_f64();
    p.intensity = r.get_f64();
  }
  return c;
}

void put_box(ByteWriter& w, const Box3D& b) {
  for (double v : {b.cx, b.cy, b.cz, b.w, b.l, b.h, b.yaw}) w.put_f64(v);
}

Box3D get_box(ByteReader& r) {
  Box3D b;
  b.cx = r.get_f64();
  b.cy = r.get_f64();
  b.cz = r.get_f64();
  b.w = r.get_f64();
  b.l = r.get_f64();
  b.h = r.get_f64();
  b.yaw = r.get_f64();
  if (!b.valid()) throw FormatError("invalid box in container");
  return b;
}

void put_object(ByteWriter& w, const LabeledObject& o) {
  put_box(w, o.box);
  w.put_u8(static_cast<std::uint8_t>(o.category));
  w.put_u8(static_cast<std::uint8_t>(o.difficulty));
  put_cloud(w, o.interior_points);
}

LabeledObject get_object(ByteReader& r) {
  LabeledObject o;
  o.box = get_box(r);
  const auto cat = r.get_u8();
  const auto diff = r.get_u8();
  if (cat > 3 || diff > 3) throw FormatError("invalid enum in container");
  o.category = static_cast<Category>(cat);
  o.difficulty = static_cast<Difficulty>(diff);
  o.interior_points = get_cloud(r);
  return o;
}

void expect_consumed(const ByteReader& r, const char* what) {
  if (r.remaining() != 0) {
    throw FormatError(std::string(what) + ": " + std::to_string(r.remaining()) +
                      " trailing bytes");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_bank(const ConceptualModelBank& bank) {
  ByteWriter w;
  w.put_f64(bank.selection_percent);
  w.put_u64(bank.group_sizes.size());
  for (auto s : bank.group_sizes) w.put_u64(s);
  w.put_u64(bank.groups.size());
  for (const auto& g : bank.groups) {
    w.put_u64(g.size());
    for (const auto& o : g) put_object(w, o);
  }
  ContainerWriter c(fourcc("BANK"));
  c.add_section(fourcc("GRPS"), w.take());
  return c.serialize();
}

ConceptualModelBank decode_bank(std::vector<std::uint8_t> bytes) {
  const auto c = ContainerReader::parse(std::move(bytes), fourcc("BANK"));
  ByteReader r = c.section(fourcc("GRPS"));
  ConceptualModelBank bank;
  bank.selection_percent = r.get_f64();
  bank.group_sizes.resize(r.get_count(8));
  for (auto& s : bank.group_sizes) s = r.get_u64();
  bank.groups.resize(r.get_count(8));
  for (auto& g : bank.groups) {
    g.resize(r.get_count(58));
    for (auto& o : g) o = get_object(r);
  }
  expect_consumed(r, "bank");
  return bank;
}

void save_bank(const ConceptualModelBank& bank, const fs::path& path) {
  write_file_bytes(path, encode_bank(bank));
}

ConceptualModelBank load_bank(const fs::path& path) {
  try {
    return decode_bank(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_scene(const Scene& scene, const fs::path& path) {
  ByteWriter meta;
  meta.put_string(scene.id);
  ByteWriter pts;
  put_cloud(pts, scene.cloud);
  ByteWriter objs;
  objs.put_u64(scene.objects.size());
  for (const auto& o : scene.objects) put_object(objs, o);
  ContainerWriter c(fourcc("SCEN"));
  c.add_section(fourcc("META"), meta.take());
  c.add_section(fourcc("PNTS"), pts.take());
  c.add_section(fourcc("OBJS"), objs.take());
  c.save(path);
}

Scene load_scene(const fs::path& path) {
  try {
    const auto c = ContainerReader::load(path, fourcc("SCEN"));
    Scene s;
    ByteReader meta = c.section(fourcc("META"));
    s.id = meta.get_string();
    ByteReader pts = c.section(fourcc("PNTS"));
    s.cloud = get_cloud(pts);
    ByteReader objs = c.section(fourcc("OBJS"));
    s.objects.resize(objs.get_count(58));
    for (auto& o : s.objects) o = get_object(objs);
    expect_consumed(objs, "scene objects");
    return s;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// KITTI layout

fs::path KittiLayout::velodyne(const std::string& id) const {
  return root / "training" / "velodyne" / (id + ".bin");
}
fs::path KittiLayout::label(const std::string& id) const {
  return root / "training" / "label_2" / (id + ".txt");
}
fs::path KittiLayout::calib(const std::string& id) const {
  return root / "training" / "calib" / (id + ".txt");
}
fs::path KittiLayout::split_file(const std::string& split) const {
  return root / "ImageSets" / (split + ".txt");
}

std::vector<std::string> KittiLayout::read_split(const std::string& split) const {
  std::istringstream in(read_text(split_file(split)));
  std::vector<std::string> ids;
  std::string id;
  while (in >> id) ids.push_back(id);
  return ids;
}

void KittiLayout::write_split(const std::string& split,
                              const std::vector<std::string>& ids) const {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  write_text(split_file(split), text);
}

Scene KittiLayout::load_scene(const std::string& id) const {
  const Calibration c = read_calibration(calib(id));
  Scene s;
  s.id = id;
  s.cloud = read_velodyne_bin(velodyne(id));
  s.objects = parse_kitti_label(label(id), c).objects;
  assign_interior_points(s);
  return s;
}

void KittiLayout::save_scene(const Scene& scene, const Calibration& c) const {
  write_velodyne_bin(velodyne(scene.id), scene.cloud);
  write_text(label(scene.id), serialize_kitti_labels(scene.objects, c));
  write_text(calib(scene.id), serialize_calibration(c));
}

}  // namespace agonet
