#include "agonet/concept_builder.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <json.hpp>

#include "agonet/error.hpp"
#include "agonet/parallel.hpp"

namespace agonet {

void ConstructionConfig::validate() const {
  if (groups < 1) throw DomainError("construction: groups must be >= 1");
  if (!(top_percent > 0.0 && top_percent <= 100.0)) {
    throw DomainError("construction: top_percent must be in (0, 100]");
  }
  if (!(removal_radius >= 0.0)) throw DomainError("construction: removal_radius must be >= 0");
}

int yaw_group(double yaw, int groups) {
  const double width = 2.0 * kPi / groups;
  const int k = static_cast<int>(std::floor((normalize_yaw(yaw) + kPi) / width));
  return std::clamp(k, 0, groups - 1);
}

ConceptualModelBank build_bank(const std::vector<LabeledObject>& objects,
                               const ConstructionConfig& config) {
  config.validate();
  ConceptualModelBank bank;
  bank.selection_percent = config.top_percent;
  bank.groups.resize(config.groups);
  bank.group_sizes.assign(config.groups, 0);
  std::vector<std::vector<std::size_t>> members(config.groups);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    members[yaw_group(objects[i].box.yaw, config.groups)].push_back(i);
  }
  for (int g = 0; g < config.groups; ++g) {
    const auto& idx = members[g];
    bank.group_sizes[g] = idx.size();
    if (idx.empty()) continue;
    std::vector<std::size_t> eligible;
    for (auto i : idx) {
      if (objects[i].interior_points.size() >= config.min_model_points) eligible.push_back(i);
    }
    std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
      return objects[a].interior_points.size() > objects[b].interior_points.size();
    });
    const double want = std::ceil(config.top_percent * static_cast<double>(idx.size()) / 100.0 - 1e-9);
    const std::size_t take = std::min(eligible.size(), static_cast<std::size_t>(want));
    for (std::size_t k = 0; k < take; ++k) bank.groups[g].push_back(objects[eligible[k]]);
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Matching

namespace {

// Spatial indexes over every bank member, built once per bank.
class ModelMatcher {
 public:
  explicit ModelMatcher(const ConceptualModelBank& bank) : bank_(bank) {
    for (std::size_t g = 0; g < bank.groups.size(); ++g) {
      for (std::size_t m = 0; m < bank.groups[g].size(); ++m) {
        const auto& pts = bank.groups[g][m].interior_points.points;
        entries_.push_back({g, m, pts.empty() ? nullptr
                                              : std::make_unique<NearestNeighborGrid>(pts)});
      }
    }
  }

  ModelMatch find(const LabeledObject& object, const ConstructionConfig& config) const {
    if (entries_.empty()) throw DomainError("match_model: empty bank");
    if (object.interior_points.empty()) throw DomainError("match_model: object has no points");
    const int own_group = yaw_group(object.box.yaw, static_cast<int>(bank_.groups.size()));
    const auto& src = object.interior_points.points;
    const double n = static_cast<double>(src.size());
    std::unique_ptr<NearestNeighborGrid> src_index;
    if (config.distance == DistanceMode::Symmetric) {
      src_index = std::make_unique<NearestNeighborGrid>(src);
    }
    bool found = false;
    ModelMatch best;
    std::size_t best_points = 0;
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const Entry& e = entries_[k];
      if (!e.index) continue;
      if (config.match_within_group && static_cast<int>(e.group) != own_group) continue;
      double d = 0.0;
      if (config.distance == DistanceMode::Directed) {
        double sum = 0.0;
        bool pruned = false;
        for (const auto& p : src) {
          sum += e.index->nearest_distance(p);
          // Partial sums only grow, so this candidate is already worse.
          if (found && sum / n > best.distance) {
            pruned = true;
            break;
          }
        }
        if (pruned) continue;
        d = sum / n;
      } else {
        const auto& dst = bank_.groups[e.group][e.member].interior_points.points;
        double fwd = 0.0;
        for (const auto& p : src) fwd += e.index->nearest_distance(p);
        double bwd = 0.0;
        for (const auto& p : dst) bwd += src_index->nearest_distance(p);
        d = 0.5 * (fwd / n + bwd / static_cast<double>(dst.size()));
      }
      const std::size_t pts = bank_.groups[e.group][e.member].interior_points.size();
      if (!found || d < best.distance || (d == best.distance && pts > best_points)) {
        found = true;
        best = {e.group, e.member, k, d};
        best_points = pts;
      }
    }
    if (!found) throw DomainError("match_model: no candidate model in the searched groups");
    return best;
  }

 private:
  struct Entry {
    std::size_t group;
    std::size_t member;
    std::unique_ptr<NearestNeighborGrid> index;
  };
  const ConceptualModelBank& bank_;
  std::vector<Entry> entries_;
};

}  // namespace

ModelMatch find_model(const LabeledObject& object, const ConceptualModelBank& bank,
                      const ConstructionConfig& config) {
  return ModelMatcher(bank).find(object, config);
}

const LabeledObject& match_model(const LabeledObject& object, const ConceptualModelBank& bank,
                                 const ConstructionConfig& config) {
  const ModelMatch m = find_model(object, bank, config);
  return bank.groups[m.group][m.member];
}

// ---------------------------------------------------------------------------
// Completion

PointCloud complete_object(const LabeledObject& object, const LabeledObject& model,
                           const ConstructionConfig& config,
                           const std::vector<Point3>& world_points,
                           CompletionStats* stats) {
  const Box3D& ob = object.box;
  const Box3D& mb = model.box;
  if (!(mb.w > 0.0 && mb.l > 0.0 && mb.h > 0.0)) {
    throw DomainError("complete_object: model has a zero dimension");
  }
  const double sx = ob.l / mb.l;
  const double sy = ob.w / mb.w;
  const double sz = ob.h / mb.h;
  std::vector<Point3> posed;
  posed.reserve(model.interior_points.size());
  for (const auto& q : model.interior_points.points) {
    posed.push_back(to_world(ob, {q.x * sx, q.y * sy, q.z * sz, q.intensity}));
  }
  CompletionStats s;
  s.original = world_points.size();
  s.model = posed.size();
  PointCloud out;
  if (config.strategy == ConstructionStrategy::Replace) {
    out.points = std::move(posed);
    s.added = out.size();
  } else {
    out.points = world_points;
    if (world_points.empty()) {
      out.points.insert(out.points.end(), posed.begin(), posed.end());
      s.added = posed.size();
    } else {
      const NearestNeighborGrid index(world_points);
      for (const auto& p : posed) {
        if (index.nearest_distance(p) <= config.removal_radius) {
          ++s.removed;
        } else {
          out.points.push_back(p);
          ++s.added;
        }
      }
    }
  }
  if (stats) *stats = s;
  return out;
}

PointCloud complete_object(const LabeledObject& object, const LabeledObject& model,
                           const ConstructionConfig& config) {
  return complete_object(object, model, config,
                         transform_to_world(object.box, object.interior_points).points);
}

void ConstructionReport::merge(const ConstructionReport& o) {
  scenes += o.scenes;
  objects += o.objects;
  completed += o.completed;
  skipped += o.skipped;
  points_added += o.points_added;
  points_removed += o.points_removed;
}

namespace {

constexpr double kMembershipTolerance = 1e-6;

Scene conceptual_scene_impl(const Scene& scene, const ConceptualModelBank& bank,
                            const ModelMatcher& matcher, const ConstructionConfig& config,
                            ConstructionReport* report) {
  ConstructionReport r;
  r.scenes = 1;
  r.objects = scene.objects.size();
  const std::size_t n_obj = scene.objects.size();
  std::vector<std::vector<std::size_t>> members(n_obj);
  std::vector<std::uint8_t> in_object(scene.cloud.size(), 0);
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    for (std::size_t o = 0; o < n_obj; ++o) {
      if (contains(scene.objects[o].box, scene.cloud.points[i], kMembershipTolerance)) {
        members[o].push_back(i);
        in_object[i] = 1;
      }
    }
  }
  Scene out;
  out.id = scene.id;
  out.cloud.frame_id = scene.cloud.frame_id;
  out.objects = scene.objects;
  std::vector<std::vector<Point3>> appended(n_obj);
  std::vector<std::uint8_t> drop(scene.cloud.size(), 0);
  for (std::size_t o = 0; o < n_obj; ++o) {
    LabeledObject& obj = out.objects[o];
    std::vector<Point3> world;
    world.reserve(members[o].size());
    for (auto i : members[o]) world.push_back(scene.cloud.points[i]);
    obj.interior_points.points.clear();
    for (const auto& p : world) obj.interior_points.points.push_back(to_local(obj.box, p));
    if (world.empty()) {
      ++r.skipped;
      continue;
    }
    ModelMatch m;
    try {
      m = matcher.find(obj, config);
    } catch (const DomainError&) {
      ++r.skipped;
      continue;
    }
    CompletionStats stats;
    PointCloud done = complete_object(obj, bank.groups[m.group][m.member], config, world, &stats);
    ++r.completed;
    r.points_added += stats.added;
    r.points_removed += stats.removed;
    if (config.strategy == ConstructionStrategy::Replace) {
      for (auto i : members[o]) drop[i] = 1;
      appended[o] = std::move(done.points);
      obj.interior_points.points.clear();
    } else {
      appended[o].assign(done.points.begin() + static_cast<std::ptrdiff_t>(world.size()),
                         done.points.end());
    }
    for (const auto& p : appended[o]) obj.interior_points.points.push_back(to_local(obj.box, p));
  }
  out.cloud.points.reserve(scene.cloud.size());
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (!drop[i]) out.cloud.points.push_back(scene.cloud.points[i]);
  }
  for (const auto& a : appended) out.cloud.points.insert(out.cloud.points.end(), a.begin(), a.end());
  if (report) report->merge(r);
  return out;
}

}  // namespace

Scene build_conceptual_scene(const Scene& scene, const ConceptualModelBank& bank,
                             const ConstructionConfig& config, ConstructionReport* report) {
  config.validate();
  const ModelMatcher matcher(bank);
  return conceptual_scene_impl(scene, bank, matcher, config, report);
}

std::vector<Scene> build_conceptual_scenes(const std::vector<Scene>& scenes,
                                           const ConceptualModelBank& bank,
                                           const ConstructionConfig& config,
                                           ConstructionReport* report, std::size_t workers) {
  config.validate();
  const ModelMatcher matcher(bank);
  std::vector<Scene> out(scenes.size());
  std::vector<ConstructionReport> reports(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    out[i] = conceptual_scene_impl(scenes[i], bank, matcher, config, &reports[i]);
  });
  if (report) {
    for (const auto& r : reports) report->merge(r);
  }
  return out;
}

std::string construction_report_json(const ConceptualModelBank& bank,
                                      const ConstructionReport& report,
                                      const ConstructionConfig& config) {
  nlohmann::ordered_json j;
  j["groups"] = config.groups;
  j["top_percent"] = config.top_percent;
  j["removal_radius"] = config.removal_radius;
  j["strategy"] = config.strategy == ConstructionStrategy::Replace ? "replace" : "add_with_removal";
  j["group_sizes"] = bank.group_sizes;
  std::vector<std::size_t> models;
  for (const auto& g : bank.groups) models.push_back(g.size());
  j["models_per_group"] = models;
  j["objects_binned"] = std::accumulate(bank.group_sizes.begin(), bank.group_sizes.end(), std::size_t{0});
  j["model_count"] = bank.model_count();
  j["scenes"] = report.scenes;
  j["objects"] = report.objects;
  j["completed"] = report.completed;
  j["skipped"] = report.skipped;
  j["points_added"] = report.points_added;
  j["points_removed"] = report.points_removed;
  j["mean_added_points"] = report.completed
                               ? static_cast<double>(report.points_added) / static_cast<double>(report.completed)
                               : 0.0;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Paired augmentation

SamplerDb build_sampler_db(const std::vector<Scene>& perceptual,
                           const std::vector<Scene>& conceptual, std::size_t min_points) {
  if (perceptual.size() != conceptual.size()) {
    throw DomainError("build_sampler_db: scene lists differ in length");
  }
  SamplerDb db;
  for (std::size_t s = 0; s < perceptual.size(); ++s) {
    const Scene& p = perceptual[s];
    const Scene& c = conceptual[s];
    if (p.objects.size() != c.objects.size()) {
      throw DomainError("build_sampler_db: scene " + p.id + " is not paired");
    }
    for (std::size_t o = 0; o < p.objects.size(); ++o) {
      SampledObject so;
      so.object = p.objects[o];
      for (const auto& q : p.cloud.points) {
        if (contains(so.object.box, q, kMembershipTolerance)) so.perceptual_points.push_back(q);
      }
      if (so.perceptual_points.size() < min_points) continue;
      for (const auto& q : c.cloud.points) {
        if (contains(so.object.box, q, kMembershipTolerance)) so.conceptual_points.push_back(q);
      }
      so.object.interior_points.points.clear();
      db.samples.push_back(std::move(so));
    }
  }
  return db;
}

namespace {

std::vector<Box3D> boxes_of(const Scene& s) {
  std::vector<Box3D> out;
  for (const auto& o : s.objects) out.push_back(o.box);
  return out;
}

void remove_points_in(Scene& s, const Box3D& box) {
  auto& pts = s.cloud.points;
  pts.erase(std::remove_if(pts.begin(), pts.end(),
                           [&](const Point3& p) { return contains(box, p, kMembershipTolerance); }),
            pts.end());
}

struct GlobalTransform {
  bool flip = false;
  double rotation = 0.0;
  double scale = 1.0;

  Point3 apply(Point3 p) const {
    if (flip) p.y = -p.y;
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    const double x = c * p.x - s * p.y;
    const double y = s * p.x + c * p.y;
    return {x * scale, y * scale, p.z * scale, p.intensity};
  }

  Box3D apply(const Box3D& b) const {
    const Point3 c = apply(Point3{b.cx, b.cy, b.cz, 0.0});
    const double yaw = flip ? -b.yaw : b.yaw;
    Box3D out = b;
    out.cx = c.x;
    out.cy = c.y;
    out.cz = c.z;
    out.w = b.w * scale;
    out.l = b.l * scale;
    out.h = b.h * scale;
    out.yaw = normalize_yaw(yaw + rotation);
    return out;
  }

  void apply(Scene& s) const {
    for (auto& p : s.cloud.points) p = apply(p);
    for (auto& o : s.objects) o.box = apply(o.box);
  }
};

}  // namespace

AugmentedPair paired_augment(const Scene& perceptual, const Scene& conceptual,
                             const SamplerDb& db, std::uint64_t seed,
                             const AugmentConfig& config) {
  if (boxes_of(perceptual) != boxes_of(conceptual)) {
    throw DomainError("paired_augment: scenes do not share an object list");
  }
  AugmentedPair out{perceptual, conceptual, 0, 0};
  std::mt19937_64 rng(seed);
  std::vector<Box3D> occupied = boxes_of(perceptual);
  const int wanted = db.samples.empty() || config.max_samples <= 0
                         ? 0
                         : std::uniform_int_distribution<int>(0, config.max_samples)(rng);
  for (int k = 0; k < wanted; ++k) {
    const auto& sample =
        db.samples[std::uniform_int_distribution<std::size_t>(0, db.samples.size() - 1)(rng)];
    const Box3D& src = sample.object.box;
    const double margin = 0.5 * std::min(src.l, src.w);
    std::uniform_real_distribution<double> ux(config.range.x_min + margin, config.range.x_max - margin);
    std::uniform_real_distribution<double> uy(config.range.y_min + margin, config.range.y_max - margin);
    bool placed = false;
    for (int attempt = 0; attempt < config.retry_budget && !placed; ++attempt) {
      Box3D cand = src;
      cand.cx = ux(rng);
      cand.cy = uy(rng);
      const bool collides = std::any_of(occupied.begin(), occupied.end(), [&](const Box3D& b) {
        return bev_intersection_area(cand, b) > 0.0;
      });
      if (collides) continue;
      placed = true;
      const double dx = cand.cx - src.cx;
      const double dy = cand.cy - src.cy;
      for (Scene* s : {&out.perceptual, &out.conceptual}) remove_points_in(*s, cand);
      for (const auto& p : sample.perceptual_points) {
        out.perceptual.cloud.points.push_back({p.x + dx, p.y + dy, p.z, p.intensity});
      }
      for (const auto& p : sample.conceptual_points) {
        out.conceptual.cloud.points.push_back({p.x + dx, p.y + dy, p.z, p.intensity});
      }
      LabeledObject obj = sample.object;
      obj.box = cand;
      out.perceptual.objects.push_back(obj);
      out.conceptual.objects.push_back(obj);
      occupied.push_back(cand);
      ++out.pasted;
    }
    if (!placed) ++out.skipped;
  }
  GlobalTransform t;
  t.rotation = config.rotation_range > 0.0
                   ? std::uniform_real_distribution<double>(-config.rotation_range, config.rotation_range)(rng)
                   : 0.0;
  t.scale = config.scale_max > config.scale_min
                ? std::uniform_real_distribution<double>(config.scale_min, config.scale_max)(rng)
                : config.scale_min;
  t.flip = config.flip_y && std::bernoulli_distribution(0.5)(rng);
  t.apply(out.perceptual);
  t.apply(out.conceptual);
  out.perceptual = crop_scene(out.perceptual, config.range);
  out.conceptual = crop_scene(out.conceptual, config.range);
  assign_interior_points(out.perceptual, kMembershipTolerance);
  assign_interior_points(out.conceptual, kMembershipTolerance);
  return out;
}

}  // namespace agonet
