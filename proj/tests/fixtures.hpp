#pragma once

// Small deterministic scenes and networks shared by unit and acceptance tests.

#include <cstdint>

#include "agonet/mini_detector.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace agonet;

// 2 m x 2 m x 2 m at 0.5 m: a 4 x 4 BEV grid with four z-bins.
inline GridConfig tiny_grid() {
  return GridConfig::make(CropRange{0.0, 2.0, -1.0, 1.0, -1.0, 1.0}, {0.5, 0.5, 0.5}, 1);
}

inline AnchorConfig tiny_anchors() {
  AnchorConfig a;
  a.w = 0.5;
  a.l = 1.0;
  a.h = 0.5;
  a.z = 0.0;
  return a;
}

inline DetectorSetup tiny_setup(bool separate_branches, int width = 4) {
  DetectorSetup s = DetectorSetup::for_grid(tiny_grid(), tiny_anchors(), separate_branches);
  s.shape.hidden = width;
  s.shape.features = width;
  return s;
}

// A few random points plus one or two boxes whose cells are occupied.
inline Scene tiny_scene(oracle::Rng& rng, const std::string& id = "tiny") {
  Scene s;
  s.id = id;
  const int n_obj = rng.integer(1, 2);
  for (int k = 0; k < n_obj; ++k) {
    LabeledObject o;
    o.box = Box3D::make(rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2),
                        rng.uniform(0.4, 0.7), rng.uniform(0.8, 1.3), rng.uniform(0.4, 0.6),
                        rng.uniform(-kPi, kPi));
    for (int p = 0; p < 12; ++p) {
      const Point3 local{rng.uniform(-0.4, 0.4) * o.box.l, rng.uniform(-0.4, 0.4) * o.box.w,
                         rng.uniform(-0.4, 0.4) * o.box.h, 0.5};
      s.cloud.points.push_back(to_world(o.box, local));
    }
    s.objects.push_back(o);
  }
  for (int p = 0; p < 10; ++p) {
    s.cloud.points.push_back({rng.uniform(0.01, 1.99), rng.uniform(-0.99, 0.99), rng.uniform(-0.99, 0.99), 0.1});
  }
  assign_interior_points(s);
  return s;
}

// Parameters with every entry random, biases included, so no unit is
// permanently dead.
inline NetworkParams random_params(const NetworkShape& shape, oracle::Rng& rng, double scale = 0.6) {
  NetworkParams p = NetworkParams::init(shape, rng.gen());
  for (auto& v : p.data) v = rng.uniform(-scale, scale);
  return p;
}

// Composite training loss with the reweight map supplied from outside, so it
// is a constant with respect to the parameters.
inline double composite_with_map(const NetworkParams& params, const SceneSample& sample,
                                 const AnchorGrid& anchors, const TrainConfig& config,
                                 const ForwardPass& teacher, const FeatureMap& m_rw) {
  const ForwardPass pass = forward(params, sample.bev);
  const DetectionLoss det = detection_loss(pass.o_class, pass.o_box, sample.targets, anchors, config.focal);
  const bool on_box = config.feature == AdaptationFeature::Box;
  const AssociationResult a = association_loss(on_box ? pass.f_box : pass.f_class,
                                               on_box ? teacher.f_box : teacher.f_class, m_rw,
                                               config.normalization);
  return total_loss(det.terms, a.loss, config.sigma);
}

// Reweight map that scene_loss derives internally for these parameters.
inline FeatureMap reweight_for(const NetworkParams& params, const SceneSample& sample,
                               const TrainConfig& config, const ForwardPass& teacher,
                               const CrParams& cr) {
  const ForwardPass pass = forward(params, sample.bev);
  if (config.adaptation == AdaptationMode::SpatialChannel) {
    return sc_reweight(pass.f_class, teacher.f_class, sample.foreground, cr);
  }
  return uniform_foreground_reweight(sample.foreground, params.shape.features);
}

}  // namespace fixture
