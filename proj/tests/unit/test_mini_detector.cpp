#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "agonet/container.hpp"
#include "agonet/error.hpp"
#include "agonet/mini_detector.hpp"
#include "agonet/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace agonet;
namespace fs = std::filesystem;

namespace {

// Checks every parameter gradient of a random linear functional of the
// head outputs (plus an optional feature term) against finite differences.
double network_gradient_error(bool separate, oracle::Rng& rng) {
  const DetectorSetup setup = fixture::tiny_setup(separate);
  NetworkParams p;
  FeatureMap bev;
  do {
    p = fixture::random_params(setup.shape, rng);
    bev = oracle::random_map(rng, setup.shape.in_channels, 4, 4, 0.0, 1.0);
  } while (oracle::min_abs_preactivation(p, bev) < 1e-3);
  const int A = setup.shape.anchors_per_cell;
  const FeatureMap a = oracle::random_map(rng, A, 4, 4);
  const FeatureMap b = oracle::random_map(rng, 7 * A, 4, 4);
  const FeatureMap c = oracle::random_map(rng, setup.shape.features, 4, 4);
  auto objective = [&](const NetworkParams& q) {
    const ForwardPass f = forward(q, bev);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * f.o_class.values[i];
    for (std::size_t i = 0; i < b.size(); ++i) s += b.values[i] * f.o_box.values[i];
    for (std::size_t i = 0; i < c.size(); ++i) s += c.values[i] * f.f_box.values[i];
    return s;
  };
  const std::vector<double> g = backward(p, forward(p, bev), a, b, &c);
  double worst = 0.0;
  NetworkParams q = p;
  for (std::size_t k = 0; k < p.data.size(); ++k) {
    const double fd = oracle::central_difference(
        [&](double v) {
          q.data[k] = v;
          return objective(q);
        },
        p.data[k]);
    q.data[k] = p.data[k];
    worst = std::max(worst, oracle::gradient_error(fd, g[k]));
  }
  return worst;
}

std::vector<Scene> desk_scenes(std::size_t n, std::uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.seed = seed;
  std::vector<Scene> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(crop_scene(generate_scene(spec, i), GridConfig::desk().range));
  return out;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.learning_rate = 0.1;
  return c;
}

}  // namespace

TEST_SUITE("mini_detector") {
  TEST_CASE("parameter layout") {
    NetworkShape s;
    const NetworkParams p = NetworkParams::init(s, 1);
    CHECK(p.slot("conv1.w").shape == std::vector<int>{16, 8, 3, 3});
    CHECK(p.slot("cls.w").shape == std::vector<int>{2, 16});
    CHECK(p.slot("box.b").size == 14);
    for (double v : p.view("cls.b")) CHECK(v == -1.99);
    for (double v : p.view("conv2.b")) CHECK(v == 0.0);
    CHECK(NetworkParams::init(s, 1) == p);
    CHECK_FALSE(NetworkParams::init(s, 2) == p);
    CHECK_THROWS(p.slot("nope"));
    s.separate_branches = true;
    CHECK(NetworkParams::init(s, 1).slot("conv3_box.w").size == 16 * 16 * 9);
  }

  TEST_CASE("zero input and zero biases give zero outputs") {
    NetworkParams p = NetworkParams::init(NetworkShape{}, 3);
    for (const auto& slot : p.slots) {
      if (slot.shape.size() == 1) {
        for (double& v : p.view(slot.name)) v = 0.0;
      }
    }
    const ForwardPass f = forward(p, FeatureMap(8, 16, 16));
    for (double v : f.o_class.values) CHECK(v == 0.0);
    for (double v : f.o_box.values) CHECK(v == 0.0);
    CHECK_THROWS_AS(forward(p, FeatureMap(8, 16, 15)), ShapeError);
  }

  TEST_CASE("impulse response stays inside the receptive field") {
    NetworkParams p = NetworkParams::init(NetworkShape{}, 4);
    for (const auto& slot : p.slots) {
      if (slot.shape.size() == 1) {
        for (double& v : p.view(slot.name)) v = 0.0;
      }
    }
    for (double& v : p.view("conv1.w")) v = std::abs(v);
    for (double& v : p.view("conv2.w")) v = std::abs(v);
    for (double& v : p.view("conv3.w")) v = std::abs(v);
    FeatureMap bev(8, 16, 16);
    bev.at(2, 8, 7) = 1.0;
    const ForwardPass f = forward(p, bev);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        const bool inside = std::abs(i - 8) <= 3 && std::abs(j - 7) <= 3;
        double mag = 0.0;
        for (int c = 0; c < f.o_box.channels; ++c) mag += std::abs(f.o_box.at(c, i, j));
        if (!inside) CHECK(mag == 0.0);
        if (std::abs(i - 8) <= 3 && std::abs(j - 7) <= 3) CHECK(mag > 0.0);
      }
    }
  }

  TEST_CASE("forward matches the naive convolution oracle") {
    oracle::Rng rng(40);
    for (bool separate : {false, true}) {
      const DetectorSetup setup = fixture::tiny_setup(separate);
      const NetworkParams p = fixture::random_params(setup.shape, rng);
      const FeatureMap bev = oracle::random_map(rng, 4, 4, 4, 0, 1);
      const ForwardPass f = forward(p, bev);
      const oracle::NaivePass n = oracle::naive_forward(p, bev);
      for (std::size_t i = 0; i < f.o_class.size(); ++i) CHECK(f.o_class.values[i] == doctest::Approx(n.o_class.values[i]).epsilon(1e-12));
      for (std::size_t i = 0; i < f.o_box.size(); ++i) CHECK(f.o_box.values[i] == doctest::Approx(n.o_box.values[i]).epsilon(1e-12));
      if (!separate) CHECK(f.f_box.values == f.f_class.values);
    }
  }

  TEST_CASE("network gradients match finite differences") {
    oracle::Rng rng(41);
    for (int t = 0; t < 20; ++t) {
      CHECK(network_gradient_error(false, rng) < 1e-4);
      CHECK(network_gradient_error(true, rng) < 1e-4);
    }
  }

  TEST_CASE("composite loss gradient on the 4x4 fixture") {
    oracle::Rng rng(42);
    for (int t = 0; t < 10; ++t) {
      for (auto mode : {AdaptationMode::SpatialChannel, AdaptationMode::Foreground}) {
        const bool separate = rng.coin();
        const DetectorSetup setup = fixture::tiny_setup(separate);
        const AnchorGrid anchors = setup.anchor_grid();
        const Scene s = fixture::tiny_scene(rng);
        const SceneSample sample = make_sample(s, setup, anchors, 0.6, 0.45);
        NetworkParams p;
        do {
          p = fixture::random_params(setup.shape, rng);
        } while (oracle::min_abs_preactivation(p, sample.bev) < 1e-3);
        const ForwardPass teacher = forward(fixture::random_params(setup.shape, rng), sample.bev);
        TrainConfig cfg;
        cfg.adaptation = mode;
        cfg.sigma = rng.uniform(0.5, 2.0);
        const CrParams cr = cr_params_for(cfg, setup.shape.features);
        const SceneLoss sl = scene_loss(p, sample, anchors, cfg, &teacher, &cr);
        const FeatureMap m = fixture::reweight_for(p, sample, cfg, teacher, cr);
        CHECK(sl.total == fixture::composite_with_map(p, sample, anchors, cfg, teacher, m));
        NetworkParams q = p;
        double worst = 0.0;
        for (std::size_t k = 0; k < p.data.size(); ++k) {
          const double fd = oracle::central_difference(
              [&](double v) {
                q.data[k] = v;
                return fixture::composite_with_map(q, sample, anchors, cfg, teacher, m);
              },
              p.data[k]);
          q.data[k] = p.data[k];
          worst = std::max(worst, oracle::gradient_error(fd, sl.grad[k]));
        }
        CHECK(worst < 1e-4);
      }
    }
  }

  TEST_CASE("reweight map is detached from the gradient") {
    oracle::Rng rng(43);
    const DetectorSetup setup = fixture::tiny_setup(false);
    const AnchorGrid anchors = setup.anchor_grid();
    const SceneSample sample = make_sample(fixture::tiny_scene(rng), setup, anchors, 0.6, 0.45);
    const NetworkParams p = fixture::random_params(setup.shape, rng);
    const ForwardPass teacher = forward(fixture::random_params(setup.shape, rng), sample.bev);
    TrainConfig cfg;
    const CrParams cr = cr_params_for(cfg, setup.shape.features);
    const SceneLoss sl = scene_loss(p, sample, anchors, cfg, &teacher, &cr);
    const ForwardPass pass = forward(p, sample.bev);
    FeatureMap constant = sc_reweight(pass.f_class, teacher.f_class, sample.foreground, cr);
    const DetectionLoss det = detection_loss(pass.o_class, pass.o_box, sample.targets, anchors);
    FeatureMap d = association_loss(pass.f_box, teacher.f_box, constant).grad;
    for (auto& v : d.values) v *= cfg.sigma;
    CHECK(backward(p, pass, det.d_class, det.d_box, &d) == sl.grad);
    CHECK(cr_params_for(cfg, 16) == cr_params_for(cfg, 16));
  }

  TEST_CASE("greedy NMS examples and oracle") {
    const Box3D a = Box3D::make(0, 0, 0, 1, 1, 1, 0);
    const Box3D b = Box3D::make(1.0 / 3.0, 0, 0, 1, 1, 1, 0);
    REQUIRE(rotated_bev_iou(a, b) == doctest::Approx(0.5));
    CHECK(greedy_nms({a, b}, {0.9, 0.8}, 0.1) == std::vector<std::size_t>{0});
    CHECK(greedy_nms({a, b}, {0.8, 0.9}, 0.1) == std::vector<std::size_t>{1});
    CHECK(greedy_nms({a, a}, {0.5, 0.5}, 0.1) == std::vector<std::size_t>{0});
    oracle::Rng rng(44);
    for (int t = 0; t < 100; ++t) {
      std::vector<Box3D> boxes;
      std::vector<double> scores;
      const int n = rng.integer(1, 60);
      for (int i = 0; i < n; ++i) {
        boxes.push_back(oracle::random_box(rng, 4.0, 0.5, 3.0));
        scores.push_back(std::round(rng.uniform(0, 1) * 20) / 20);
      }
      const double thr = rng.uniform(0.0, 0.7);
      CHECK(greedy_nms(boxes, scores, thr) == oracle::greedy_nms(boxes, scores, thr));
    }
  }

  TEST_CASE("decoding and inference") {
    const DetectorSetup setup = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{});
    const AnchorGrid anchors = setup.anchor_grid();
    FeatureMap cls(2, 16, 16);
    for (auto& v : cls.values) v = -1e4;
    const FeatureMap box(14, 16, 16);
    CHECK(decode_detections(cls, box, anchors, InferConfig{}).empty());
    cls.at(0, 4, 4) = 3.0;
    cls.at(1, 4, 5) = 2.0;
    cls.at(0, 12, 3) = 1.0;
    const auto dets = decode_detections(cls, box, anchors, InferConfig{});
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].score == doctest::Approx(sigmoid(3.0)));
    CHECK(dets[0].box == anchors.anchors[anchors.index(4, 4, 0)]);
    CHECK(dets[1].box == anchors.anchors[anchors.index(12, 3, 0)]);

    const NetworkParams p = NetworkParams::init(setup.shape, 5);
    const Scene s = desk_scenes(1)[0];
    const auto out = infer(p, s, setup);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].score >= out[i].score);
    for (const auto& d : out) CHECK(d.score >= 0.3);
  }

  TEST_CASE("training is deterministic and validates input") {
    const auto scenes = desk_scenes(4);
    const DetectorSetup setup = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{}, true);
    const TrainConfig cfg = quick_config(2);
    const TrainResult a = train_cfg(scenes, setup, cfg);
    const TrainResult b = train_cfg(scenes, setup, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history == b.history);
    CHECK(a.history.size() == 4);
    CHECK_THROWS_AS(train_cfg({}, setup, cfg), DomainError);
    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train_cfg(scenes, setup, bad), DomainError);
  }

  TEST_CASE("a single scene can be overfit") {
    const auto scenes = desk_scenes(1, 9);
    const DetectorSetup setup = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{}, true);
    TrainConfig cfg = quick_config(200);
    cfg.batch_size = 1;
    const TrainResult r = train_baseline(scenes, setup, cfg);
    REQUIRE(r.history.size() == 200);
    CHECK(r.history.back().loss_total < 0.5 * r.history.front().loss_total);
  }

  TEST_CASE("adaptation training contracts") {
    const auto perceptual = desk_scenes(4);
    std::vector<LabeledObject> objs;
    for (const auto& s : perceptual) objs.insert(objs.end(), s.objects.begin(), s.objects.end());
    const auto bank = build_bank(objs, ConstructionConfig{});
    const auto conceptual = build_conceptual_scenes(perceptual, bank, ConstructionConfig{});
    const DetectorSetup setup = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{}, true);
    const TrainConfig cfg = quick_config(2);
    const NetworkParams teacher = train_cfg(conceptual, setup, cfg).params;
    const NetworkParams frozen = teacher;

    TrainConfig zero = cfg;
    zero.sigma = 0.0;
    const TrainResult ago0 = train_ago(perceptual, conceptual, teacher, setup, zero);
    const TrainResult base = train_baseline(perceptual, setup, zero);
    CHECK(ago0.params == base.params);
    REQUIRE(ago0.history.size() == base.history.size());
    for (std::size_t i = 0; i < base.history.size(); ++i) {
      CHECK(ago0.history[i].loss_total == base.history[i].loss_total);
      CHECK(ago0.history[i].loss_class == base.history[i].loss_class);
      CHECK(ago0.history[i].loss_box == base.history[i].loss_box);
    }

    const TrainResult ago = train_ago(perceptual, conceptual, teacher, setup, cfg);
    CHECK(teacher == frozen);
    CHECK_FALSE(ago.params == base.params);
    CHECK(ago.history[0].loss_ago > 0.0);

    TrainConfig warm = cfg;
    warm.init_from_teacher = true;
    const TrainResult self = train_ago(conceptual, conceptual, teacher, setup, warm);
    CHECK(self.history[0].loss_ago == 0.0);

    std::vector<Scene> shuffled = conceptual;
    std::swap(shuffled[0], shuffled[1]);
    CHECK_THROWS_AS(train_ago(perceptual, shuffled, teacher, setup, cfg), DomainError);
    CHECK_THROWS_AS(train_ago(perceptual, {conceptual[0]}, teacher, setup, cfg), DomainError);
    const DetectorSetup other = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{}, false);
    CHECK_THROWS_AS(train_ago(perceptual, conceptual, teacher, other, cfg), ShapeError);
  }

  TEST_CASE("augmented adaptation training is deterministic") {
    const auto perceptual = desk_scenes(4);
    std::vector<LabeledObject> objs;
    for (const auto& s : perceptual) objs.insert(objs.end(), s.objects.begin(), s.objects.end());
    const auto bank = build_bank(objs, ConstructionConfig{});
    const auto conceptual = build_conceptual_scenes(perceptual, bank, ConstructionConfig{});
    const DetectorSetup setup = DetectorSetup::for_grid(GridConfig::desk(), AnchorConfig{}, true);
    TrainConfig cfg = quick_config(2);
    cfg.augment = true;
    const NetworkParams teacher = train_cfg(conceptual, setup, quick_config(1)).params;
    const TrainResult a = train_ago(perceptual, conceptual, teacher, setup, cfg);
    const TrainResult b = train_ago(perceptual, conceptual, teacher, setup, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history == b.history);
  }

  TEST_CASE("checkpoints round trip and reject corruption") {
    const fs::path dir = fs::temp_directory_path() / "agonet_unit_ckpt";
    fs::remove_all(dir);
    NetworkShape s;
    s.separate_branches = true;
    const NetworkParams p = NetworkParams::init(s, 11);
    save_checkpoint(p, dir / "a.agockpt");
    CHECK(load_checkpoint(dir / "a.agockpt") == p);
    auto bytes = read_file_bytes(dir / "a.agockpt");
    bytes.resize(bytes.size() - 8);
    write_file_bytes(dir / "b.agockpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "b.agockpt"), FormatError);
    CHECK_THROWS(load_checkpoint(dir / "missing.agockpt"));
  }

  TEST_CASE("step records serialize as one JSON object") {
    StepRecord r;
    r.epoch = 1;
    r.step = 7;
    r.loss_total = 0.5;
    const std::string j = step_record_json("cfg", r);
    CHECK(j.find("\"phase\":\"cfg\"") != std::string::npos);
    CHECK(j.find("\"step\":7") != std::string::npos);
    CHECK(j.find('\n') == std::string::npos);
  }
}
