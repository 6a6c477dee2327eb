#include "agonet/mini_detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include <json.hpp>

#include "agonet/container.hpp"
#include "agonet/error.hpp"

namespace agonet {

// ---------------------------------------------------------------------------
// Parameters

namespace {

void add_slot(NetworkParams& p, std::string name, std::vector<int> shape) {
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  p.slots.push_back({std::move(name), std::move(shape), p.data.size(), size});
  p.data.resize(p.data.size() + size, 0.0);
}

constexpr double kClassPriorBias = -1.99;

}  // namespace

NetworkParams NetworkParams::init(const NetworkShape& s, std::uint64_t seed) {
  if (s.in_channels < 1 || s.height < 1 || s.width < 1 || s.hidden < 1 || s.features < 2 ||
      s.anchors_per_cell < 1) {
    throw DomainError("NetworkParams: invalid shape");
  }
  NetworkParams p;
  p.shape = s;
  add_slot(p, "conv1.w", {s.hidden, s.in_channels, 3, 3});
  add_slot(p, "conv1.b", {s.hidden});
  add_slot(p, "conv2.w", {s.hidden, s.hidden, 3, 3});
  add_slot(p, "conv2.b", {s.hidden});
  add_slot(p, "conv3.w", {s.features, s.hidden, 3, 3});
  add_slot(p, "conv3.b", {s.features});
  if (s.separate_branches) {
    add_slot(p, "conv3_box.w", {s.features, s.hidden, 3, 3});
    add_slot(p, "conv3_box.b", {s.features});
  }
  add_slot(p, "cls.w", {s.anchors_per_cell, s.features});
  add_slot(p, "cls.b", {s.anchors_per_cell});
  add_slot(p, "box.w", {7 * s.anchors_per_cell, s.features});
  add_slot(p, "box.b", {7 * s.anchors_per_cell});

  std::mt19937_64 rng(seed);
  for (const auto& slot : p.slots) {
    if (slot.shape.size() == 1) continue;
    double bound = 0.0;
    if (slot.shape.size() == 4) {
      const double fan_in = static_cast<double>(slot.shape[1]) * 9.0;
      bound = std::sqrt(6.0 / fan_in);
    } else {
      bound = 1.0 / std::sqrt(static_cast<double>(slot.shape[1]));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < slot.size; ++k) p.data[slot.offset + k] = dist(rng);
  }
  for (double& b : p.view("cls.b")) b = kClassPriorBias;
  return p;
}

const ParamSlot& NetworkParams::slot(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return s;
  }
  throw DomainError("NetworkParams: no slot named " + name);
}

std::span<double> NetworkParams::view(const std::string& name) {
  const ParamSlot& s = slot(name);
  return std::span<double>(data).subspan(s.offset, s.size);
}

std::span<const double> NetworkParams::view(const std::string& name) const {
  const ParamSlot& s = slot(name);
  return std::span<const double>(data).subspan(s.offset, s.size);
}

// ---------------------------------------------------------------------------
// Layers

namespace {

// 3x3 convolution with zero padding.
FeatureMap conv3x3(const FeatureMap& in, std::span<const double> w, std::span<const double> b,
                   int out_channels) {
  const int H = in.height;
  const int W = in.width;
  const int C = in.channels;
  FeatureMap out(out_channels, H, W);
  for (int o = 0; o < out_channels; ++o) {
    double* dst = out.values.data() + static_cast<std::size_t>(o) * H * W;
    std::fill(dst, dst + static_cast<std::size_t>(H) * W, b[o]);
    for (int c = 0; c < C; ++c) {
      const double* src = in.values.data() + static_cast<std::size_t>(c) * H * W;
      const double* k = w.data() + (static_cast<std::size_t>(o) * C + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = k[ky * 3 + kx];
          const int dy = ky - 1;
          const int dx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int y = y0; y < y1; ++y) {
            double* row = dst + static_cast<std::size_t>(y) * W;
            const double* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) row[x] += wk * srow[x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients into dw/db and returns d input.
FeatureMap conv3x3_backward(const FeatureMap& in, std::span<const double> w,
                            const FeatureMap& d_out, std::span<double> dw, std::span<double> db,
                            bool need_input_grad) {
  const int H = in.height;
  const int W = in.width;
  const int C = in.channels;
  const int O = d_out.channels;
  FeatureMap d_in(need_input_grad ? C : 0, H, W);
  for (int o = 0; o < O; ++o) {
    const double* g = d_out.values.data() + static_cast<std::size_t>(o) * H * W;
    double sum = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) sum += g[i];
    db[o] += sum;
    for (int c = 0; c < C; ++c) {
      const double* src = in.values.data() + static_cast<std::size_t>(c) * H * W;
      const double* k = w.data() + (static_cast<std::size_t>(o) * C + c) * 9;
      double* dk = dw.data() + (static_cast<std::size_t>(o) * C + c) * 9;
      double* di = need_input_grad ? d_in.values.data() + static_cast<std::size_t>(c) * H * W : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1;
          const int dx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const double wk = k[ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * W;
            const double* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (di) {
              double* drow = di + static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) drow[x] += wk * grow[x];
            }
          }
          dk[ky * 3 + kx] += acc;
        }
      }
    }
  }
  return d_in;
}

void relu_inplace(FeatureMap& m) {
  for (auto& v : m.values) v = v > 0.0 ? v : 0.0;
}

// Multiplies the gradient by the ReLU mask of the stored activation.
void relu_backward(const FeatureMap& activation, FeatureMap& grad) {
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    if (!(activation.values[i] > 0.0)) grad.values[i] = 0.0;
  }
}

FeatureMap conv1x1(const FeatureMap& in, std::span<const double> w, std::span<const double> b,
                   int out_channels) {
  const std::size_t plane = in.plane();
  FeatureMap out(out_channels, in.height, in.width);
  for (int o = 0; o < out_channels; ++o) {
    double* dst = out.values.data() + o * plane;
    std::fill(dst, dst + plane, b[o]);
    for (int c = 0; c < in.channels; ++c) {
      const double wk = w[static_cast<std::size_t>(o) * in.channels + c];
      const double* src = in.values.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += wk * src[i];
    }
  }
  return out;
}

void conv1x1_backward(const FeatureMap& in, std::span<const double> w, const FeatureMap& d_out,
                      std::span<double> dw, std::span<double> db, FeatureMap& d_in) {
  const std::size_t plane = in.plane();
  for (int o = 0; o < d_out.channels; ++o) {
    const double* g = d_out.values.data() + o * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += g[i];
    db[o] += sum;
    for (int c = 0; c < in.channels; ++c) {
      const double* src = in.values.data() + c * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += g[i] * src[i];
      dw[static_cast<std::size_t>(o) * in.channels + c] += acc;
      const double wk = w[static_cast<std::size_t>(o) * in.channels + c];
      double* di = d_in.values.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) di[i] += wk * g[i];
    }
  }
}

std::span<double> grad_view(std::vector<double>& grad, const NetworkParams& p,
                            const std::string& name) {
  const ParamSlot& s = p.slot(name);
  return std::span<double>(grad).subspan(s.offset, s.size);
}

}  // namespace

ForwardPass forward(const NetworkParams& params, const FeatureMap& bev) {
  const NetworkShape& s = params.shape;
  if (bev.channels != s.in_channels || bev.height != s.height || bev.width != s.width) {
    throw ShapeError("forward: input " + std::to_string(bev.channels) + "x" +
                     std::to_string(bev.height) + "x" + std::to_string(bev.width) +
                     " does not match network " + std::to_string(s.in_channels) + "x" +
                     std::to_string(s.height) + "x" + std::to_string(s.width));
  }
  ForwardPass pass;
  pass.input = bev;
  pass.h1 = conv3x3(bev, params.view("conv1.w"), params.view("conv1.b"), s.hidden);
  relu_inplace(pass.h1);
  pass.h2 = conv3x3(pass.h1, params.view("conv2.w"), params.view("conv2.b"), s.hidden);
  relu_inplace(pass.h2);
  pass.f_class = conv3x3(pass.h2, params.view("conv3.w"), params.view("conv3.b"), s.features);
  relu_inplace(pass.f_class);
  if (s.separate_branches) {
    pass.f_box = conv3x3(pass.h2, params.view("conv3_box.w"), params.view("conv3_box.b"), s.features);
    relu_inplace(pass.f_box);
  } else {
    pass.f_box = pass.f_class;
  }
  pass.f_class.role = FeatureRole::ClassPerceptual;
  pass.f_box.role = FeatureRole::BoxPerceptual;
  pass.o_class = conv1x1(pass.f_class, params.view("cls.w"), params.view("cls.b"), s.anchors_per_cell);
  pass.o_box = conv1x1(pass.f_box, params.view("box.w"), params.view("box.b"), 7 * s.anchors_per_cell);
  return pass;
}

std::vector<double> backward(const NetworkParams& params, const ForwardPass& pass,
                             const FeatureMap& d_class, const FeatureMap& d_box,
                             const FeatureMap* d_f_box, const FeatureMap* d_f_class) {
  const NetworkShape& s = params.shape;
  if (!d_class.same_shape(pass.o_class) || !d_box.same_shape(pass.o_box)) {
    throw ShapeError("backward: head gradient shapes differ from outputs");
  }
  std::vector<double> grad(params.data.size(), 0.0);
  FeatureMap g_fc(s.features, s.height, s.width);
  FeatureMap g_fb(s.features, s.height, s.width);
  conv1x1_backward(pass.f_class, params.view("cls.w"), d_class, grad_view(grad, params, "cls.w"),
                   grad_view(grad, params, "cls.b"), g_fc);
  conv1x1_backward(pass.f_box, params.view("box.w"), d_box, grad_view(grad, params, "box.w"),
                   grad_view(grad, params, "box.b"), g_fb);
  auto add_extra = [](FeatureMap& dst, const FeatureMap* extra) {
    if (!extra) return;
    if (!extra->same_shape(dst)) throw ShapeError("backward: feature gradient shape mismatch");
    for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += extra->values[i];
  };
  add_extra(g_fc, d_f_class);
  add_extra(g_fb, d_f_box);
  FeatureMap g_h2;
  if (s.separate_branches) {
    relu_backward(pass.f_class, g_fc);
    relu_backward(pass.f_box, g_fb);
    g_h2 = conv3x3_backward(pass.h2, params.view("conv3.w"), g_fc, grad_view(grad, params, "conv3.w"),
                            grad_view(grad, params, "conv3.b"), true);
    const FeatureMap g_h2b =
        conv3x3_backward(pass.h2, params.view("conv3_box.w"), g_fb,
                         grad_view(grad, params, "conv3_box.w"), grad_view(grad, params, "conv3_box.b"), true);
    for (std::size_t i = 0; i < g_h2.values.size(); ++i) g_h2.values[i] += g_h2b.values[i];
  } else {
    for (std::size_t i = 0; i < g_fc.values.size(); ++i) g_fc.values[i] += g_fb.values[i];
    relu_backward(pass.f_class, g_fc);
    g_h2 = conv3x3_backward(pass.h2, params.view("conv3.w"), g_fc, grad_view(grad, params, "conv3.w"),
                            grad_view(grad, params, "conv3.b"), true);
  }
  relu_backward(pass.h2, g_h2);
  FeatureMap g_h1 = conv3x3_backward(pass.h1, params.view("conv2.w"), g_h2,
                                     grad_view(grad, params, "conv2.w"),
                                     grad_view(grad, params, "conv2.b"), true);
  relu_backward(pass.h1, g_h1);
  conv3x3_backward(pass.input, params.view("conv1.w"), g_h1, grad_view(grad, params, "conv1.w"),
                   grad_view(grad, params, "conv1.b"), false);
  return grad;
}

// ---------------------------------------------------------------------------
// Losses and training

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw DomainError("train: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
  if (!(sigma >= 0.0)) throw DomainError("train: sigma must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("train: momentum must be in [0, 1)");
}

DetectorSetup DetectorSetup::for_grid(const GridConfig& grid, const AnchorConfig& anchors,
                                      bool separate_branches) {
  DetectorSetup s;
  s.grid = grid;
  s.anchors = anchors;
  s.shape.in_channels = grid.dims[2];
  s.shape.height = grid.bev_height();
  s.shape.width = grid.bev_width();
  s.shape.anchors_per_cell = static_cast<int>(anchors.yaws.size());
  s.shape.separate_branches = separate_branches;
  return s;
}

SceneSample make_sample(const Scene& scene, const DetectorSetup& setup, const AnchorGrid& anchors,
                        double pos_thr, double neg_thr) {
  SceneSample s;
  const SparseVoxelTensor t = voxelize(scene.cloud, setup.grid);
  s.bev = to_bev_occupancy(t);
  for (const auto& o : scene.objects) {
    if (o.category == Category::Car) s.gts.push_back(o.box);
  }
  s.targets = build_targets(anchors, s.gts, occupancy_mask(t), pos_thr, neg_thr);
  s.foreground = foreground_mask(s.gts, setup.grid);
  return s;
}

SceneLoss scene_loss(const NetworkParams& params, const SceneSample& sample,
                     const AnchorGrid& anchors, const TrainConfig& config,
                     const ForwardPass* teacher, const CrParams* cr) {
  const ForwardPass pass = forward(params, sample.bev);
  const DetectionLoss det = detection_loss(pass.o_class, pass.o_box, sample.targets, anchors, config.focal);
  SceneLoss out;
  out.terms = det.terms;
  std::optional<FeatureMap> d_feature;
  if (teacher && config.adaptation != AdaptationMode::None) {
    FeatureMap reweight;
    if (config.adaptation == AdaptationMode::SpatialChannel) {
      if (!cr) throw DomainError("scene_loss: SC-reweight requires C-R parameters");
      reweight = sc_reweight(pass.f_class, teacher->f_class, sample.foreground, *cr);
    } else {
      reweight = uniform_foreground_reweight(sample.foreground, params.shape.features);
    }
    const bool on_box = config.feature == AdaptationFeature::Box;
    const AssociationResult assoc =
        association_loss(on_box ? pass.f_box : pass.f_class,
                         on_box ? teacher->f_box : teacher->f_class, reweight, config.normalization);
    out.ago = assoc.loss;
    d_feature = assoc.grad;
    for (auto& v : d_feature->values) v *= config.sigma;
  }
  out.total = total_loss(out.terms, out.ago, config.sigma);
  const FeatureMap* extra = d_feature ? &*d_feature : nullptr;
  const bool on_box = config.feature == AdaptationFeature::Box;
  out.grad = backward(params, pass, det.d_class, det.d_box, on_box ? extra : nullptr,
                      on_box ? nullptr : extra);
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kCrSeedSalt = 0x43522d5765696768ULL;

// Shared SGD loop. `teacher` is null for plain training; `paired` supplies the
// conceptual twin of each training scene when augmentation is on.
TrainResult run_training(const std::vector<Scene>& scenes, const std::vector<Scene>* paired,
                         const NetworkParams* teacher, const DetectorSetup& setup,
                         const TrainConfig& config, NetworkParams params,
                         const StepCallback& on_step) {
  config.validate();
  if (scenes.empty()) throw DomainError("train: empty dataset");
  const AnchorGrid anchors = setup.anchor_grid();
  const std::size_t n = scenes.size();

  std::vector<SceneSample> samples;
  std::vector<ForwardPass> teacher_passes;
  SamplerDb db;
  if (config.augment) {
    db = build_sampler_db(scenes, paired ? *paired : scenes);
  } else {
    samples.reserve(n);
    for (const auto& s : scenes) {
      samples.push_back(make_sample(s, setup, anchors, config.pos_threshold, config.neg_threshold));
    }
    if (teacher) {
      for (const auto& s : *paired) {
        ForwardPass p = forward(*teacher, make_sample(s, setup, anchors, config.pos_threshold,
                                                      config.neg_threshold).bev);
        p.input = FeatureMap();
        teacher_passes.push_back(std::move(p));
      }
    }
  }
  std::optional<CrParams> cr;
  if (teacher && config.adaptation == AdaptationMode::SpatialChannel) {
    cr = cr_params_for(config, params.shape.features);
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(config.epochs);
  std::vector<double> velocity(params.data.size(), 0.0);
  TrainResult result;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - begin);
      std::vector<double> grad(params.data.size(), 0.0);
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = static_cast<int>(step);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        SceneLoss loss;
        if (config.augment) {
          const std::uint64_t aug_seed =
              splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(epoch) * 1000003ULL + idx));
          const Scene& twin = paired ? (*paired)[idx] : scenes[idx];
          const AugmentedPair aug = paired_augment(scenes[idx], twin, db, aug_seed, config.augment_config);
          const SceneSample sample =
              make_sample(aug.perceptual, setup, anchors, config.pos_threshold, config.neg_threshold);
          std::optional<ForwardPass> tp;
          if (teacher) {
            tp = forward(*teacher, make_sample(aug.conceptual, setup, anchors, config.pos_threshold,
                                               config.neg_threshold).bev);
          }
          loss = scene_loss(params, sample, anchors, config, tp ? &*tp : nullptr, cr ? &*cr : nullptr);
        } else {
          loss = scene_loss(params, samples[idx], anchors, config,
                            teacher ? &teacher_passes[idx] : nullptr, cr ? &*cr : nullptr);
        }
        if (!std::isfinite(loss.total)) {
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step) + " (scene " + scenes[idx].id + ")");
        }
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += loss.grad[i] * inv;
        rec.loss_class += loss.terms.class_mean() * inv;
        rec.loss_box += loss.terms.box_mean() * inv;
        rec.loss_ago += loss.ago * inv;
        rec.loss_total += loss.total * inv;
      }
      const double lr = config.learning_rate * 0.5 *
                        (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(total_steps)));
      rec.learning_rate = lr;
      for (std::size_t i = 0; i < params.data.size(); ++i) {
        const double g = grad[i] + config.weight_decay * params.data[i];
        velocity[i] = config.momentum * velocity[i] + g;
        params.data[i] -= lr * velocity[i];
      }
      result.history.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace

CrParams cr_params_for(const TrainConfig& config, int features) {
  return CrParams::init(features, config.seed ^ kCrSeedSalt);
}

TrainResult train_cfg(const std::vector<Scene>& conceptual, const DetectorSetup& setup,
                      const TrainConfig& config, const StepCallback& on_step) {
  return run_training(conceptual, nullptr, nullptr, setup, config,
                      NetworkParams::init(setup.shape, config.seed), on_step);
}

TrainResult train_baseline(const std::vector<Scene>& perceptual, const DetectorSetup& setup,
                           const TrainConfig& config, const StepCallback& on_step) {
  return run_training(perceptual, nullptr, nullptr, setup, config,
                      NetworkParams::init(setup.shape, config.seed), on_step);
}

TrainResult train_ago(const std::vector<Scene>& perceptual, const std::vector<Scene>& conceptual,
                      const NetworkParams& cfg, const DetectorSetup& setup,
                      const TrainConfig& config, const StepCallback& on_step) {
  if (perceptual.size() != conceptual.size()) {
    throw DomainError("train_ago: perceptual and conceptual datasets differ in size");
  }
  for (std::size_t i = 0; i < perceptual.size(); ++i) {
    const auto& p = perceptual[i].objects;
    const auto& c = conceptual[i].objects;
    bool same = p.size() == c.size();
    for (std::size_t k = 0; same && k < p.size(); ++k) same = p[k].box == c[k].box;
    if (!same) throw DomainError("train_ago: scene " + perceptual[i].id + " is not paired");
  }
  if (cfg.shape != setup.shape) throw ShapeError("train_ago: CFG shape differs from setup");
  NetworkParams init = config.init_from_teacher ? cfg : NetworkParams::init(setup.shape, config.seed);
  return run_training(perceptual, &conceptual, &cfg, setup, config, std::move(init), on_step);
}

// ---------------------------------------------------------------------------
// Inference

std::vector<std::size_t> greedy_nms(const std::vector<Box3D>& boxes,
                                    const std::vector<double>& scores, double iou_threshold) {
  if (boxes.size() != scores.size()) throw ShapeError("greedy_nms: size mismatch");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (rotated_bev_iou(boxes[i], boxes[k]) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> decode_detections(const FeatureMap& o_class, const FeatureMap& o_box,
                                         const AnchorGrid& anchors, const InferConfig& config) {
  const int A = anchors.per_cell;
  struct Candidate {
    double score;
    std::size_t anchor;
  };
  std::vector<Candidate> cands;
  for (int i = 0; i < anchors.height; ++i) {
    for (int j = 0; j < anchors.width; ++j) {
      for (int r = 0; r < A; ++r) {
        const double score = sigmoid(o_class.at(r, i, j));
        if (score >= config.score_threshold) cands.push_back({score, anchors.index(i, j, r)});
      }
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.anchor < b.anchor);
  });
  if (cands.size() > config.max_candidates) cands.resize(config.max_candidates);
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  for (const auto& c : cands) {
    const std::size_t cell = c.anchor / A;
    const int r = static_cast<int>(c.anchor % A);
    const int i = static_cast<int>(cell / anchors.width);
    const int j = static_cast<int>(cell % anchors.width);
    BoxDeltas d{};
    for (int k = 0; k < 7; ++k) d[k] = o_box.at(7 * r + k, i, j);
    for (int k = 3; k < 6; ++k) d[k] = std::clamp(d[k], -3.0, 3.0);
    boxes.push_back(decode_box(anchors.anchors[c.anchor], d));
    scores.push_back(c.score);
  }
  std::vector<Detection> out;
  for (std::size_t k : greedy_nms(boxes, scores, config.nms_threshold)) {
    out.push_back({boxes[k], scores[k], Category::Car});
  }
  return out;
}

std::vector<Detection> infer(const NetworkParams& params, const Scene& scene,
                             const DetectorSetup& setup, const InferConfig& config) {
  const AnchorGrid anchors = setup.anchor_grid();
  const FeatureMap bev = to_bev_occupancy(voxelize(scene.cloud, setup.grid));
  const ForwardPass pass = forward(params, bev);
  return decode_detections(pass.o_class, pass.o_box, anchors, config);
}

// ---------------------------------------------------------------------------
// Persistence

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  ByteWriter shape;
  const NetworkShape& s = params.shape;
  for (int v : {s.in_channels, s.height, s.width, s.hidden, s.features, s.anchors_per_cell}) {
    shape.put_u32(static_cast<std::uint32_t>(v));
  }
  shape.put_u8(s.separate_branches ? 1 : 0);
  shape.put_u64(params.slots.size());
  for (const auto& slot : params.slots) {
    shape.put_string(slot.name);
    shape.put_u64(slot.shape.size());
    for (int d : slot.shape) shape.put_u32(static_cast<std::uint32_t>(d));
    shape.put_u64(slot.offset);
    shape.put_u64(slot.size);
  }
  ByteWriter weights;
  weights.put_u64(params.data.size());
  for (double v : params.data) weights.put_f64(v);
  ContainerWriter c(fourcc("CKPT"));
  c.add_section(fourcc("SHAP"), shape.take());
  c.add_section(fourcc("WGTS"), weights.take());
  c.save(path);
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  try {
    const auto c = ContainerReader::load(path, fourcc("CKPT"));
    ByteReader r = c.section(fourcc("SHAP"));
    NetworkShape s;
    s.in_channels = static_cast<int>(r.get_u32());
    s.height = static_cast<int>(r.get_u32());
    s.width = static_cast<int>(r.get_u32());
    s.hidden = static_cast<int>(r.get_u32());
    s.features = static_cast<int>(r.get_u32());
    s.anchors_per_cell = static_cast<int>(r.get_u32());
    s.separate_branches = r.get_u8() != 0;
    NetworkParams expected = NetworkParams::init(s, 0);
    std::vector<ParamSlot> slots(r.get_count(32));
    for (auto& slot : slots) {
      slot.name = r.get_string();
      slot.shape.resize(r.get_count(4));
      for (int& d : slot.shape) d = static_cast<int>(r.get_u32());
      slot.offset = r.get_u64();
      slot.size = r.get_u64();
    }
    if (slots != expected.slots) throw FormatError("checkpoint: shape table does not match network");
    ByteReader w = c.section(fourcc("WGTS"));
    const auto n = w.get_count(8);
    if (n != expected.data.size()) throw FormatError("checkpoint: weight count mismatch");
    for (auto& v : expected.data) v = w.get_f64();
    return expected;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string step_record_json(const std::string& phase, const StepRecord& r) {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.learning_rate;
  j["loss_class"] = r.loss_class;
  j["loss_box"] = r.loss_box;
  j["loss_ago"] = r.loss_ago;
  j["loss_total"] = r.loss_total;
  return j.dump();
}

}  // namespace agonet
