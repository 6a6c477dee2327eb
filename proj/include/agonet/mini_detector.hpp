#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agonet/concept_builder.hpp"
#include "agonet/detection_math.hpp"
#include "agonet/feature_map.hpp"
#include "agonet/scene_io.hpp"
#include "agonet/voxel_grid.hpp"

namespace agonet {

struct NetworkShape {
  int in_channels = 8;   // z-bins of the occupancy map
  int height = 16;
  int width = 16;
  int hidden = 16;
  int features = 16;     // J
  int anchors_per_cell = 2;
  bool separate_branches = false;  // distinct last conv for F_class / F_box

  bool operator==(const NetworkShape&) const = default;
};

struct ParamSlot {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamSlot&) const = default;
};

// Three 3x3 convolutions with ReLU (in -> hidden -> hidden -> J) followed by
// 1x1 heads for class logits (one per anchor) and box deltas (seven per
// anchor). All weights live in one flat vector.
struct NetworkParams {
  NetworkShape shape;
  std::vector<ParamSlot> slots;
  std::vector<double> data;

  // He-uniform 3x3 weights, +-1/sqrt(J) head weights, zero biases except the
  // class bias at -1.99 (prior probability ~0.12).
  static NetworkParams init(const NetworkShape& shape, std::uint64_t seed);

  const ParamSlot& slot(const std::string& name) const;
  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;

  bool operator==(const NetworkParams&) const = default;
};

// Activations kept for the backward pass.
struct ForwardPass {
  FeatureMap input;
  FeatureMap h1;
  FeatureMap h2;
  FeatureMap f_class;
  FeatureMap f_box;  // same tensor as f_class unless separate_branches
  FeatureMap o_class;
  FeatureMap o_box;
};

ForwardPass forward(const NetworkParams& params, const FeatureMap& bev);

// Gradient of the loss with respect to the flat parameter vector given the
// loss gradients at the heads and optional extra gradients at the features.
std::vector<double> backward(const NetworkParams& params, const ForwardPass& pass,
                             const FeatureMap& d_class, const FeatureMap& d_box,
                             const FeatureMap* d_f_box = nullptr,
                             const FeatureMap* d_f_class = nullptr);

// ---------------------------------------------------------------------------
// Training

enum class AdaptationMode {
  None,            // plain detector training
  Foreground,      // association loss on foreground pixels, uniform weight
  SpatialChannel,  // association loss weighted by SC-reweight
};

enum class AdaptationFeature { Box, Class };

struct TrainConfig {
  int epochs = 12;
  int batch_size = 2;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  AdaptationMode adaptation = AdaptationMode::SpatialChannel;
  AdaptationFeature feature = AdaptationFeature::Box;
  AgoNormalization normalization = AgoNormalization::PerElement;
  FocalConfig focal;
  double pos_threshold = 0.6;
  double neg_threshold = 0.45;
  bool init_from_teacher = false;  // start the PFE from the CFG weights
  bool augment = false;
  AugmentConfig augment_config;

  void validate() const;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double learning_rate = 0.0;
  double loss_class = 0.0;
  double loss_box = 0.0;
  double loss_ago = 0.0;
  double loss_total = 0.0;

  bool operator==(const StepRecord&) const = default;
};

struct TrainResult {
  NetworkParams params;
  std::vector<StepRecord> history;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Everything the loss needs from one scene, precomputed.
struct SceneSample {
  FeatureMap bev;
  DetectionTargets targets;
  BevMask foreground;
  std::vector<Box3D> gts;
};

struct DetectorSetup {
  GridConfig grid = GridConfig::desk();
  AnchorConfig anchors;
  NetworkShape shape;  // in_channels/height/width follow the grid

  // Fills shape dims from the grid.
  static DetectorSetup for_grid(const GridConfig& grid, const AnchorConfig& anchors,
                                bool separate_branches = false);
  AnchorGrid anchor_grid() const { return make_anchor_grid(grid, anchors); }
};

SceneSample make_sample(const Scene& scene, const DetectorSetup& setup,
                        const AnchorGrid& anchors, double pos_thr, double neg_thr);

// Detection loss of one scene and its gradient at the heads.
struct SceneLoss {
  LossTerms terms;
  double ago = 0.0;
  double total = 0.0;
  std::vector<double> grad;
};

// Full composite loss for one (perceptual, conceptual-features) pair. When
// `teacher` is null only the detection loss is used.
SceneLoss scene_loss(const NetworkParams& params, const SceneSample& sample,
                     const AnchorGrid& anchors, const TrainConfig& config,
                     const ForwardPass* teacher, const CrParams* cr);

// C-R parameters used by train_ago for this config. They are never
// updated, since the reweight map is a constant for differentiation.
CrParams cr_params_for(const TrainConfig& config, int features);

// Trains on conceptual scenes with L_box + L_class.
TrainResult train_cfg(const std::vector<Scene>& conceptual, const DetectorSetup& setup,
                      const TrainConfig& config, const StepCallback& on_step = {});

// Plain detector on perceptual scenes.
TrainResult train_baseline(const std::vector<Scene>& perceptual, const DetectorSetup& setup,
                           const TrainConfig& config, const StepCallback& on_step = {});

// Two-phase adaptation: the frozen CFG sees each conceptual scene, the PFE
// its perceptual twin; only the PFE is updated.
TrainResult train_ago(const std::vector<Scene>& perceptual, const std::vector<Scene>& conceptual,
                      const NetworkParams& cfg, const DetectorSetup& setup,
                      const TrainConfig& config, const StepCallback& on_step = {});

// ---------------------------------------------------------------------------
// Inference

struct InferConfig {
  double score_threshold = 0.3;
  double nms_threshold = 0.1;
  std::size_t max_candidates = 1000;
};

// Greedy NMS over rotated BEV IoU. Candidates are visited by descending
// score, ties by lower index; returns kept indices in visit order.
std::vector<std::size_t> greedy_nms(const std::vector<Box3D>& boxes,
                                    const std::vector<double>& scores, double iou_threshold);

std::vector<Detection> decode_detections(const FeatureMap& o_class, const FeatureMap& o_box,
                                         const AnchorGrid& anchors, const InferConfig& config);

std::vector<Detection> infer(const NetworkParams& params, const Scene& scene,
                             const DetectorSetup& setup, const InferConfig& config = {});

// ---------------------------------------------------------------------------
// Persistence

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

std::string step_record_json(const std::string& phase, const StepRecord& r);

}  // namespace agonet
