#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "agonet/feature_map.hpp"
#include "agonet/geometry.hpp"
#include "agonet/voxel_grid.hpp"

namespace agonet {

// ---------------------------------------------------------------------------
// Anchors and targets

struct AnchorConfig {
  double w = 1.6;
  double l = 3.9;
  double h = 1.56;
  double z = -1.0;
  std::array<double, 2> yaws{0.0, kPi / 2.0};
};

// One anchor per (BEV cell, yaw). Index = (i * width + j) * per_cell + r.
struct AnchorGrid {
  std::vector<Box3D> anchors;
  int height = 0;
  int width = 0;
  int per_cell = 2;
  AnchorConfig config;

  std::size_t size() const noexcept { return anchors.size(); }
  std::size_t index(int i, int j, int r) const noexcept {
    return (static_cast<std::size_t>(i) * width + j) * per_cell + r;
  }
};

AnchorGrid make_anchor_grid(const GridConfig& grid, const AnchorConfig& config);

struct AnchorLabel {
  enum class Kind : std::uint8_t { Negative, Positive, Ignore };
  Kind kind = Kind::Ignore;
  int gt = -1;  // matched ground truth for positives

  bool operator==(const AnchorLabel&) const = default;
};

// Snapped-rectangle IoU matching. An anchor on an unoccupied cell is
// ignored; otherwise it is positive when its best IoU reaches pos_thr or it
// is the best occupied anchor of some gt, negative below neg_thr.
std::vector<AnchorLabel> assign_targets(const AnchorGrid& anchors,
                                        const std::vector<Box3D>& gts,
                                        const BevMask& occupied,
                                        double pos_thr = 0.6,
                                        double neg_thr = 0.45);

// ---------------------------------------------------------------------------
// Box coding

// (dx, dy, dz, dw, dl, dh, dyaw)
using BoxDeltas = std::array<double, 7>;

// dx = (xa - xg) / da, dy = (ya - yg) / ha, dz = (za - zg) / da,
// dw/dl/dh = log(g / a), dyaw = yaw_g - yaw_a, with da the anchor's base
// diagonal. Throws DomainError for non-positive gt dimensions.
BoxDeltas encode_box(const Box3D& anchor, const Box3D& gt);

// Inverse of encode_box; yaw renormalized into [-pi, pi).
Box3D decode_box(const Box3D& anchor, const BoxDeltas& deltas);

// ---------------------------------------------------------------------------
// Scalar losses

struct LossGrad {
  double loss = 0.0;
  double grad = 0.0;
};

double sigmoid(double x);

enum class FocalSign {
  Standard,  // -alpha_t (1 - p_t)^gamma log p_t
  Literal,   // the same expression without the leading minus
};

// Focal loss of a sigmoid logit. `grad` is d loss / d logit.
LossGrad focal_loss(double logit, bool is_positive, double alpha = 0.25,
                    double gamma = 2.0, FocalSign sign = FocalSign::Standard);

// 0.5 x^2 inside |x| < 1, |x| - 0.5 outside.
LossGrad smooth_l1(double x);

// ---------------------------------------------------------------------------
// SC-reweight and the association loss

// Channel re-weighting sub-network: global average pool, FC J -> J/2, ReLU,
// FC J/2 -> J, softmax over channels.
struct CrParams {
  int channels = 0;
  int hidden = 0;
  std::vector<double> w1;  // hidden x channels
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // channels x hidden
  std::vector<double> b2;  // channels

  // Weights uniform in +-1/sqrt(J), zero biases.
  static CrParams init(int channels, std::uint64_t seed);

  bool operator==(const CrParams&) const = default;
};

// Softmax channel weights for a J x H x W difference map.
std::vector<double> channel_weights(const CrParams& cr, const FeatureMap& diff);

// Attention map phi[(mean_j Fp - mean_j Fc)^2 * M_fg] tiled to J channels and
// scaled channel-wise by (1 + beta(Fp - Fc)). phi divides by the maximum.
// The result is a constant for differentiation purposes.
FeatureMap sc_reweight(const FeatureMap& fc_p, const FeatureMap& fc_c,
                       const BevMask& m_fg, const CrParams& cr);

// Foreground mask tiled to J channels with value 1: the reweight map used
// when adaptation runs without SC-reweight.
FeatureMap uniform_foreground_reweight(const BevMask& m_fg, int channels);

enum class AgoNormalization {
  PerElement,  // divide by N * J
  PerPixel,    // divide by N
};

struct AssociationResult {
  double loss = 0.0;
  FeatureMap grad;  // d loss / d fb_p
  std::size_t active_pixels = 0;
};

// Mean over the N pixels where m_rw has any nonzero channel of
// smooth_l1(fb_p - fb_c) * (1 + m_rw). fb_c and m_rw are constants.
AssociationResult association_loss(const FeatureMap& fb_p, const FeatureMap& fb_c,
                                   const FeatureMap& m_rw,
                                   AgoNormalization norm = AgoNormalization::PerElement);

// ---------------------------------------------------------------------------
// Loss composition

struct LossTerms {
  double class_sum = 0.0;
  std::size_t class_count = 0;  // non-ignored anchors
  double box_sum = 0.0;
  std::size_t box_count = 0;  // positive anchors

  double class_mean() const noexcept;
  double box_mean() const noexcept;
};

// L_box + L_class.
double cfg_loss(const LossTerms& terms);
// L_box + L_class + sigma * L_ago.
double total_loss(const LossTerms& terms, double ago, double sigma);

// Per-scene training targets for the anchor heads.
struct DetectionTargets {
  std::vector<AnchorLabel> labels;
  std::vector<BoxDeltas> deltas;  // valid for positive anchors
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// The gt yaw is replaced by its equivalent (mod pi) closest to the anchor
// yaw before encoding, so regression never has to cross a half turn.
DetectionTargets build_targets(const AnchorGrid& anchors, const std::vector<Box3D>& gts,
                               const BevMask& occupied, double pos_thr = 0.6,
                               double neg_thr = 0.45);

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  FocalSign sign = FocalSign::Standard;
};

struct DetectionLoss {
  LossTerms terms;
  FeatureMap d_class;  // d cfg_loss / d class logits
  FeatureMap d_box;    // d cfg_loss / d box outputs
};

// Focal loss over non-ignored anchors plus smooth-L1 over positive anchors'
// seven regression outputs. Class logits are laid out with one channel per
// anchor yaw, box outputs with seven consecutive channels per yaw.
DetectionLoss detection_loss(const FeatureMap& class_logits, const FeatureMap& box_outputs,
                             const DetectionTargets& targets, const AnchorGrid& anchors,
                             const FocalConfig& focal = {});

}  // namespace agonet
