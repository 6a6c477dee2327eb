#include "agonet/detection_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "agonet/error.hpp"

namespace agonet {

AnchorGrid make_anchor_grid(const GridConfig& grid, const AnchorConfig& config) {
  AnchorGrid out;
  out.height = grid.bev_height();
  out.width = grid.bev_width();
  out.per_cell = static_cast<int>(config.yaws.size());
  out.config = config;
  out.anchors.reserve(static_cast<std::size_t>(out.height) * out.width * out.per_cell);
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      const Vec2 c = grid.cell_center(i, j);
      for (double yaw : config.yaws) {
        out.anchors.push_back(Box3D::make(c.x, c.y, config.z, config.w, config.l, config.h, yaw));
      }
    }
  }
  return out;
}

std::vector<AnchorLabel> assign_targets(const AnchorGrid& anchors,
                                        const std::vector<Box3D>& gts,
                                        const BevMask& occupied, double pos_thr,
                                        double neg_thr) {
  if (!(0.0 <= neg_thr && neg_thr <= pos_thr && pos_thr <= 1.0)) {
    throw DomainError("assign_targets: thresholds must satisfy 0 <= neg <= pos <= 1");
  }
  if (occupied.height != anchors.height || occupied.width != anchors.width) {
    throw ShapeError("assign_targets: occupancy mask does not match anchor grid");
  }
  const std::size_t n = anchors.size();
  std::vector<AnchorLabel> labels(n);
  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(gts.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t cell = a / static_cast<std::size_t>(anchors.per_cell);
    const bool occ = occupied.cells[cell] != 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = bev_rect_iou(anchors.anchors[a], gts[g]);
      if (iou > best_iou[a]) {
        best_iou[a] = iou;
        best_gt[a] = static_cast<int>(g);
      }
      if (occ && iou > gt_best_iou[g]) {
        gt_best_iou[g] = iou;
        gt_best_anchor[g] = a;
      }
    }
    if (!occ) {
      labels[a] = {AnchorLabel::Kind::Ignore, -1};
    } else if (best_gt[a] >= 0 && best_iou[a] >= pos_thr) {
      labels[a] = {AnchorLabel::Kind::Positive, best_gt[a]};
    } else if (best_iou[a] < neg_thr) {
      labels[a] = {AnchorLabel::Kind::Negative, -1};
    } else {
      labels[a] = {AnchorLabel::Kind::Ignore, -1};
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best_anchor[g] < n) {
      labels[gt_best_anchor[g]] = {AnchorLabel::Kind::Positive, static_cast<int>(g)};
    }
  }
  return labels;
}

BoxDeltas encode_box(const Box3D& a, const Box3D& g) {
  if (!(a.w > 0.0 && a.l > 0.0 && a.h > 0.0)) {
    throw DomainError("encode_box: anchor dimensions must be positive");
  }
  if (!(g.w > 0.0 && g.l > 0.0 && g.h > 0.0)) {
    throw DomainError("encode_box: ground-truth dimensions must be positive");
  }
  const double da = std::sqrt(a.l * a.l + a.w * a.w);
  return {(a.cx - g.cx) / da,  (a.cy - g.cy) / a.h,  (a.cz - g.cz) / da,
          std::log(g.w / a.w), std::log(g.l / a.l), std::log(g.h / a.h),
          g.yaw - a.yaw};
}

Box3D decode_box(const Box3D& a, const BoxDeltas& d) {
  const double da = std::sqrt(a.l * a.l + a.w * a.w);
  Box3D out;
  out.cx = a.cx - d[0] * da;
  out.cy = a.cy - d[1] * a.h;
  out.cz = a.cz - d[2] * da;
  out.w = a.w * std::exp(d[3]);
  out.l = a.l * std::exp(d[4]);
  out.h = a.h * std::exp(d[5]);
  out.yaw = normalize_yaw(a.yaw + d[6]);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace

LossGrad focal_loss(double logit, bool is_positive, double alpha, double gamma,
                    FocalSign sign) {
  const double z = is_positive ? logit : -logit;
  const double p_t = sigmoid(z);
  const double one_minus = sigmoid(-z);
  const double log_p_t = log_sigmoid(z);
  const double alpha_t = is_positive ? alpha : 1.0 - alpha;
  const double mod = std::pow(one_minus, gamma);
  double loss = -alpha_t * mod * log_p_t;
  // d loss / d p_t * d p_t / d z, with d p_t / d z = p_t (1 - p_t).
  double grad = alpha_t * (gamma * mod * p_t * log_p_t - mod * one_minus);
  if (!is_positive) grad = -grad;
  if (sign == FocalSign::Literal) {
    loss = -loss;
    grad = -grad;
  }
  return {loss, grad};
}

LossGrad smooth_l1(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) return {0.5 * x * x, x};
  return {ax - 0.5, x > 0.0 ? 1.0 : -1.0};
}

// ---------------------------------------------------------------------------

CrParams CrParams::init(int channels, std::uint64_t seed) {
  if (channels < 2) throw DomainError("CrParams: need at least two channels");
  CrParams cr;
  cr.channels = channels;
  cr.hidden = channels / 2;
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::uniform_real_distribution<double> dist(-bound, bound);
  cr.w1.resize(static_cast<std::size_t>(cr.hidden) * channels);
  cr.w2.resize(static_cast<std::size_t>(channels) * cr.hidden);
  for (auto& v : cr.w1) v = dist(rng);
  for (auto& v : cr.w2) v = dist(rng);
  cr.b1.assign(cr.hidden, 0.0);
  cr.b2.assign(channels, 0.0);
  return cr;
}

std::vector<double> channel_weights(const CrParams& cr, const FeatureMap& diff) {
  if (diff.channels != cr.channels) throw ShapeError("channel_weights: channel mismatch");
  const int J = cr.channels;
  std::vector<double> pooled(J, 0.0);
  for (int c = 0; c < J; ++c) {
    double s = 0.0;
    for (double v : diff.channel(c)) s += v;
    pooled[c] = diff.plane() ? s / static_cast<double>(diff.plane()) : 0.0;
  }
  std::vector<double> hidden(cr.hidden, 0.0);
  for (int k = 0; k < cr.hidden; ++k) {
    double s = cr.b1[k];
    for (int c = 0; c < J; ++c) s += cr.w1[static_cast<std::size_t>(k) * J + c] * pooled[c];
    hidden[k] = std::max(0.0, s);
  }
  std::vector<double> logits(J, 0.0);
  for (int c = 0; c < J; ++c) {
    double s = cr.b2[c];
    for (int k = 0; k < cr.hidden; ++k) {
      s += cr.w2[static_cast<std::size_t>(c) * cr.hidden + k] * hidden[k];
    }
    logits[c] = s;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : logits) v /= z;
  return logits;
}

FeatureMap sc_reweight(const FeatureMap& fc_p, const FeatureMap& fc_c,
                       const BevMask& m_fg, const CrParams& cr) {
  if (!fc_p.same_shape(fc_c)) throw ShapeError("sc_reweight: feature shapes differ");
  if (m_fg.height != fc_p.height || m_fg.width != fc_p.width) {
    throw ShapeError("sc_reweight: mask shape differs from features");
  }
  const int J = fc_p.channels;
  const std::size_t plane = fc_p.plane();
  std::vector<double> spatial(plane, 0.0);
  double peak = 0.0;
  for (std::size_t px = 0; px < plane; ++px) {
    double mp = 0.0;
    double mc = 0.0;
    for (int c = 0; c < J; ++c) {
      mp += fc_p.values[c * plane + px];
      mc += fc_c.values[c * plane + px];
    }
    const double d = mp / J - mc / J;
    spatial[px] = d * d * static_cast<double>(m_fg.cells[px]);
    peak = std::max(peak, spatial[px]);
  }
  if (peak > 0.0) {
    for (auto& v : spatial) v /= peak;
  }
  FeatureMap diff(J, fc_p.height, fc_p.width);
  for (std::size_t i = 0; i < diff.values.size(); ++i) {
    diff.values[i] = fc_p.values[i] - fc_c.values[i];
  }
  const std::vector<double> weights = channel_weights(cr, diff);
  FeatureMap out(J, fc_p.height, fc_p.width, FeatureRole::Reweight);
  for (int c = 0; c < J; ++c) {
    for (std::size_t px = 0; px < plane; ++px) {
      out.values[c * plane + px] = spatial[px] * (1.0 + weights[c]);
    }
  }
  return out;
}

FeatureMap uniform_foreground_reweight(const BevMask& m_fg, int channels) {
  FeatureMap out(channels, m_fg.height, m_fg.width, FeatureRole::Reweight);
  const std::size_t plane = out.plane();
  for (int c = 0; c < channels; ++c) {
    for (std::size_t px = 0; px < plane; ++px) {
      out.values[c * plane + px] = static_cast<double>(m_fg.cells[px]);
    }
  }
  return out;
}

AssociationResult association_loss(const FeatureMap& fb_p, const FeatureMap& fb_c,
                                   const FeatureMap& m_rw, AgoNormalization norm) {
  if (!fb_p.same_shape(fb_c) || !fb_p.same_shape(m_rw)) {
    throw ShapeError("association_loss: feature shapes differ");
  }
  AssociationResult out;
  out.grad = FeatureMap(fb_p.channels, fb_p.height, fb_p.width, fb_p.role);
  const int J = fb_p.channels;
  const std::size_t plane = fb_p.plane();
  std::vector<std::uint8_t> active(plane, 0);
  for (std::size_t px = 0; px < plane; ++px) {
    for (int c = 0; c < J; ++c) {
      if (m_rw.values[c * plane + px] != 0.0) {
        active[px] = 1;
        break;
      }
    }
    out.active_pixels += active[px];
  }
  if (out.active_pixels == 0) return out;
  const double denom = static_cast<double>(out.active_pixels) *
                       (norm == AgoNormalization::PerElement ? J : 1);
  double sum = 0.0;
  for (int c = 0; c < J; ++c) {
    for (std::size_t px = 0; px < plane; ++px) {
      if (!active[px]) continue;
      const std::size_t i = c * plane + px;
      const double weight = 1.0 + m_rw.values[i];
      const LossGrad s = smooth_l1(fb_p.values[i] - fb_c.values[i]);
      sum += s.loss * weight;
      out.grad.values[i] = s.grad * weight / denom;
    }
  }
  out.loss = sum / denom;
  return out;
}

// ---------------------------------------------------------------------------

double LossTerms::class_mean() const noexcept {
  return class_count ? class_sum / static_cast<double>(class_count) : 0.0;
}

double LossTerms::box_mean() const noexcept {
  return box_count ? box_sum / static_cast<double>(box_count) : 0.0;
}

double cfg_loss(const LossTerms& terms) { return terms.box_mean() + terms.class_mean(); }

double total_loss(const LossTerms& terms, double ago, double sigma) {
  return cfg_loss(terms) + sigma * ago;
}

namespace {

// Maps an angle difference into [-pi/2, pi/2).
double wrap_half_turn(double d) {
  double w = std::fmod(d + 0.5 * kPi, kPi);
  if (w < 0.0) w += kPi;
  return w - 0.5 * kPi;
}

}  // namespace

DetectionTargets build_targets(const AnchorGrid& anchors, const std::vector<Box3D>& gts,
                               const BevMask& occupied, double pos_thr, double neg_thr) {
  DetectionTargets t;
  t.labels = assign_targets(anchors, gts, occupied, pos_thr, neg_thr);
  t.deltas.assign(anchors.size(), BoxDeltas{});
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const AnchorLabel& l = t.labels[a];
    if (l.kind == AnchorLabel::Kind::Positive) {
      const Box3D& anchor = anchors.anchors[a];
      Box3D gt = gts[l.gt];
      gt.yaw = anchor.yaw + wrap_half_turn(gt.yaw - anchor.yaw);
      t.deltas[a] = encode_box(anchor, gt);
      ++t.positives;
    } else if (l.kind == AnchorLabel::Kind::Negative) {
      ++t.negatives;
    }
  }
  return t;
}

DetectionLoss detection_loss(const FeatureMap& class_logits, const FeatureMap& box_outputs,
                             const DetectionTargets& targets, const AnchorGrid& anchors,
                             const FocalConfig& focal) {
  const int A = anchors.per_cell;
  if (class_logits.channels != A || box_outputs.channels != 7 * A ||
      class_logits.height != anchors.height || class_logits.width != anchors.width ||
      !class_logits.same_shape(FeatureMap(A, box_outputs.height, box_outputs.width)) ||
      targets.labels.size() != anchors.size()) {
    throw ShapeError("detection_loss: head outputs do not match the anchor grid");
  }
  DetectionLoss out;
  out.d_class = FeatureMap(A, anchors.height, anchors.width);
  out.d_box = FeatureMap(7 * A, anchors.height, anchors.width);
  for (int i = 0; i < anchors.height; ++i) {
    for (int j = 0; j < anchors.width; ++j) {
      for (int r = 0; r < A; ++r) {
        const std::size_t a = anchors.index(i, j, r);
        const AnchorLabel& l = targets.labels[a];
        if (l.kind == AnchorLabel::Kind::Ignore) continue;
        const bool pos = l.kind == AnchorLabel::Kind::Positive;
        const LossGrad f = focal_loss(class_logits.at(r, i, j), pos, focal.alpha,
                                      focal.gamma, focal.sign);
        out.terms.class_sum += f.loss;
        ++out.terms.class_count;
        out.d_class.at(r, i, j) = f.grad;
        if (!pos) continue;
        double box = 0.0;
        for (int k = 0; k < 7; ++k) {
          const LossGrad s = smooth_l1(box_outputs.at(7 * r + k, i, j) - targets.deltas[a][k]);
          box += s.loss;
          out.d_box.at(7 * r + k, i, j) = s.grad;
        }
        out.terms.box_sum += box;
        ++out.terms.box_count;
      }
    }
  }
  if (out.terms.class_count) {
    const double s = 1.0 / static_cast<double>(out.terms.class_count);
    for (auto& v : out.d_class.values) v *= s;
  }
  if (out.terms.box_count) {
    const double s = 1.0 / static_cast<double>(out.terms.box_count);
    for (auto& v : out.d_box.values) v *= s;
  }
  return out;
}

}  // namespace agonet
