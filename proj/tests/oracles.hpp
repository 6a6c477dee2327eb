#pragma once

// Brute-force reference implementations and helpers shared by the unit and
// acceptance tests. Nothing here is used by the library itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "agonet/concept_builder.hpp"
#include "agonet/detection_math.hpp"
#include "agonet/evaluator.hpp"
#include "agonet/geometry.hpp"
#include "agonet/mini_detector.hpp"
#include "agonet/voxel_grid.hpp"

namespace oracle {

using namespace agonet;

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  bool coin() { return integer(0, 1) == 1; }
};

inline Box3D random_box(Rng& rng, double center_span, double dim_lo, double dim_hi) {
  return Box3D::make(rng.uniform(-center_span, center_span), rng.uniform(-center_span, center_span),
                     rng.uniform(-0.5, 0.5), rng.uniform(dim_lo, dim_hi), rng.uniform(dim_lo, dim_hi),
                     rng.uniform(dim_lo, dim_hi), rng.uniform(-kPi, kPi));
}

inline FeatureMap random_map(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  FeatureMap m(c, h, w);
  for (auto& v : m.values) v = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Finite differences

inline double central_difference(const std::function<double(double)>& f, double x,
                                 double step = 1e-5) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

// Relative error with the denominator floored at 1e-3, so gradients that are
// essentially zero are compared on an absolute 1e-7 scale.
inline double gradient_error(double numeric, double analytic) {
  const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
  return std::abs(numeric - analytic) / denom;
}

// ---------------------------------------------------------------------------
// Geometry

inline bool inside_footprint(const Box3D& b, double x, double y) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * b.l && std::abs(v) <= 0.5 * b.w;
}

inline std::array<double, 4> footprint_aabb(const Box3D& b) {
  const double c = std::abs(std::cos(b.yaw));
  const double s = std::abs(std::sin(b.yaw));
  const double ex = 0.5 * (b.l * c + b.w * s);
  const double ey = 0.5 * (b.l * s + b.w * c);
  return {b.cx - ex, b.cx + ex, b.cy - ey, b.cy + ey};
}

// IoU from counting `cell`-sized cells whose centers lie in both footprints.
inline double raster_bev_iou(const Box3D& a, const Box3D& b, double cell = 1e-3) {
  const auto ba = footprint_aabb(a);
  const auto bb = footprint_aabb(b);
  const double x0 = std::max(ba[0], bb[0]);
  const double x1 = std::min(ba[1], bb[1]);
  const double y0 = std::max(ba[2], bb[2]);
  const double y1 = std::min(ba[3], bb[3]);
  std::size_t both = 0;
  if (x1 > x0 && y1 > y0) {
    const long nx = static_cast<long>(std::ceil((x1 - x0) / cell));
    const long ny = static_cast<long>(std::ceil((y1 - y0) / cell));
    for (long i = 0; i < nx; ++i) {
      const double x = x0 + (static_cast<double>(i) + 0.5) * cell;
      for (long j = 0; j < ny; ++j) {
        const double y = y0 + (static_cast<double>(j) + 0.5) * cell;
        if (inside_footprint(a, x, y) && inside_footprint(b, x, y)) ++both;
      }
    }
  }
  const double inter = static_cast<double>(both) * cell * cell;
  return inter / (a.w * a.l + b.w * b.l - inter);
}

// Axis-aligned IoU of the yaw-snapped rectangles.
inline double snapped_iou(const Box3D& a, const Box3D& b) {
  auto extent = [](const Box3D& box) {
    const long k = std::lround(box.yaw / (kPi / 2.0));
    const bool swap = (k % 2) != 0;
    const double ex = swap ? box.w : box.l;
    const double ey = swap ? box.l : box.w;
    return std::array<double, 4>{box.cx - 0.5 * ex, box.cx + 0.5 * ex, box.cy - 0.5 * ey,
                                 box.cy + 0.5 * ey};
  };
  const auto ra = extent(a);
  const auto rb = extent(b);
  const double ix = std::max(0.0, std::min(ra[1], rb[1]) - std::max(ra[0], rb[0]));
  const double iy = std::max(0.0, std::min(ra[3], rb[3]) - std::max(ra[2], rb[2]));
  const double inter = ix * iy;
  const double area_a = (ra[1] - ra[0]) * (ra[3] - ra[2]);
  const double area_b = (rb[1] - rb[0]) * (rb[3] - rb[2]);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double all_pairs_distance(const std::vector<Point3>& src, const std::vector<Point3>& dst) {
  double sum = 0.0;
  for (const auto& p : src) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : dst) best = std::min(best, point_distance(p, q));
    sum += best;
  }
  return sum / static_cast<double>(src.size());
}

// ---------------------------------------------------------------------------
// Anchors and NMS

inline std::vector<AnchorLabel> assign_targets(const AnchorGrid& anchors,
                                               const std::vector<Box3D>& gts,
                                               const BevMask& occupied, double pos_thr,
                                               double neg_thr) {
  const std::size_t n = anchors.size();
  std::vector<std::vector<double>> table(n, std::vector<double>(gts.size()));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) table[a][g] = snapped_iou(anchors.anchors[a], gts[g]);
  }
  auto occupied_anchor = [&](std::size_t a) {
    return occupied.cells[a / static_cast<std::size_t>(anchors.per_cell)] != 0;
  };
  std::vector<AnchorLabel> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    if (!occupied_anchor(a)) continue;
    double best = 0.0;
    int arg = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (table[a][g] > best) {
        best = table[a][g];
        arg = static_cast<int>(g);
      }
    }
    if (arg >= 0 && best >= pos_thr) {
      out[a] = {AnchorLabel::Kind::Positive, arg};
    } else if (best < neg_thr) {
      out[a] = {AnchorLabel::Kind::Negative, -1};
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    double best = 0.0;
    std::size_t arg = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (occupied_anchor(a) && table[a][g] > best) {
        best = table[a][g];
        arg = a;
      }
    }
    if (arg < n) out[arg] = {AnchorLabel::Kind::Positive, static_cast<int>(g)};
  }
  return out;
}

// Repeatedly keeps the best remaining box and deletes everything it
// overlaps by more than the threshold.
inline std::vector<std::size_t> greedy_nms(const std::vector<Box3D>& boxes,
                                           const std::vector<double>& scores, double thr) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  while (true) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || scores[i] > scores[best])) best = i;
    }
    if (best == boxes.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && rotated_bev_iou(boxes[i], boxes[best]) > thr) alive[i] = false;
    }
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Voxel grid

using Index3 = std::tuple<int, int, int>;

inline std::set<Index3> occupancy_set(const PointCloud& cloud, const GridConfig& g) {
  std::set<Index3> out;
  const double origin[3] = {g.range.x_min, g.range.y_min, g.range.z_min};
  for (const auto& p : cloud.points) {
    const double c[3] = {p.x, p.y, p.z};
    int idx[3];
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      const double q = std::floor((c[a] - origin[a]) / g.steps[a]);
      if (q < 0.0 || q >= g.dims[a]) ok = false;
      idx[a] = ok ? static_cast<int>(q) : 0;
    }
    if (ok) out.insert({idx[0], idx[1], idx[2]});
  }
  return out;
}

// (channel, row, col) triples of every nonzero BEV cell.
inline std::set<Index3> bev_projection(const std::set<Index3>& voxels, int ds) {
  std::set<Index3> out;
  for (const auto& [x, y, z] : voxels) out.insert({z, x / ds, y / ds});
  return out;
}

inline std::vector<std::uint8_t> foreground_cells(const std::vector<Box3D>& boxes,
                                                  const GridConfig& g) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(g.bev_height()) * g.bev_width(), 0);
  for (int i = 0; i < g.bev_height(); ++i) {
    for (int j = 0; j < g.bev_width(); ++j) {
      const double x = g.range.x_min + (i + 0.5) * g.cell_x();
      const double y = g.range.y_min + (j + 0.5) * g.cell_y();
      for (const auto& b : boxes) {
        if (inside_footprint(b, x, y)) out[static_cast<std::size_t>(i) * g.bev_width() + j] = 1;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conceptual construction

// Model points posed onto the object, then dropped when any original point
// lies within the radius.
inline std::vector<Point3> surviving_model_points(const LabeledObject& object,
                                                  const LabeledObject& model,
                                                  const std::vector<Point3>& originals,
                                                  double radius) {
  const double sx = object.box.l / model.box.l;
  const double sy = object.box.w / model.box.w;
  const double sz = object.box.h / model.box.h;
  std::vector<Point3> out;
  for (const auto& q : model.interior_points.points) {
    const Point3 p = to_world(object.box, {q.x * sx, q.y * sy, q.z * sz, q.intensity});
    bool removed = false;
    for (const auto& o : originals) {
      if (point_distance(p, o) <= radius) {
        removed = true;
        break;
      }
    }
    if (!removed) out.push_back(p);
  }
  return out;
}

struct MatchOracle {
  std::size_t group = 0;
  std::size_t member = 0;
  double distance = 0.0;
};

inline MatchOracle match_model(const LabeledObject& object, const ConceptualModelBank& bank) {
  MatchOracle best;
  std::size_t best_points = 0;
  bool found = false;
  for (std::size_t g = 0; g < bank.groups.size(); ++g) {
    for (std::size_t m = 0; m < bank.groups[g].size(); ++m) {
      const auto& pts = bank.groups[g][m].interior_points.points;
      if (pts.empty()) continue;
      const double d = all_pairs_distance(object.interior_points.points, pts);
      if (!found || d < best.distance || (d == best.distance && pts.size() > best_points)) {
        best = {g, m, d};
        best_points = pts.size();
        found = true;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Network

// Straightforward convolution stack that also returns every pre-activation,
// used to keep finite-difference fixtures away from ReLU kinks.
struct NaivePass {
  std::vector<double> pre;
  FeatureMap o_class;
  FeatureMap o_box;
};

inline FeatureMap naive_conv(const FeatureMap& in, std::span<const double> w,
                             std::span<const double> b, int out_c, int k,
                             std::vector<double>* pre, bool relu) {
  FeatureMap out(out_c, in.height, in.width);
  const int r = k / 2;
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        double s = b[o];
        for (int c = 0; c < in.channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = y + ky - r;
              const int xx = x + kx - r;
              if (yy < 0 || yy >= in.height || xx < 0 || xx >= in.width) continue;
              s += w[((static_cast<std::size_t>(o) * in.channels + c) * k + ky) * k + kx] *
                   in.at(c, yy, xx);
            }
          }
        }
        if (pre) pre->push_back(s);
        out.at(o, y, x) = relu ? std::max(0.0, s) : s;
      }
    }
  }
  return out;
}

inline NaivePass naive_forward(const NetworkParams& p, const FeatureMap& bev) {
  const NetworkShape& s = p.shape;
  NaivePass out;
  const FeatureMap h1 = naive_conv(bev, p.view("conv1.w"), p.view("conv1.b"), s.hidden, 3, &out.pre, true);
  const FeatureMap h2 = naive_conv(h1, p.view("conv2.w"), p.view("conv2.b"), s.hidden, 3, &out.pre, true);
  const FeatureMap fc = naive_conv(h2, p.view("conv3.w"), p.view("conv3.b"), s.features, 3, &out.pre, true);
  FeatureMap fb = fc;
  if (s.separate_branches) {
    fb = naive_conv(h2, p.view("conv3_box.w"), p.view("conv3_box.b"), s.features, 3, &out.pre, true);
  }
  out.o_class = naive_conv(fc, p.view("cls.w"), p.view("cls.b"), s.anchors_per_cell, 1, nullptr, false);
  out.o_box = naive_conv(fb, p.view("box.w"), p.view("box.b"), 7 * s.anchors_per_cell, 1, nullptr, false);
  return out;
}

inline double min_abs_preactivation(const NetworkParams& p, const FeatureMap& bev) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : naive_forward(p, bev).pre) m = std::min(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Evaluator

// Replays the greedy rule with an explicit IoU table: each det in order
// takes the best unmatched gt at or above the threshold, lower index first.
inline std::vector<int> greedy_assignment(const std::vector<Detection>& dets,
                                          const std::vector<Box3D>& gts, double thr,
                                          MatchMetric metric) {
  std::vector<int> out(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double iou = metric == MatchMetric::BEV ? rotated_bev_iou(dets[d].box, gts[g])
                                                    : iou_3d(dets[d].box, gts[g]);
      if (iou >= thr && iou > best) {
        best = iou;
        out[d] = static_cast<int>(g);
      }
    }
    if (out[d] >= 0) used[out[d]] = true;
  }
  return out;
}

// Interpolated AP from a ranked TP/FP list, written out longhand.
inline double ranked_ap(const std::vector<bool>& ranked_tp, std::size_t gt_count, RecallMode mode) {
  std::vector<double> rec;
  std::vector<double> prec;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    if (ranked_tp[i]) ++tp;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  std::vector<double> grid;
  if (mode == RecallMode::R11) {
    for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
  } else {
    for (int k = 1; k <= 40; ++k) grid.push_back(k / 40.0);
  }
  double sum = 0.0;
  for (double r : grid) {
    double best = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (rec[i] >= r) best = std::max(best, prec[i]);
    }
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(grid.size());
}

}  // namespace oracle
