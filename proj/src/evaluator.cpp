#include "agonet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "agonet/error.hpp"
#include "agonet/parallel.hpp"

namespace agonet {

const char* to_string(RecallMode m) { return m == RecallMode::R11 ? "R11" : "R40"; }
const char* to_string(MatchMetric m) { return m == MatchMetric::BEV ? "BEV" : "3D"; }

namespace {

std::string format_meters(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

double center_range(const Box3D& b) { return std::sqrt(b.cx * b.cx + b.cy * b.cy); }

}  // namespace

std::string RangeBucket::label() const { return format_meters(min_m) + "-" + format_meters(max_m); }

double EvalConfig::default_iou(Category c) { return c == Category::Car ? 0.7 : 0.5; }

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw DomainError("eval: iou_threshold must be in (0, 1]");
  }
  std::vector<RangeBucket> sorted = buckets;
  std::sort(sorted.begin(), sorted.end(),
            [](const RangeBucket& a, const RangeBucket& b) { return a.min_m < b.min_m; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!(sorted[i].min_m >= 0.0 && sorted[i].max_m > sorted[i].min_m)) {
      throw DomainError("eval: bucket " + sorted[i].label() + " is empty or negative");
    }
    if (i > 0 && sorted[i].min_m < sorted[i - 1].max_m) {
      throw DomainError("eval: buckets " + sorted[i - 1].label() + " and " + sorted[i].label() +
                        " overlap");
    }
  }
}

double match_iou(const Box3D& a, const Box3D& b, MatchMetric metric) {
  return metric == MatchMetric::BEV ? rotated_bev_iou(a, b) : iou_3d(a, b);
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<LabeledObject>& gts, const EvalConfig& config,
                             const DifficultyFilter& filter) {
  enum class GtRole { Counted, Ignored, Absent };
  std::vector<GtRole> role(gts.size(), GtRole::Absent);
  MatchResult out;
  out.gt_matched.assign(gts.size(), false);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].category != config.category) continue;
    const bool counted = !filter.level || gts[g].difficulty <= *filter.level;
    role[g] = counted ? GtRole::Counted : GtRole::Ignored;
    if (counted) ++out.gt_count;
  }
  out.dets.reserve(dets.size());
  for (const auto& det : dets) {
    if (det.category != config.category) {
      out.dets.push_back(MatchOutcome::Ignored);
      continue;
    }
    int best = -1;
    double best_iou = 0.0;
    int best_ignored = -1;
    double best_ignored_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (role[g] == GtRole::Absent || out.gt_matched[g]) continue;
      const double iou = match_iou(det.box, gts[g].box, config.metric);
      if (iou < config.iou_threshold) continue;
      if (role[g] == GtRole::Counted) {
        if (best < 0 || iou > best_iou) {
          best = static_cast<int>(g);
          best_iou = iou;
        }
      } else if (best_ignored < 0 || iou > best_ignored_iou) {
        best_ignored = static_cast<int>(g);
        best_ignored_iou = iou;
      }
    }
    if (best >= 0) {
      out.gt_matched[best] = true;
      out.dets.push_back(MatchOutcome::TP);
    } else if (best_ignored >= 0) {
      out.gt_matched[best_ignored] = true;
      out.dets.push_back(MatchOutcome::Ignored);
    } else {
      out.dets.push_back(MatchOutcome::FP);
    }
  }
  return out;
}

std::vector<double> recall_positions(RecallMode mode) {
  std::vector<double> r;
  if (mode == RecallMode::R11) {
    for (int k = 0; k <= 10; ++k) r.push_back(k / 10.0);
  } else {
    for (int k = 1; k <= 40; ++k) r.push_back(k / 40.0);
  }
  return r;
}

PrCurve pr_curve(std::vector<ScoredMatch> matches, std::size_t gt_count, RecallMode mode) {
  std::stable_sort(matches.begin(), matches.end(), [](const ScoredMatch& a, const ScoredMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
    return a.det_index < b.det_index;
  });
  PrCurve curve;
  if (gt_count == 0) return curve;
  std::size_t tp = 0;
  std::size_t n = 0;
  for (const auto& m : matches) {
    ++n;
    if (m.true_positive) ++tp;
    curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(n));
  }
  // Suffix maxima give the interpolated precision at each recall level.
  std::vector<double> interp(curve.precision);
  for (std::size_t i = interp.size(); i-- > 1;) interp[i - 1] = std::max(interp[i - 1], interp[i]);
  const std::vector<double> grid = recall_positions(mode);
  double sum = 0.0;
  std::size_t i = 0;
  for (double r : grid) {
    while (i < curve.recall.size() && curve.recall[i] < r) ++i;
    if (i < curve.recall.size()) sum += interp[i];
  }
  curve.ap = 100.0 * sum / static_cast<double>(grid.size());
  return curve;
}

std::optional<double> average_precision(const std::vector<ScoredMatch>& matches,
                                        std::size_t gt_count, RecallMode mode) {
  return pr_curve(matches, gt_count, mode).ap;
}

namespace {

std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

ApResult evaluate_ap(const std::vector<EvalScene>& scenes, const EvalConfig& config,
                     const DifficultyFilter& filter, std::size_t workers) {
  config.validate();
  std::vector<std::vector<ScoredMatch>> per_scene(scenes.size());
  std::vector<std::size_t> gt_counts(scenes.size(), 0);
  parallel_for(scenes.size(), workers, [&](std::size_t s) {
    const EvalScene& scene = scenes[s];
    const std::vector<std::size_t> order = score_order(scene.dets);
    std::vector<Detection> sorted;
    sorted.reserve(order.size());
    for (std::size_t i : order) sorted.push_back(scene.dets[i]);
    const MatchResult m = match_detections(sorted, scene.gts, config, filter);
    gt_counts[s] = m.gt_count;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      if (m.dets[k] == MatchOutcome::Ignored) continue;
      per_scene[s].push_back({sorted[k].score, scene.id, order[k], m.dets[k] == MatchOutcome::TP});
    }
  });
  ApResult result;
  std::vector<ScoredMatch> all;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    result.gt_count += gt_counts[s];
    all.insert(all.end(), per_scene[s].begin(), per_scene[s].end());
  }
  result.det_count = all.size();
  result.ap = average_precision(all, result.gt_count, config.recall);
  return result;
}

std::vector<BucketResult> range_bucketed_ap(const std::vector<EvalScene>& scenes,
                                            const EvalConfig& config,
                                            const DifficultyFilter& filter, std::size_t workers) {
  config.validate();
  std::vector<BucketResult> out;
  for (const auto& bucket : config.buckets) {
    std::vector<EvalScene> split;
    split.reserve(scenes.size());
    for (const auto& scene : scenes) {
      EvalScene s;
      s.id = scene.id;
      for (const auto& g : scene.gts) {
        if (bucket.contains(center_range(g.box))) s.gts.push_back(g);
      }
      for (const auto& d : scene.dets) {
        if (bucket.contains(center_range(d.box))) s.dets.push_back(d);
      }
      split.push_back(std::move(s));
    }
    out.push_back({bucket, evaluate_ap(split, config, filter, workers)});
  }
  return out;
}

EvalReport build_report(const std::vector<EvalScene>& scenes, const EvalConfig& config,
                        std::size_t workers) {
  config.validate();
  EvalReport report;
  const std::vector<std::pair<std::string, DifficultyFilter>> levels = {
      {"Easy", {Difficulty::Easy}},
      {"Mod", {Difficulty::Mod}},
      {"Hard", {Difficulty::Hard}},
      {"All", {std::nullopt}},
  };
  for (MatchMetric metric : {MatchMetric::BEV, MatchMetric::ThreeD}) {
    EvalConfig c = config;
    c.metric = metric;
    for (const auto& [name, filter] : levels) {
      ReportEntry e;
      e.category = to_string(c.category);
      e.difficulty = name;
      e.metric = to_string(metric);
      e.recall = to_string(c.recall);
      e.iou_threshold = c.iou_threshold;
      e.bucket = "all";
      e.result = evaluate_ap(scenes, c, filter, workers);
      report.entries.push_back(e);
      for (const auto& b : range_bucketed_ap(scenes, c, filter, workers)) {
        e.bucket = b.bucket.label();
        e.result = b.result;
        report.entries.push_back(e);
      }
    }
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["category"] = e.category;
    j["difficulty"] = e.difficulty;
    j["metric"] = e.metric;
    j["recall"] = e.recall;
    j["bucket"] = e.bucket;
    j["iou_threshold"] = e.iou_threshold;
    j["ap"] = e.result.ap ? nlohmann::ordered_json(*e.result.ap) : nlohmann::ordered_json(nullptr);
    j["gt_count"] = e.result.gt_count;
    j["det_count"] = e.result.det_count;
    arr.push_back(std::move(j));
  }
  nlohmann::ordered_json root;
  root["entries"] = std::move(arr);
  return root.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  // One row per (metric, bucket), columns Easy / Mod / Hard / All.
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-4s %-5s %-10s %8s %8s %8s %8s\n", "class", "AP",
                "R", "range", "Easy", "Mod", "Hard", "All");
  os << line;
  std::vector<std::string> seen;
  for (const auto& row : entries) {
    const std::string key = row.category + row.metric + row.recall + row.bucket;
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    std::string cells[4];
    const char* names[4] = {"Easy", "Mod", "Hard", "All"};
    for (int k = 0; k < 4; ++k) {
      cells[k] = "-";
      for (const auto& e : entries) {
        if (e.category + e.metric + e.recall + e.bucket == key && e.difficulty == names[k] &&
            e.result.ap) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "%.2f", *e.result.ap);
          cells[k] = buf;
        }
      }
    }
    std::snprintf(line, sizeof(line), "%-8s %-4s %-5s %-10s %8s %8s %8s %8s\n", row.category.c_str(),
                  row.metric.c_str(), row.recall.c_str(), row.bucket.c_str(), cells[0].c_str(),
                  cells[1].c_str(), cells[2].c_str(), cells[3].c_str());
    os << line;
  }
  return os.str();
}

}  // namespace agonet
