#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "agonet/geometry.hpp"

namespace agonet {

enum class RecallMode { R11, R40 };
enum class MatchMetric { BEV, ThreeD };

const char* to_string(RecallMode m);
const char* to_string(MatchMetric m);

// Half-open distance interval [min_m, max_m) measured from the sensor in BEV.
struct RangeBucket {
  double min_m = 0.0;
  double max_m = 0.0;

  bool contains(double r) const noexcept { return r >= min_m && r < max_m; }
  std::string label() const;

  bool operator==(const RangeBucket&) const = default;
};

struct EvalConfig {
  double iou_threshold = 0.7;
  RecallMode recall = RecallMode::R40;
  MatchMetric metric = MatchMetric::ThreeD;
  std::vector<RangeBucket> buckets;
  Category category = Category::Car;

  // 0.7 for cars, 0.5 otherwise.
  static double default_iou(Category c);

  void validate() const;
};

// Which ground truths count. `level` keeps gts at or below that difficulty;
// harder gts of the class are ignored. No level means every gt counts.
struct DifficultyFilter {
  std::optional<Difficulty> level;
};

enum class MatchOutcome { TP, FP, Ignored };

struct MatchResult {
  std::vector<MatchOutcome> dets;
  std::vector<bool> gt_matched;
  std::size_t gt_count = 0;  // gts that count toward recall
};

double match_iou(const Box3D& a, const Box3D& b, MatchMetric metric);

// Dets must be sorted by descending score. Each det takes the highest-IoU
// unmatched counted gt at or above the threshold (ties: lower gt index);
// failing that, a det overlapping an unmatched ignored gt is ignored.
// Dets and gts of other categories are ignored.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<LabeledObject>& gts, const EvalConfig& config,
                             const DifficultyFilter& filter = {});

struct ScoredMatch {
  double score = 0.0;
  std::string scene_id;
  std::size_t det_index = 0;
  bool true_positive = false;
};

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  std::optional<double> ap;  // percent; absent when there are no gts
};

std::vector<double> recall_positions(RecallMode mode);

// Interpolated AP over the recall grid. Ties in score are broken by scene id
// then detection index.
PrCurve pr_curve(std::vector<ScoredMatch> matches, std::size_t gt_count, RecallMode mode);

std::optional<double> average_precision(const std::vector<ScoredMatch>& matches,
                                        std::size_t gt_count, RecallMode mode);

struct EvalScene {
  std::string id;
  std::vector<LabeledObject> gts;
  std::vector<Detection> dets;
};

struct ApResult {
  std::optional<double> ap;
  std::size_t gt_count = 0;
  std::size_t det_count = 0;
};

// AP over scenes; dets are sorted per scene before matching.
ApResult evaluate_ap(const std::vector<EvalScene>& scenes, const EvalConfig& config,
                     const DifficultyFilter& filter = {}, std::size_t workers = 1);

struct BucketResult {
  RangeBucket bucket;
  ApResult result;
};

// gts and dets are kept in a bucket when their own BEV center distance
// falls inside it; each bucket is evaluated independently.
std::vector<BucketResult> range_bucketed_ap(const std::vector<EvalScene>& scenes,
                                            const EvalConfig& config,
                                            const DifficultyFilter& filter = {},
                                            std::size_t workers = 1);

struct ReportEntry {
  std::string category;
  std::string difficulty;  // Easy, Mod, Hard or All (unfiltered)
  std::string metric;      // BEV or 3D
  std::string recall;      // R11 or R40
  std::string bucket;      // "all" or "min-max"
  double iou_threshold = 0.0;
  ApResult result;
};

struct EvalReport {
  std::vector<ReportEntry> entries;

  std::string to_json() const;
  std::string to_table() const;
};

// Both metrics, Easy/Mod/Hard plus the unfiltered variant, for the whole
// range and every configured bucket.
EvalReport build_report(const std::vector<EvalScene>& scenes, const EvalConfig& config,
                        std::size_t workers = 1);

}  // namespace agonet
