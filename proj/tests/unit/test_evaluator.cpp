#include <doctest.h>

#include <cmath>

#include "agonet/error.hpp"
#include "agonet/evaluator.hpp"
#include "oracles.hpp"

using namespace agonet;

namespace {

LabeledObject gt_at(double x, double y, Difficulty d = Difficulty::Easy) {
  LabeledObject o;
  o.box = Box3D::make(x, y, -1.0, 1.6, 3.9, 1.5, 0.0);
  o.difficulty = d;
  return o;
}

Detection det_on(const LabeledObject& g, double score) { return {g.box, score, Category::Car}; }

Detection det_at(double x, double y, double score) {
  return {Box3D::make(x, y, -1.0, 1.6, 3.9, 1.5, 0.0), score, Category::Car};
}

EvalConfig config(RecallMode mode) {
  EvalConfig c;
  c.recall = mode;
  return c;
}

// Three gts; ranked dets TP, FP, TP, FP, TP.
EvalScene pr_fixture() {
  EvalScene s;
  s.id = "000000";
  s.gts = {gt_at(10, 0), gt_at(20, 10), gt_at(30, -10)};
  s.dets = {det_on(s.gts[0], 0.9), det_at(40, 30, 0.8), det_on(s.gts[1], 0.7), det_at(50, -30, 0.6),
            det_on(s.gts[2], 0.5)};
  return s;
}

}  // namespace

TEST_SUITE("evaluator") {
  TEST_CASE("matching examples") {
    const auto g = gt_at(10, 0);
    const EvalConfig c;
    const MatchResult one = match_detections({det_on(g, 0.9)}, {g}, c);
    CHECK(one.dets == std::vector<MatchOutcome>{MatchOutcome::TP});
    CHECK(one.gt_matched[0]);
    const MatchResult two = match_detections({det_on(g, 0.9), det_on(g, 0.8)}, {g}, c);
    CHECK(two.dets == std::vector<MatchOutcome>{MatchOutcome::TP, MatchOutcome::FP});
    Detection ped = det_on(g, 0.95);
    ped.category = Category::Pedestrian;
    CHECK(match_detections({ped}, {g}, c).dets[0] == MatchOutcome::Ignored);
  }

  TEST_CASE("difficulty filtering ignores harder gts") {
    const auto hard = gt_at(10, 0, Difficulty::Hard);
    const EvalConfig c;
    const MatchResult r = match_detections({det_on(hard, 0.9)}, {hard}, c, {Difficulty::Easy});
    CHECK(r.gt_count == 0);
    CHECK(r.dets[0] == MatchOutcome::Ignored);
    CHECK(match_detections({det_on(hard, 0.9)}, {hard}, c, {Difficulty::Hard}).dets[0] == MatchOutcome::TP);
    const auto unknown = gt_at(10, 0, Difficulty::Unknown);
    CHECK(match_detections({}, {unknown}, c, {Difficulty::Hard}).gt_count == 0);
    CHECK(match_detections({}, {unknown}, c).gt_count == 1);
  }

  TEST_CASE("matching equals the greedy replay oracle") {
    oracle::Rng rng(50);
    for (int t = 0; t < 200; ++t) {
      std::vector<LabeledObject> gts;
      std::vector<Box3D> boxes;
      for (int g = 0; g < 4; ++g) {
        LabeledObject o;
        o.box = Box3D::make(rng.uniform(0, 6), rng.uniform(-3, 3), rng.uniform(-1.2, -0.8), rng.uniform(1.4, 1.8),
                            rng.uniform(3.5, 4.3), 1.5, rng.uniform(-kPi, kPi));
        gts.push_back(o);
        boxes.push_back(o.box);
      }
      std::vector<Detection> dets;
      for (int d = 0; d < 10; ++d) {
        const Box3D& near = boxes[rng.integer(0, 3)];
        dets.push_back({Box3D::make(near.cx + rng.uniform(-1, 1), near.cy + rng.uniform(-1, 1), near.cz,
                                    near.w, near.l, near.h, near.yaw + rng.uniform(-0.3, 0.3)),
                        rng.uniform(0, 1), Category::Car});
      }
      std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
      for (auto metric : {MatchMetric::BEV, MatchMetric::ThreeD}) {
        EvalConfig c;
        c.metric = metric;
        c.iou_threshold = 0.5;
        const MatchResult r = match_detections(dets, gts, c);
        const auto want = oracle::greedy_assignment(dets, boxes, 0.5, metric);
        for (std::size_t d = 0; d < dets.size(); ++d) {
          CHECK((r.dets[d] == MatchOutcome::TP) == (want[d] >= 0));
        }
        for (std::size_t g = 0; g < 4; ++g) {
          CHECK(r.gt_matched[g] == (std::find(want.begin(), want.end(), static_cast<int>(g)) != want.end()));
        }
      }
    }
  }

  TEST_CASE("recall grids") {
    CHECK(recall_positions(RecallMode::R11).size() == 11);
    CHECK(recall_positions(RecallMode::R11).front() == 0.0);
    CHECK(recall_positions(RecallMode::R40).size() == 40);
    CHECK(recall_positions(RecallMode::R40).front() == 1.0 / 40.0);
  }

  TEST_CASE("average precision examples") {
    std::vector<ScoredMatch> one{{0.9, "a", 0, true}};
    CHECK(*average_precision(one, 1, RecallMode::R11) == 100.0);
    CHECK(*average_precision(one, 1, RecallMode::R40) == 100.0);
    std::vector<ScoredMatch> miss{{0.9, "a", 0, false}};
    CHECK(*average_precision(miss, 1, RecallMode::R11) == 0.0);
    CHECK(*average_precision(miss, 1, RecallMode::R40) == 0.0);
    CHECK_FALSE(average_precision(one, 0, RecallMode::R40).has_value());
    CHECK(*average_precision({}, 3, RecallMode::R40) == 0.0);
  }

  TEST_CASE("hand PR fixture") {
    const std::vector<EvalScene> scenes{pr_fixture()};
    const ApResult r11 = evaluate_ap(scenes, config(RecallMode::R11));
    const ApResult r40 = evaluate_ap(scenes, config(RecallMode::R40));
    REQUIRE(r11.ap);
    REQUIRE(r40.ap);
    CHECK(std::abs(*r11.ap - 100.0 * 42.0 / 55.0) < 1e-9);
    CHECK(std::abs(*r40.ap - 100.0 * 451.0 / 600.0) < 1e-9);
    const std::vector<bool> ranked{true, false, true, false, true};
    CHECK(std::abs(*r11.ap - oracle::ranked_ap(ranked, 3, RecallMode::R11)) < 1e-9);
    CHECK(std::abs(*r40.ap - oracle::ranked_ap(ranked, 3, RecallMode::R40)) < 1e-9);
    CHECK(r11.gt_count == 3);
    CHECK(r11.det_count == 5);
  }

  TEST_CASE("AP properties") {
    EvalScene s = pr_fixture();
    const double base = *evaluate_ap({s}, config(RecallMode::R40)).ap;
    EvalScene squashed = s;
    for (auto& d : squashed.dets) d.score = std::pow(d.score, 3.0) * 0.5;
    CHECK(*evaluate_ap({squashed}, config(RecallMode::R40)).ap == base);
    EvalScene extra = s;
    extra.dets.push_back(det_at(60, 0, 0.01));
    CHECK(*evaluate_ap({extra}, config(RecallMode::R40)).ap <= base);
    EvalScene perfect = s;
    perfect.dets.clear();
    for (const auto& g : s.gts) perfect.dets.push_back(det_on(g, 0.5));
    CHECK(*evaluate_ap({perfect}, config(RecallMode::R11)).ap == 100.0);
    CHECK(*evaluate_ap({perfect}, config(RecallMode::R40)).ap == 100.0);
    EvalScene none = s;
    none.dets.clear();
    CHECK(*evaluate_ap({none}, config(RecallMode::R11)).ap == 0.0);
    CHECK(*evaluate_ap({none}, config(RecallMode::R40)).ap == 0.0);
    CHECK(evaluate_ap({pr_fixture(), pr_fixture()}, config(RecallMode::R40), {}, 4).ap ==
          evaluate_ap({pr_fixture(), pr_fixture()}, config(RecallMode::R40), {}, 1).ap);
  }

  TEST_CASE("range buckets") {
    const RangeBucket b{30, 50};
    CHECK(b.contains(30.0));
    CHECK_FALSE(b.contains(50.0));
    CHECK(b.label() == "30-50");
    EvalConfig c;
    c.buckets = {{0, 30}, {30, 50}, {50, 80}};
    EvalScene all10;
    all10.id = "s";
    all10.gts = {gt_at(10, 0)};
    all10.dets = {det_on(all10.gts[0], 0.9)};
    const auto r = range_bucketed_ap({all10}, c);
    REQUIRE(r.size() == 3);
    CHECK(*r[0].result.ap == 100.0);
    CHECK_FALSE(r[1].result.ap);
    CHECK_FALSE(r[2].result.ap);
    EvalScene edge;
    edge.id = "e";
    edge.gts = {gt_at(30, 0)};
    CHECK(range_bucketed_ap({edge}, c)[1].result.gt_count == 1);
    EvalConfig bad = c;
    bad.buckets = {{0, 40}, {30, 50}};
    CHECK_THROWS_AS(bad.validate(), DomainError);
  }

  TEST_CASE("bucketed AP equals AP over manually split inputs") {
    EvalConfig c;
    c.buckets = {{0, 25}, {25, 80}};
    const EvalScene s = pr_fixture();
    const auto r = range_bucketed_ap({s}, c);
    std::size_t total = 0;
    for (const auto& b : r) {
      EvalScene part;
      part.id = s.id;
      for (const auto& g : s.gts) {
        if (b.bucket.contains(std::hypot(g.box.cx, g.box.cy))) part.gts.push_back(g);
      }
      for (const auto& d : s.dets) {
        if (b.bucket.contains(std::hypot(d.box.cx, d.box.cy))) part.dets.push_back(d);
      }
      const ApResult want = evaluate_ap({part}, c);
      CHECK(b.result.ap == want.ap);
      total += b.result.gt_count;
    }
    CHECK(total == s.gts.size());
  }

  TEST_CASE("report layout") {
    EvalConfig c;
    c.buckets = {{0, 25}, {25, 80}};
    c.iou_threshold = 0.5;
    const EvalReport rep = build_report({pr_fixture()}, c);
    CHECK(rep.entries.size() == 2 * 4 * 3);
    const std::string json = rep.to_json();
    CHECK(json.find("\"difficulty\": \"Mod\"") != std::string::npos);
    const std::string table = rep.to_table();
    CHECK(table.find("Easy") != std::string::npos);
    CHECK(table.find("25-80") != std::string::npos);
  }
}
