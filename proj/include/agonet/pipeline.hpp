#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agonet/config.hpp"
#include "agonet/evaluator.hpp"
#include "agonet/mini_detector.hpp"
#include "agonet/scene_io.hpp"

namespace agonet {

// Output layout under --out:
//   <dataset>/training/...           synthetic KITTI-layout scenes
//   <work>/concept/bank.agobank      conceptual model bank
//   <work>/concept/<id>.agoscene     conceptual scenes (train and val)
//   <work>/concept/report.json
//   <work>/checkpoints/<phase>.agockpt
//   <work>/logs/<phase>.jsonl
//   <work>/eval/<name>/{report.json,report.txt,detections/<id>.txt}
struct WorkLayout {
  std::filesystem::path dataset;
  std::filesystem::path work;

  WorkLayout(const PipelineConfig& config, const std::filesystem::path& out);

  std::filesystem::path bank() const { return work / "concept" / "bank.agobank"; }
  std::filesystem::path concept_scene(const std::string& id) const {
    return work / "concept" / (id + ".agoscene");
  }
  std::filesystem::path concept_report() const { return work / "concept" / "report.json"; }
  std::filesystem::path checkpoint(const std::string& phase) const {
    return work / "checkpoints" / (phase + ".agockpt");
  }
  std::filesystem::path log(const std::string& phase) const { return work / "logs" / (phase + ".jsonl"); }
  std::filesystem::path eval_dir(const std::string& name) const { return work / "eval" / name; }
};

// Perceptual scenes of a split, cropped to the grid range.
std::vector<Scene> load_split(const PipelineConfig& config, const std::filesystem::path& dataset,
                              const std::string& split);

std::vector<Scene> load_conceptual(const WorkLayout& layout, const std::vector<std::string>& ids,
                                   std::size_t workers);

void cmd_synth(const PipelineConfig& config, const std::filesystem::path& out);

ConstructionReport cmd_build_concept(const PipelineConfig& config, const std::filesystem::path& out);

enum class TrainPhase { Cfg, Ago, Baseline };
TrainPhase phase_from_string(const std::string& name);
const char* to_string(TrainPhase phase);

// Writes the checkpoint and JSON-lines log; returns the trained params.
NetworkParams cmd_train(const PipelineConfig& config, const std::filesystem::path& out,
                        TrainPhase phase);

// Runs inference with `checkpoint` on `split`. When `conceptual` is set the
// conceptual versions of the scenes are used as input.
EvalReport cmd_eval(const PipelineConfig& config, const std::filesystem::path& out,
                    const std::filesystem::path& checkpoint, const std::string& split,
                    const std::string& name, bool conceptual = false);

// Detections of `params` over `scenes` paired with their labels.
std::vector<EvalScene> detect_scenes(const NetworkParams& params, const std::vector<Scene>& scenes,
                                     const PipelineConfig& config);

enum class RenderLayer { Occupancy, Foreground, BoxFeature, Reweight };
RenderLayer layer_from_string(const std::string& name);

struct RenderRequest {
  std::string scene_id;
  std::string split = "val";
  RenderLayer layer = RenderLayer::Occupancy;
  std::optional<std::filesystem::path> baseline;  // yellow boxes
  std::optional<std::filesystem::path> adapted;   // red boxes; feature source
  std::optional<std::filesystem::path> cfg;       // teacher for reweight maps
  bool draw_gt = true;
  int scale = 8;
};

void cmd_render_bev(const PipelineConfig& config, const std::filesystem::path& out,
                    const RenderRequest& request, const std::filesystem::path& png);

}  // namespace agonet
