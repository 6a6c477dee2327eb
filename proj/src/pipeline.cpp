#include "agonet/pipeline.hpp"

#include <fstream>

#include "agonet/concept_builder.hpp"
#include "agonet/container.hpp"
#include "agonet/error.hpp"
#include "agonet/parallel.hpp"
#include "agonet/render.hpp"
#include "agonet/synth.hpp"

namespace fs = std::filesystem;

namespace agonet {

WorkLayout::WorkLayout(const PipelineConfig& config, const fs::path& out)
    : dataset(config.dataset(out)), work(config.work(out)) {}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split_ids(const fs::path& dataset, const std::string& split) {
  const KittiLayout layout{dataset};
  if (!fs::exists(layout.split_file(split))) {
    throw Error("missing split file " + layout.split_file(split).string() + " (run synth first)");
  }
  return layout.read_split(split);
}

}  // namespace

std::vector<Scene> load_split(const PipelineConfig& config, const fs::path& dataset,
                              const std::string& split) {
  const auto ids = split_ids(dataset, split);
  const KittiLayout layout{dataset};
  std::vector<Scene> scenes(ids.size());
  parallel_for(ids.size(), config.workers, [&](std::size_t i) {
    scenes[i] = crop_scene(layout.load_scene(ids[i]), config.grid.range);
  });
  return scenes;
}

std::vector<Scene> load_conceptual(const WorkLayout& layout, const std::vector<std::string>& ids,
                                   std::size_t workers) {
  std::vector<Scene> scenes(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    const fs::path p = layout.concept_scene(ids[i]);
    if (!fs::exists(p)) throw Error("missing conceptual scene " + p.string() + " (run build-concept first)");
    scenes[i] = load_scene(p);
  });
  return scenes;
}

void cmd_synth(const PipelineConfig& config, const fs::path& out) {
  write_synthetic_dataset(config.synth, config.dataset(out), config.workers);
}

ConstructionReport cmd_build_concept(const PipelineConfig& config, const fs::path& out) {
  const WorkLayout layout(config, out);
  const auto train = load_split(config, layout.dataset, "train");
  const auto val = load_split(config, layout.dataset, "val");
  std::vector<LabeledObject> objects;
  for (const auto& s : train) objects.insert(objects.end(), s.objects.begin(), s.objects.end());
  const ConceptualModelBank bank = build_bank(objects, config.construction);
  save_bank(bank, layout.bank());
  ConstructionReport report;
  for (const auto* split : {&train, &val}) {
    const auto concept_scenes =
        build_conceptual_scenes(*split, bank, config.construction, &report, config.workers);
    parallel_for(concept_scenes.size(), config.workers, [&](std::size_t i) {
      save_scene(concept_scenes[i], layout.concept_scene(concept_scenes[i].id));
    });
  }
  write_text(layout.concept_report(), construction_report_json(bank, report, config.construction));
  return report;
}

TrainPhase phase_from_string(const std::string& name) {
  if (name == "cfg") return TrainPhase::Cfg;
  if (name == "ago") return TrainPhase::Ago;
  if (name == "baseline") return TrainPhase::Baseline;
  throw Error("unknown phase '" + name + "' (expected cfg, ago or baseline)");
}

const char* to_string(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::Cfg: return "cfg";
    case TrainPhase::Ago: return "ago";
    case TrainPhase::Baseline: return "baseline";
  }
  return "?";
}

NetworkParams cmd_train(const PipelineConfig& config, const fs::path& out, TrainPhase phase) {
  const WorkLayout layout(config, out);
  const DetectorSetup setup = config.setup();
  const std::string name = to_string(phase);
  std::optional<NetworkParams> teacher;
  if (phase == TrainPhase::Ago) {
    const fs::path cfg_path = layout.checkpoint("cfg");
    if (!fs::exists(cfg_path)) {
      throw Error("phase ago needs a trained CFG checkpoint at " + cfg_path.string() +
                  " (run train --phase cfg first)");
    }
    teacher = load_checkpoint(cfg_path);
  }
  TrainResult result;
  if (phase == TrainPhase::Baseline) {
    result = train_baseline(load_split(config, layout.dataset, "train"), setup, config.train);
  } else {
    const auto ids = split_ids(layout.dataset, "train");
    const auto conceptual = load_conceptual(layout, ids, config.workers);
    if (phase == TrainPhase::Cfg) {
      result = train_cfg(conceptual, setup, config.train);
    } else {
      result = train_ago(load_split(config, layout.dataset, "train"), conceptual, *teacher, setup,
                         config.train);
    }
  }
  save_checkpoint(result.params, layout.checkpoint(name));
  std::string log;
  for (const auto& rec : result.history) log += step_record_json(name, rec) + "\n";
  write_text(layout.log(name), log);
  return result.params;
}

std::vector<EvalScene> detect_scenes(const NetworkParams& params, const std::vector<Scene>& scenes,
                                     const PipelineConfig& config) {
  const DetectorSetup setup = config.setup();
  if (params.shape != setup.shape) throw ShapeError("checkpoint shape does not match the configured grid");
  std::vector<EvalScene> out(scenes.size());
  parallel_for(scenes.size(), config.workers, [&](std::size_t i) {
    out[i].id = scenes[i].id;
    out[i].gts = scenes[i].objects;
    for (auto& g : out[i].gts) g.interior_points = {};
    out[i].dets = infer(params, scenes[i], setup, config.infer);
  });
  return out;
}

EvalReport cmd_eval(const PipelineConfig& config, const fs::path& out, const fs::path& checkpoint,
                    const std::string& split, const std::string& name, bool conceptual) {
  const WorkLayout layout(config, out);
  const NetworkParams params = load_checkpoint(checkpoint);
  const std::vector<Scene> scenes =
      conceptual ? load_conceptual(layout, split_ids(layout.dataset, split), config.workers)
                 : load_split(config, layout.dataset, split);
  const auto evals = detect_scenes(params, scenes, config);
  const fs::path dir = layout.eval_dir(name);
  const Calibration calib = Calibration::canonical();
  for (const auto& e : evals) {
    write_text(dir / "detections" / (e.id + ".txt"), serialize_kitti_detections(e.dets, calib));
  }
  const EvalReport report = build_report(evals, config.eval, config.workers);
  write_text(dir / "report.json", report.to_json());
  write_text(dir / "report.txt", report.to_table());
  return report;
}

RenderLayer layer_from_string(const std::string& name) {
  if (name == "occupancy") return RenderLayer::Occupancy;
  if (name == "foreground") return RenderLayer::Foreground;
  if (name == "fbox") return RenderLayer::BoxFeature;
  if (name == "reweight") return RenderLayer::Reweight;
  throw Error("unknown layer '" + name + "' (expected occupancy, foreground, fbox or reweight)");
}

void cmd_render_bev(const PipelineConfig& config, const fs::path& out, const RenderRequest& req,
                    const fs::path& png) {
  const WorkLayout layout(config, out);
  const KittiLayout kitti{layout.dataset};
  const auto ids = split_ids(layout.dataset, req.split);
  if (std::find(ids.begin(), ids.end(), req.scene_id) == ids.end()) {
    throw Error("scene " + req.scene_id + " is not in split " + req.split);
  }
  const Scene scene = crop_scene(kitti.load_scene(req.scene_id), config.grid.range);
  const DetectorSetup setup = config.setup();
  std::vector<Box3D> gts;
  for (const auto& o : scene.objects) gts.push_back(o.box);
  const FeatureMap bev = to_bev_occupancy(voxelize(scene.cloud, config.grid));

  Image image;
  switch (req.layer) {
    case RenderLayer::Occupancy:
      image = render_heatmap(bev, req.scale);
      break;
    case RenderLayer::Foreground:
      image = render_mask(foreground_mask(gts, config.grid), req.scale);
      break;
    case RenderLayer::BoxFeature: {
      const auto& src = req.adapted ? req.adapted : (req.baseline ? req.baseline : req.cfg);
      if (!src) throw Error("layer fbox needs --adapted, --baseline or --cfg");
      image = render_heatmap(forward(load_checkpoint(*src), bev).f_box, req.scale);
      break;
    }
    case RenderLayer::Reweight: {
      if (!req.adapted || !req.cfg) throw Error("layer reweight needs --adapted and --cfg");
      const NetworkParams pfe = load_checkpoint(*req.adapted);
      const NetworkParams cfg = load_checkpoint(*req.cfg);
      const Scene concept_scene = load_scene(layout.concept_scene(req.scene_id));
      const FeatureMap cbev = to_bev_occupancy(voxelize(concept_scene.cloud, config.grid));
      const FeatureMap m = sc_reweight(forward(pfe, bev).f_class, forward(cfg, cbev).f_class,
                                       foreground_mask(gts, config.grid),
                                       cr_params_for(config.train, pfe.shape.features));
      image = render_heatmap(m, req.scale);
      break;
    }
  }
  if (req.draw_gt) {
    for (const auto& b : gts) draw_box(image, b, config.grid, kGtColor, req.scale);
  }
  if (req.baseline) {
    for (const auto& d : infer(load_checkpoint(*req.baseline), scene, setup, config.infer)) {
      draw_box(image, d.box, config.grid, kBaselineColor, req.scale);
    }
  }
  if (req.adapted) {
    for (const auto& d : infer(load_checkpoint(*req.adapted), scene, setup, config.infer)) {
      draw_box(image, d.box, config.grid, kAdaptedColor, req.scale);
    }
  }
  write_png(image, png);
}

}  // namespace agonet
