#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "agonet/config.hpp"
#include "agonet/error.hpp"
#include "agonet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace agonet;

int main(int argc, char** argv) {
  CLI::App app{"agonet: conceptual-scene construction, adaptation training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_dir = "agonet_out";
  app.add_option("--config", config_path, "Pipeline config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Overrides [general] seed");
  app.add_option("--workers", workers, "Worker threads (0 = all cores)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate the synthetic perceptual dataset");
  bool print_config = false;
  synth->add_flag("--print-default-config", print_config, "Print the default config and exit");

  auto* concept_cmd = app.add_subcommand("build-concept", "Build the model bank and conceptual scenes");

  auto* train = app.add_subcommand("train", "Train one phase");
  std::string phase;
  train->add_option("--phase", phase, "cfg, ago or baseline")
      ->required()
      ->check(CLI::IsMember({"cfg", "ago", "baseline"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint;
  std::string split;
  std::string eval_name;
  bool eval_conceptual = false;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path, or a phase name (cfg, ago, baseline)")
      ->required();
  eval->add_option("--split", split, "train or val (default from config)");
  eval->add_option("--name", eval_name, "Report directory name (default: checkpoint stem)");
  eval->add_flag("--conceptual", eval_conceptual, "Evaluate on conceptual scenes");

  auto* render = app.add_subcommand("render-bev", "Render a BEV map to PNG");
  RenderRequest req;
  std::string layer = "occupancy";
  std::string png;
  std::string baseline, adapted, cfg_ckpt;
  render->add_option("--scene", req.scene_id, "Scene id")->required();
  render->add_option("--split", req.split, "Split holding the scene")->capture_default_str();
  render->add_option("--layer", layer, "occupancy, foreground, fbox or reweight")
      ->check(CLI::IsMember({"occupancy", "foreground", "fbox", "reweight"}))
      ->capture_default_str();
  render->add_option("--baseline", baseline, "Baseline checkpoint (yellow boxes)");
  render->add_option("--adapted", adapted, "Adapted checkpoint (red boxes)");
  render->add_option("--cfg", cfg_ckpt, "CFG checkpoint (reweight layer)");
  render->add_option("--scale", req.scale, "Pixels per BEV cell")->capture_default_str();
  render->add_flag("!--no-gt", req.draw_gt, "Do not draw ground-truth boxes");
  render->add_option("--png", png, "Output PNG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed() && print_config) {
      std::cout << default_config_text();
      return 0;
    }
    PipelineConfig config =
        config_path.empty() ? PipelineConfig::defaults() : load_pipeline_config(config_path);
    if (seed) config.set_seed(*seed);
    if (workers) config.workers = *workers;
    const fs::path out = out_dir;
    const WorkLayout layout(config, out);

    if (synth->parsed()) {
      cmd_synth(config, out);
      std::cout << "wrote " << config.synth.train_scenes << " train / " << config.synth.val_scenes
                << " val scenes to " << layout.dataset.string() << "\n";
    } else if (concept_cmd->parsed()) {
      const ConstructionReport r = cmd_build_concept(config, out);
      std::cout << "completed " << r.completed << " of " << r.objects << " objects (" << r.skipped
                << " skipped); report at " << layout.concept_report().string() << "\n";
    } else if (train->parsed()) {
      const TrainPhase p = phase_from_string(phase);
      cmd_train(config, out, p);
      std::cout << "checkpoint " << layout.checkpoint(phase).string() << "\n";
    } else if (eval->parsed()) {
      fs::path ckpt = checkpoint;
      if (checkpoint == "cfg" || checkpoint == "ago" || checkpoint == "baseline") {
        ckpt = layout.checkpoint(checkpoint);
      }
      if (!fs::exists(ckpt)) throw Error("checkpoint not found: " + ckpt.string());
      const std::string name = eval_name.empty() ? ckpt.stem().string() : eval_name;
      const EvalReport report =
          cmd_eval(config, out, ckpt, split.empty() ? config.eval_split : split, name, eval_conceptual);
      std::cout << report.to_table();
    } else if (render->parsed()) {
      req.layer = layer_from_string(layer);
      if (!baseline.empty()) req.baseline = baseline;
      if (!adapted.empty()) req.adapted = adapted;
      if (!cfg_ckpt.empty()) req.cfg = cfg_ckpt;
      cmd_render_bev(config, out, req, png);
      std::cout << "wrote " << png << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
