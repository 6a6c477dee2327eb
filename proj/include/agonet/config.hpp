#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "agonet/concept_builder.hpp"
#include "agonet/detection_math.hpp"
#include "agonet/evaluator.hpp"
#include "agonet/mini_detector.hpp"
#include "agonet/synth.hpp"
#include "agonet/voxel_grid.hpp"

namespace agonet {

// One `key = value` line of an INI file.
struct IniEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct IniSection {
  std::string name;
  std::size_t line = 0;
  std::vector<IniEntry> entries;
};

// Sections in file order. `#` and `;` start comments; keys before the first
// section header are an error. Errors carry "<source>:<line>:".
std::vector<IniSection> parse_ini(const std::string& text, const std::string& source);

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = all cores
  SyntheticSpec synth;
  GridConfig grid = GridConfig::desk();
  AnchorConfig anchors;
  ConstructionConfig construction;
  TrainConfig train;
  bool separate_branches = false;
  EvalConfig eval;
  InferConfig infer;
  std::string eval_split = "val";
  std::filesystem::path dataset_dir = "dataset";
  std::filesystem::path work_dir = "work";

  // Desk-scale defaults.
  static PipelineConfig defaults();

  DetectorSetup setup() const;
  // Sets the single seed every random stream derives from.
  void set_seed(std::uint64_t s);
  // Relative paths resolve against `out`.
  std::filesystem::path dataset(const std::filesystem::path& out) const;
  std::filesystem::path work(const std::filesystem::path& out) const;
};

// Starts from defaults() and applies every key of the file. Unknown sections
// or keys, bad values and inconsistent combinations raise ConfigError.
PipelineConfig parse_pipeline_config(const std::string& text, const std::string& source = "<config>");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// The defaults written out as a commented config file.
std::string default_config_text();

}  // namespace agonet
