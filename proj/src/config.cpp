#include "agonet/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "agonet/container.hpp"
#include "agonet/error.hpp"

namespace agonet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Raised by value parsers; rethrown as ConfigError with the line.
struct BadValue {
  std::string message;
};

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected a number, got '" + v + "'"};
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected an integer, got '" + v + "'"};
  return out;
}

std::size_t to_count(const std::string& v) {
  const long long n = to_int(v);
  if (n < 0) throw BadValue{"expected a non-negative integer, got '" + v + "'"};
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw BadValue{"expected true or false, got '" + v + "'"};
}

std::vector<double> to_list(const std::string& v, std::size_t n) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) out.push_back(to_double(trim(item)));
  if (out.size() != n) {
    throw BadValue{"expected " + std::to_string(n) + " comma-separated numbers, got " +
                   std::to_string(out.size())};
  }
  return out;
}

std::vector<RangeBucket> to_buckets(const std::string& v) {
  std::vector<RangeBucket> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) throw BadValue{"bucket '" + item + "' is not of the form min-max"};
    out.push_back({to_double(trim(item.substr(0, dash))), to_double(trim(item.substr(dash + 1)))});
  }
  return out;
}

template <typename E>
E to_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string("|") + name;
  }
  throw BadValue{"expected one of " + names + ", got '" + v + "'"};
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"general",
       {
           {"seed", [](PipelineConfig& c, const std::string& v) { c.seed = to_count(v); }},
           {"workers", [](PipelineConfig& c, const std::string& v) { c.workers = to_count(v); }},
       }},
      {"paths",
       {
           {"dataset", [](PipelineConfig& c, const std::string& v) { c.dataset_dir = v; }},
           {"work", [](PipelineConfig& c, const std::string& v) { c.work_dir = v; }},
       }},
      {"synth",
       {
           {"train_scenes", [](PipelineConfig& c, const std::string& v) { c.synth.train_scenes = to_count(v); }},
           {"val_scenes", [](PipelineConfig& c, const std::string& v) { c.synth.val_scenes = to_count(v); }},
           {"objects_min", [](PipelineConfig& c, const std::string& v) { c.synth.objects_min = static_cast<int>(to_count(v)); }},
           {"objects_max", [](PipelineConfig& c, const std::string& v) { c.synth.objects_max = static_cast<int>(to_count(v)); }},
           {"density", [](PipelineConfig& c, const std::string& v) { c.synth.density = to_double(v); }},
           {"ground_density", [](PipelineConfig& c, const std::string& v) { c.synth.ground_density = to_double(v); }},
           {"clutter_max", [](PipelineConfig& c, const std::string& v) { c.synth.clutter_max = static_cast<int>(to_count(v)); }},
           {"noise", [](PipelineConfig& c, const std::string& v) {
              const auto n = to_list(v, 3);
              c.synth.noise = {n[0], n[1], n[2]};
            }},
           {"ground_z", [](PipelineConfig& c, const std::string& v) { c.synth.ground_z = to_double(v); }},
       }},
      {"grid",
       {
           {"range", [](PipelineConfig& c, const std::string& v) {
              const auto r = to_list(v, 6);
              c.grid.range = {r[0], r[1], r[2], r[3], r[4], r[5]};
            }},
           {"steps", [](PipelineConfig& c, const std::string& v) {
              const auto s = to_list(v, 3);
              c.grid.steps = {s[0], s[1], s[2]};
            }},
           {"bev_downsample", [](PipelineConfig& c, const std::string& v) { c.grid.bev_downsample = static_cast<int>(to_int(v)); }},
       }},
      {"anchors",
       {
           {"w", [](PipelineConfig& c, const std::string& v) { c.anchors.w = to_double(v); }},
           {"l", [](PipelineConfig& c, const std::string& v) { c.anchors.l = to_double(v); }},
           {"h", [](PipelineConfig& c, const std::string& v) { c.anchors.h = to_double(v); }},
           {"z", [](PipelineConfig& c, const std::string& v) { c.anchors.z = to_double(v); }},
       }},
      {"construction",
       {
           {"groups", [](PipelineConfig& c, const std::string& v) { c.construction.groups = static_cast<int>(to_int(v)); }},
           {"top_percent", [](PipelineConfig& c, const std::string& v) { c.construction.top_percent = to_double(v); }},
           {"removal_radius", [](PipelineConfig& c, const std::string& v) { c.construction.removal_radius = to_double(v); }},
           {"strategy", [](PipelineConfig& c, const std::string& v) {
              c.construction.strategy = to_enum<ConstructionStrategy>(
                  v, {{"add_with_removal", ConstructionStrategy::AddWithRemoval},
                      {"replace", ConstructionStrategy::Replace}});
            }},
           {"min_model_points", [](PipelineConfig& c, const std::string& v) { c.construction.min_model_points = to_count(v); }},
           {"match_within_group", [](PipelineConfig& c, const std::string& v) { c.construction.match_within_group = to_bool(v); }},
           {"distance", [](PipelineConfig& c, const std::string& v) {
              c.construction.distance = to_enum<DistanceMode>(
                  v, {{"directed", DistanceMode::Directed}, {"symmetric", DistanceMode::Symmetric}});
            }},
       }},
      {"train",
       {
           {"epochs", [](PipelineConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(to_int(v)); }},
           {"batch_size", [](PipelineConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int(v)); }},
           {"learning_rate", [](PipelineConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
           {"momentum", [](PipelineConfig& c, const std::string& v) { c.train.momentum = to_double(v); }},
           {"weight_decay", [](PipelineConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
           {"sigma", [](PipelineConfig& c, const std::string& v) { c.train.sigma = to_double(v); }},
           {"adaptation", [](PipelineConfig& c, const std::string& v) {
              c.train.adaptation = to_enum<AdaptationMode>(
                  v, {{"sc", AdaptationMode::SpatialChannel},
                      {"foreground", AdaptationMode::Foreground},
                      {"none", AdaptationMode::None}});
            }},
           {"feature", [](PipelineConfig& c, const std::string& v) {
              c.train.feature = to_enum<AdaptationFeature>(
                  v, {{"box", AdaptationFeature::Box}, {"class", AdaptationFeature::Class}});
            }},
           {"normalization", [](PipelineConfig& c, const std::string& v) {
              c.train.normalization = to_enum<AgoNormalization>(
                  v, {{"per_element", AgoNormalization::PerElement},
                      {"per_pixel", AgoNormalization::PerPixel}});
            }},
           {"focal_alpha", [](PipelineConfig& c, const std::string& v) { c.train.focal.alpha = to_double(v); }},
           {"focal_gamma", [](PipelineConfig& c, const std::string& v) { c.train.focal.gamma = to_double(v); }},
           {"pos_threshold", [](PipelineConfig& c, const std::string& v) { c.train.pos_threshold = to_double(v); }},
           {"neg_threshold", [](PipelineConfig& c, const std::string& v) { c.train.neg_threshold = to_double(v); }},
           {"init_from_teacher", [](PipelineConfig& c, const std::string& v) { c.train.init_from_teacher = to_bool(v); }},
           {"augment", [](PipelineConfig& c, const std::string& v) { c.train.augment = to_bool(v); }},
           {"separate_branches", [](PipelineConfig& c, const std::string& v) { c.separate_branches = to_bool(v); }},
       }},
      {"eval",
       {
           {"iou_threshold", [](PipelineConfig& c, const std::string& v) { c.eval.iou_threshold = to_double(v); }},
           {"recall", [](PipelineConfig& c, const std::string& v) {
              c.eval.recall = to_enum<RecallMode>(v, {{"R11", RecallMode::R11}, {"R40", RecallMode::R40}});
            }},
           {"metric", [](PipelineConfig& c, const std::string& v) {
              c.eval.metric = to_enum<MatchMetric>(v, {{"bev", MatchMetric::BEV}, {"3d", MatchMetric::ThreeD}});
            }},
           {"buckets", [](PipelineConfig& c, const std::string& v) { c.eval.buckets = to_buckets(v); }},
           {"split", [](PipelineConfig& c, const std::string& v) { c.eval_split = v; }},
           {"score_threshold", [](PipelineConfig& c, const std::string& v) { c.infer.score_threshold = to_double(v); }},
           {"nms_threshold", [](PipelineConfig& c, const std::string& v) { c.infer.nms_threshold = to_double(v); }},
       }},
  };
  return table;
}

}  // namespace

std::vector<IniSection> parse_ini(const std::string& text, const std::string& source) {
  std::vector<IniSection> out;
  std::istringstream is(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(where() + "empty section name");
      for (const auto& s : out) {
        if (s.name == name) {
          throw ConfigError(where() + "duplicate section [" + name + "] (first at line " +
                            std::to_string(s.line) + ")");
        }
      }
      out.push_back({name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    if (out.empty()) throw ConfigError(where() + "key outside of any section");
    IniEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError(where() + "empty key");
    for (const auto& prev : out.back().entries) {
      if (prev.key == e.key) {
        throw ConfigError(where() + "duplicate key '" + e.key + "' (first at line " +
                          std::to_string(prev.line) + ")");
      }
    }
    out.back().entries.push_back(std::move(e));
  }
  return out;
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.grid = GridConfig::desk();
  c.synth.range = c.grid.range;
  c.train.augment_config.range = c.grid.range;
  c.eval.iou_threshold = 0.5;
  c.eval.recall = RecallMode::R40;
  c.eval.metric = MatchMetric::ThreeD;
  c.eval.buckets = {{0.0, 4.0}, {4.0, 8.0}, {8.0, 12.0}};
  c.train.epochs = 40;
  c.train.learning_rate = 0.1;
  c.separate_branches = true;
  return c;
}

DetectorSetup PipelineConfig::setup() const {
  return DetectorSetup::for_grid(grid, anchors, separate_branches);
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  synth.seed = s;
}

std::filesystem::path PipelineConfig::dataset(const std::filesystem::path& out) const {
  return dataset_dir.is_absolute() ? dataset_dir : out / dataset_dir;
}

std::filesystem::path PipelineConfig::work(const std::filesystem::path& out) const {
  return work_dir.is_absolute() ? work_dir : out / work_dir;
}

PipelineConfig parse_pipeline_config(const std::string& text, const std::string& source) {
  PipelineConfig c = PipelineConfig::defaults();
  const auto sections = parse_ini(text, source);
  std::size_t grid_line = 0;
  std::size_t train_line = 0;
  std::size_t eval_line = 0;
  std::size_t construction_line = 0;
  std::size_t synth_line = 0;
  for (const auto& sec : sections) {
    const auto it = schema().find(sec.name);
    if (it == schema().end()) {
      throw ConfigError(source + ":" + std::to_string(sec.line) + ": unknown section [" + sec.name + "]");
    }
    if (sec.name == "grid") grid_line = sec.line;
    if (sec.name == "train") train_line = sec.line;
    if (sec.name == "eval") eval_line = sec.line;
    if (sec.name == "construction") construction_line = sec.line;
    if (sec.name == "synth") synth_line = sec.line;
    for (const auto& e : sec.entries) {
      const auto where = source + ":" + std::to_string(e.line) + ": ";
      const auto setter = it->second.find(e.key);
      if (setter == it->second.end()) {
        throw ConfigError(where + "unknown key '" + e.key + "' in [" + sec.name + "]");
      }
      try {
        setter->second(c, e.value);
      } catch (const BadValue& bad) {
        throw ConfigError(where + sec.name + "." + e.key + ": " + bad.message);
      }
    }
  }
  // Cross-field checks, reported at the section header.
  auto check = [&](std::size_t line, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& err) {
      throw ConfigError(source + ":" + std::to_string(line) + ": " + err.what());
    }
  };
  check(grid_line, [&] {
    if (!c.grid.range.valid()) throw DomainError("grid range must have min < max on every axis");
    c.grid = GridConfig::make(c.grid.range, c.grid.steps, c.grid.bev_downsample);
  });
  c.synth.range = c.grid.range;
  c.train.augment_config.range = c.grid.range;
  check(synth_line, [&] { c.synth.validate(); });
  check(construction_line, [&] { c.construction.validate(); });
  check(train_line, [&] {
    c.train.validate();
    if (!(c.train.neg_threshold >= 0.0 && c.train.neg_threshold <= c.train.pos_threshold &&
          c.train.pos_threshold <= 1.0)) {
      throw DomainError("train thresholds must satisfy 0 <= neg_threshold <= pos_threshold <= 1");
    }
  });
  check(eval_line, [&] {
    c.eval.validate();
    if (c.eval_split != "train" && c.eval_split != "val") throw DomainError("eval split must be train or val");
  });
  c.set_seed(c.seed);
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_pipeline_config(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string default_config_text() {
  const PipelineConfig c = PipelineConfig::defaults();
  std::ostringstream os;
  os << "# agonet pipeline configuration\n"
        "# Lines are `key = value`; '#' or ';' start a comment.\n\n"
        "[general]\n"
        "seed = " << c.seed << "\n"
        "workers = 0          # 0 uses every core\n\n"
        "[paths]\n"
        "dataset = dataset    # relative to --out\n"
        "work = work\n\n"
        "[synth]\n"
        "train_scenes = " << c.synth.train_scenes << "\n"
        "val_scenes = " << c.synth.val_scenes << "\n"
        "objects_min = " << c.synth.objects_min << "\n"
        "objects_max = " << c.synth.objects_max << "\n"
        "density = " << c.synth.density << "      # points per m^2 at 1 m\n"
        "ground_density = " << c.synth.ground_density << "\n"
        "clutter_max = " << c.synth.clutter_max << "\n"
        "noise = " << c.synth.noise[0] << ", " << c.synth.noise[1] << ", " << c.synth.noise[2] << "\n"
        "ground_z = " << c.synth.ground_z << "\n\n"
        "[grid]\n"
        "range = 0, 8, -4, 4, -2, 2   # x_min, x_max, y_min, y_max, z_min, z_max\n"
        "steps = 0.5, 0.5, 0.5\n"
        "bev_downsample = 1\n\n"
        "[anchors]\n"
        "w = " << c.anchors.w << "\nl = " << c.anchors.l << "\nh = " << c.anchors.h
     << "\nz = " << c.anchors.z << "\n\n"
        "[construction]\n"
        "groups = " << c.construction.groups << "\n"
        "top_percent = " << c.construction.top_percent << "\n"
        "removal_radius = " << c.construction.removal_radius << "\n"
        "strategy = add_with_removal   # or replace\n"
        "min_model_points = " << c.construction.min_model_points << "\n"
        "match_within_group = false\n"
        "distance = directed           # or symmetric\n\n"
        "[train]\n"
        "epochs = " << c.train.epochs << "\n"
        "batch_size = " << c.train.batch_size << "\n"
        "learning_rate = " << c.train.learning_rate << "\n"
        "momentum = " << c.train.momentum << "\n"
        "weight_decay = " << c.train.weight_decay << "\n"
        "sigma = " << c.train.sigma << "\n"
        "adaptation = sc               # sc, foreground or none\n"
        "feature = box                 # box or class\n"
        "normalization = per_element   # or per_pixel\n"
        "focal_alpha = " << c.train.focal.alpha << "\n"
        "focal_gamma = " << c.train.focal.gamma << "\n"
        "pos_threshold = " << c.train.pos_threshold << "\n"
        "neg_threshold = " << c.train.neg_threshold << "\n"
        "init_from_teacher = " << (c.train.init_from_teacher ? "true" : "false") << "\n"
        "augment = " << (c.train.augment ? "true" : "false") << "\n"
        "separate_branches = " << (c.separate_branches ? "true" : "false") << "\n\n"
        "[eval]\n"
        "iou_threshold = " << c.eval.iou_threshold << "\n"
        "recall = R40                  # or R11\n"
        "metric = 3d                   # or bev\n"
        "buckets = 0-4, 4-8, 8-12\n"
        "split = val\n"
        "score_threshold = " << c.infer.score_threshold << "\n"
        "nms_threshold = " << c.infer.nms_threshold << "\n";
  return os.str();
}

}  // namespace agonet
