#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agonet/config.hpp"
#include "agonet/detection_math.hpp"
#include "agonet/error.hpp"
#include "agonet/evaluator.hpp"
#include "agonet/geometry.hpp"
#include "agonet/pipeline.hpp"
#include "agonet/synth.hpp"
#include "agonet/voxel_grid.hpp"

namespace py = pybind11;
using namespace agonet;

namespace {

py::array_t<double> points_to_array(const PointCloud& cloud) {
  py::array_t<double> out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{4}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    a(i, 0) = p.x;
    a(i, 1) = p.y;
    a(i, 2) = p.z;
    a(i, 3) = p.intensity;
  }
  return out;
}

PointCloud array_to_points(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 4) throw ShapeError("points must have shape (N, 4)");
  auto a = arr.unchecked<2>();
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(arr.shape(0)));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) cloud.points.push_back({a(i, 0), a(i, 1), a(i, 2), a(i, 3)});
  return cloud;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of agonet";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::enum_<Category>(m, "Category")
      .value("Car", Category::Car)
      .value("Pedestrian", Category::Pedestrian)
      .value("Cyclist", Category::Cyclist)
      .value("Other", Category::Other);
  py::enum_<Difficulty>(m, "Difficulty")
      .value("Easy", Difficulty::Easy)
      .value("Mod", Difficulty::Mod)
      .value("Hard", Difficulty::Hard)
      .value("Unknown", Difficulty::Unknown);
  py::enum_<RecallMode>(m, "RecallMode").value("R11", RecallMode::R11).value("R40", RecallMode::R40);
  py::enum_<MatchMetric>(m, "MatchMetric").value("BEV", MatchMetric::BEV).value("ThreeD", MatchMetric::ThreeD);
  py::enum_<TrainPhase>(m, "TrainPhase")
      .value("Cfg", TrainPhase::Cfg)
      .value("Ago", TrainPhase::Ago)
      .value("Baseline", TrainPhase::Baseline);

  py::class_<Box3D>(m, "Box3D")
      .def(py::init(&Box3D::make), py::arg("cx"), py::arg("cy"), py::arg("cz"), py::arg("w"), py::arg("l"),
           py::arg("h"), py::arg("yaw"))
      .def_readonly("cx", &Box3D::cx)
      .def_readonly("cy", &Box3D::cy)
      .def_readonly("cz", &Box3D::cz)
      .def_readonly("w", &Box3D::w)
      .def_readonly("l", &Box3D::l)
      .def_readonly("h", &Box3D::h)
      .def_readonly("yaw", &Box3D::yaw)
      .def("volume", &Box3D::volume)
      .def(py::self == py::self)
      .def("__repr__", [](const Box3D& b) {
        return "Box3D(cx=" + std::to_string(b.cx) + ", cy=" + std::to_string(b.cy) + ", cz=" + std::to_string(b.cz) +
               ", w=" + std::to_string(b.w) + ", l=" + std::to_string(b.l) + ", h=" + std::to_string(b.h) +
               ", yaw=" + std::to_string(b.yaw) + ")";
      });

  py::class_<LabeledObject>(m, "LabeledObject")
      .def_readonly("box", &LabeledObject::box)
      .def_readonly("category", &LabeledObject::category)
      .def_readonly("difficulty", &LabeledObject::difficulty)
      .def_property_readonly("interior_points",
                             [](const LabeledObject& o) { return points_to_array(o.interior_points); });

  py::class_<Detection>(m, "Detection")
      .def(py::init([](const Box3D& box, double score, Category category) { return Detection{box, score, category}; }),
           py::arg("box"), py::arg("score"), py::arg("category") = Category::Car)
      .def_readonly("box", &Detection::box)
      .def_readonly("score", &Detection::score)
      .def_readonly("category", &Detection::category);

  py::class_<Scene>(m, "Scene")
      .def_readonly("id", &Scene::id)
      .def_readonly("objects", &Scene::objects)
      .def_property_readonly("points", [](const Scene& s) { return points_to_array(s.cloud); });

  m.def("rotated_bev_iou", &rotated_bev_iou, py::arg("a"), py::arg("b"));
  m.def("iou_3d", &iou_3d, py::arg("a"), py::arg("b"));
  m.def("encode_box", &encode_box, py::arg("anchor"), py::arg("gt"));
  m.def("decode_box", &decode_box, py::arg("anchor"), py::arg("deltas"));

  m.def(
      "voxel_occupancy",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points) {
        const FeatureMap bev = to_bev_occupancy(voxelize(array_to_points(points), GridConfig::desk()));
        py::array_t<double> out({bev.channels, bev.height, bev.width});
        std::copy(bev.values.begin(), bev.values.end(), out.mutable_data());
        return out;
      },
      py::arg("points"), "Desk-grid BEV occupancy, shape (z_bins, H, W).");

  m.def(
      "generate_scene",
      [](std::size_t index, std::uint64_t seed) {
        SyntheticSpec spec = PipelineConfig::defaults().synth;
        spec.seed = seed;
        return generate_scene(spec, index);
      },
      py::arg("index"), py::arg("seed") = 0);

  m.def(
      "average_precision",
      [](const std::vector<std::pair<double, bool>>& ranked, std::size_t gt_count, RecallMode mode) {
        std::vector<ScoredMatch> matches;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
          matches.push_back({ranked[i].first, "", i, ranked[i].second});
        }
        return average_precision(matches, gt_count, mode);
      },
      py::arg("scored_matches"), py::arg("gt_count"), py::arg("mode") = RecallMode::R40,
      "AP over (score, is_true_positive) pairs; None when there are no ground truths.");

  m.def(
      "evaluate",
      [](const std::vector<std::vector<Detection>>& dets, const std::vector<std::vector<LabeledObject>>& gts,
         double iou_threshold, MatchMetric metric, RecallMode recall) {
        if (dets.size() != gts.size()) throw ShapeError("evaluate: dets and gts must have one entry per scene");
        std::vector<EvalScene> scenes(dets.size());
        for (std::size_t i = 0; i < dets.size(); ++i) scenes[i] = {std::to_string(i), gts[i], dets[i]};
        EvalConfig c;
        c.iou_threshold = iou_threshold;
        c.metric = metric;
        c.recall = recall;
        return evaluate_ap(scenes, c).ap;
      },
      py::arg("detections"), py::arg("ground_truth"), py::arg("iou_threshold") = 0.7,
      py::arg("metric") = MatchMetric::ThreeD, py::arg("recall") = RecallMode::R40);

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def_static("defaults", &PipelineConfig::defaults)
      .def_static("parse", &parse_pipeline_config, py::arg("text"), py::arg("source") = "<config>")
      .def_static("load", &load_pipeline_config, py::arg("path"))
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("workers", &PipelineConfig::workers)
      .def("set_seed", &PipelineConfig::set_seed);
  m.def("default_config_text", &default_config_text);

  m.def("synth", &cmd_synth, py::arg("config"), py::arg("out"));
  m.def(
      "build_concept", [](const PipelineConfig& c, const std::filesystem::path& out) { cmd_build_concept(c, out); },
      py::arg("config"), py::arg("out"));
  m.def(
      "train", [](const PipelineConfig& c, const std::filesystem::path& out, TrainPhase phase) {
        cmd_train(c, out, phase);
      },
      py::arg("config"), py::arg("out"), py::arg("phase"));
  m.def(
      "evaluate_checkpoint",
      [](const PipelineConfig& c, const std::filesystem::path& out, const std::filesystem::path& checkpoint,
         const std::string& split, const std::string& name, bool conceptual) {
        return cmd_eval(c, out, checkpoint, split, name, conceptual).to_json();
      },
      py::arg("config"), py::arg("out"), py::arg("checkpoint"), py::arg("split") = "val", py::arg("name") = "eval",
      py::arg("conceptual") = false, "Runs evaluation and returns the report as JSON text.");
}
