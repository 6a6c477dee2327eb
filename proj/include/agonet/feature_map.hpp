#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace agonet {

enum class FeatureRole {
  Occupancy,
  ClassPerceptual,
  ClassConceptual,
  BoxPerceptual,
  BoxConceptual,
  Reweight,
};

// Dense channels x height x width grid, row-major with width fastest.
// Height indexes the BEV x axis and width the BEV y axis.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;
  FeatureRole role = FeatureRole::Occupancy;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, FeatureRole r = FeatureRole::Occupancy)
      : channels(c), height(h), width(w),
        values(static_cast<std::size_t>(c) * h * w, 0.0), role(r) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const noexcept { return values.size(); }

  double& at(int c, int h, int w) {
    return values[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  double at(int c, int h, int w) const {
    return values[(static_cast<std::size_t>(c) * height + h) * width + w];
  }

  std::span<double> channel(int c) {
    return std::span<double>(values).subspan(c * plane(), plane());
  }
  std::span<const double> channel(int c) const {
    return std::span<const double>(values).subspan(c * plane(), plane());
  }

  bool same_shape(const FeatureMap& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const FeatureMap&) const = default;
};

}  // namespace agonet
