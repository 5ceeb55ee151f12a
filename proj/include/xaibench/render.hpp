#pragma once

#include <stdexcept>

#include "xaibench/bitmask.hpp"
#include "xaibench/scene.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

// Raster footprints per size class, in pixels from the object center.
struct ShapeGeometry {
  int small_radius = 5;
  int large_radius = 8;

  int radius(int size_index) const { return size_index == 0 ? small_radius : large_radius; }
};

struct DegenerateObject : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RenderResult {
  Tensor image;  // 3×H×W, values in [0,1]
  ObjectMaskStore masks;
};

// Flat gray background; objects painted back-to-front (ascending y, ties by
// ascending id so the later id ends up in front). The per-pixel owner after
// painting defines the masks, so they are disjoint by construction.
RenderResult rasterize_scene(const SceneGraph& scene, const ShapeGeometry& geometry);

}  // namespace xaibench
