#include "xaibench/render.hpp"

#include <algorithm>
#include <cmath>

namespace xaibench {

namespace {

// Palette ordered like the color vocabulary.
constexpr double kColors[8][3] = {
    {87 / 255.0, 87 / 255.0, 87 / 255.0},     // gray
    {173 / 255.0, 35 / 255.0, 35 / 255.0},    // red
    {42 / 255.0, 75 / 255.0, 215 / 255.0},    // blue
    {29 / 255.0, 105 / 255.0, 20 / 255.0},    // green
    {129 / 255.0, 74 / 255.0, 25 / 255.0},    // brown
    {129 / 255.0, 38 / 255.0, 192 / 255.0},   // purple
    {41 / 255.0, 208 / 255.0, 208 / 255.0},   // cyan
    {255 / 255.0, 238 / 255.0, 51 / 255.0},   // yellow
};

constexpr double kBackground = 0.5;

bool inside_footprint(int shape, int dr, int dc, int radius) {
  switch (shape) {
    case 0:  // cube: filled square
      return std::abs(dr) <= radius && std::abs(dc) <= radius;
    case 1:  // sphere: filled disc
      return dr * dr + dc * dc <= radius * radius;
    default: {  // cylinder: filled upward triangle, apex at the top row
      if (dr < -radius || dr > radius) return false;
      double half = radius * (dr + radius) / (2.0 * radius);
      return std::abs(dc) <= half + 1e-9;
    }
  }
}

}  // namespace

RenderResult rasterize_scene(const SceneGraph& scene, const ShapeGeometry& geometry) {
  RenderResult result;
  result.image = Tensor({3, scene.height, scene.width});
  std::fill(result.image.data.begin(), result.image.data.end(), kBackground);
  std::vector<int> owner(static_cast<std::size_t>(scene.height) * scene.width, -1);

  std::vector<const SceneObject*> order;
  order.reserve(scene.objects.size());
  for (const SceneObject& o : scene.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const SceneObject* a, const SceneObject* b) {
    return std::tie(a->y, a->id) < std::tie(b->y, b->id);
  });

  for (const SceneObject* obj : order) {
    int radius = geometry.radius(obj->size);
    const double* base = kColors[obj->color];
    for (int dr = -radius; dr <= radius; ++dr) {
      int r = obj->y + dr;
      if (r < 0 || r >= scene.height) continue;
      for (int dc = -radius; dc <= radius; ++dc) {
        int c = obj->x + dc;
        if (c < 0 || c >= scene.width) continue;
        if (!inside_footprint(obj->shape, dr, dc, radius)) continue;
        // Metal gets a horizontal sheen; rubber is flat.
        double factor = 1.0;
        if (obj->material == 1) {
          double t = (dc + radius) / (2.0 * radius);
          factor = 0.65 + 0.7 * t;
        }
        owner[static_cast<std::size_t>(r) * scene.width + c] = obj->id;
        for (int ch = 0; ch < 3; ++ch) {
          result.image.at3(ch, r, c) = std::clamp(base[ch] * factor, 0.0, 1.0);
        }
      }
    }
  }

  for (const SceneObject& o : scene.objects) {
    result.masks.masks.emplace(o.id, BitMask(scene.height, scene.width));
  }
  for (int r = 0; r < scene.height; ++r) {
    for (int c = 0; c < scene.width; ++c) {
      int id = owner[static_cast<std::size_t>(r) * scene.width + c];
      if (id >= 0) result.masks.masks.at(id).at(r, c) = 1;
    }
  }
  for (const auto& [id, mask] : result.masks.masks) {
    if (mask.pixel_count() == 0) {
      throw DegenerateObject("object " + std::to_string(id) + " is fully occluded");
    }
  }
  return result;
}

}  // namespace xaibench
