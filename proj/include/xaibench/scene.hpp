#pragma once

#include <string>
#include <vector>

#include "xaibench/vocab.hpp"

namespace xaibench {

struct SceneObject {
  int id = 0;
  int shape = 0;
  int color = 0;
  int material = 0;
  int size = 0;
  double x = 0.0;  // pixel coordinates of the object center
  double y = 0.0;
  std::string mask_ref;

  int attribute(AttrKind kind) const {
    switch (kind) {
      case AttrKind::Shape: return shape;
      case AttrKind::Color: return color;
      case AttrKind::Material: return material;
      case AttrKind::Size: return size;
    }
    return -1;
  }
};

struct SceneGraph {
  std::vector<SceneObject> objects;
  int height = 0;
  int width = 0;

  // Throws std::invalid_argument on empty scenes, non-contiguous ids,
  // attribute indices outside the vocabulary, or positions out of bounds.
  void validate(const AttributeVocabulary& vocab = AttributeVocabulary::standard()) const;

  int size() const { return static_cast<int>(objects.size()); }
};

std::string scene_to_json(const SceneGraph& scene);
SceneGraph scene_from_json(const std::string& text);

}  // namespace xaibench
